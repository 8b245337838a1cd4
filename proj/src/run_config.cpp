#include "sepstream/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "sepstream/errors.hpp"
#include "sepstream/particle.hpp"

namespace sepstream {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError(context + ": unknown key '" + key + "'");
    }
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number_at(const json& obj, const char* key, double fallback,
                 const std::string& context) {
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (!v->is_number())
        throw ConfigError(context + "." + key + " must be a number");
    return v->get<double>();
}

uint64_t count_at(const json& obj, const char* key, uint64_t fallback,
                  const std::string& context) {
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (v->is_number_unsigned())
        return v->get<uint64_t>();
    if (v->is_number_integer() && v->get<int64_t>() >= 0)
        return static_cast<uint64_t>(v->get<int64_t>());
    throw ConfigError(context + "." + key + " must be a non-negative integer");
}

std::string string_at(const json& obj, const char* key, const std::string& fallback,
                      const std::string& context) {
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (!v->is_string())
        throw ConfigError(context + "." + key + " must be a string");
    return v->get<std::string>();
}

// angle fields accept 1.5707, "0.5pi" or "0.5π"
double angle_at(const json& obj, const char* key, double fallback,
                const std::string& context) {
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (v->is_number())
        return v->get<double>();
    if (v->is_string())
        return parse_angle(v->get<std::string>());
    throw ConfigError(context + "." + key + " must be a number or a \"...pi\" string");
}

AngleOrigin origin_from_string(const std::string& name, const std::string& context) {
    if (name == "horizontal")
        return AngleOrigin::horizontal;
    if (name == "xpoint")
        return AngleOrigin::xpoint;
    throw ConfigError(context + ": origin must be 'horizontal' or 'xpoint', got '" +
                      name + "'");
}

RegionSpec region_from_json(const json& obj, const std::string& context) {
    if (!obj.is_object())
        throw ConfigError(context + " must be an object");
    check_keys(obj, {"quadrant", "segment", "angle_lo", "angle_hi", "origin"}, context);
    const bool has_quadrant = find(obj, "quadrant") || find(obj, "segment");
    const bool has_angles = find(obj, "angle_lo") || find(obj, "angle_hi");
    if (has_quadrant == has_angles)
        throw ConfigError(context +
                          ": give either quadrant+segment or angle_lo+angle_hi");
    const AngleOrigin origin =
        origin_from_string(string_at(obj, "origin", "horizontal", context), context);
    if (has_quadrant) {
        if (!find(obj, "quadrant") || !find(obj, "segment"))
            throw ConfigError(context + ": quadrant and segment are both required");
        return RegionSpec::quad_segment(
            static_cast<int>(count_at(obj, "quadrant", 0, context)),
            static_cast<int>(count_at(obj, "segment", 0, context)), origin);
    }
    if (!find(obj, "angle_lo") || !find(obj, "angle_hi"))
        throw ConfigError(context + ": angle_lo and angle_hi are both required");
    return RegionSpec::angles(angle_at(obj, "angle_lo", 0.0, context),
                              angle_at(obj, "angle_hi", 0.0, context), origin);
}

std::vector<std::string> string_list_at(const json& obj, const char* key,
                                        std::vector<std::string> fallback,
                                        const std::string& context) {
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (!v->is_array())
        throw ConfigError(context + "." + key + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : *v) {
        if (!item.is_string())
            throw ConfigError(context + "." + key + " must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

SourceConfig source_from_json(const json& obj, Species species,
                              const std::string& context) {
    if (!obj.is_object())
        throw ConfigError(context + " must be an object");
    check_keys(obj,
               {"n_particles", "n_steps", "dt", "sigma_psi", "sigma_energy",
                "sigma_vpar", "drift_psi", "loss_psi", "seed", "growth_rate",
                "psi_init_lo", "psi_init_hi", "theta_init_lo", "theta_init_hi",
                "zeta_init_lo", "zeta_init_hi", "energy_init_lo", "energy_init_hi",
                "vpar_init_lo", "vpar_init_hi", "rotation_theta", "rotation_zeta",
                "minor_radius_scale"},
               context);
    SourceConfig src;
    src.species = species;
    src.n_particles = count_at(obj, "n_particles", src.n_particles, context);
    src.n_steps = count_at(obj, "n_steps", src.n_steps, context);
    src.dt = number_at(obj, "dt", src.dt, context);
    src.sigma_psi = number_at(obj, "sigma_psi", src.sigma_psi, context);
    src.sigma_energy = number_at(obj, "sigma_energy", src.sigma_energy, context);
    src.sigma_vpar = number_at(obj, "sigma_vpar", src.sigma_vpar, context);
    src.drift_psi = number_at(obj, "drift_psi", src.drift_psi, context);
    src.loss_psi = number_at(obj, "loss_psi", src.loss_psi, context);
    src.seed = count_at(obj, "seed", src.seed, context);
    src.growth_rate = number_at(obj, "growth_rate", src.growth_rate, context);
    src.psi_init_lo = number_at(obj, "psi_init_lo", src.psi_init_lo, context);
    src.psi_init_hi = number_at(obj, "psi_init_hi", src.psi_init_hi, context);
    src.theta_init_lo = angle_at(obj, "theta_init_lo", src.theta_init_lo, context);
    src.theta_init_hi = angle_at(obj, "theta_init_hi", src.theta_init_hi, context);
    src.zeta_init_lo = angle_at(obj, "zeta_init_lo", src.zeta_init_lo, context);
    src.zeta_init_hi = angle_at(obj, "zeta_init_hi", src.zeta_init_hi, context);
    src.energy_init_lo = number_at(obj, "energy_init_lo", src.energy_init_lo, context);
    src.energy_init_hi = number_at(obj, "energy_init_hi", src.energy_init_hi, context);
    src.vpar_init_lo = number_at(obj, "vpar_init_lo", src.vpar_init_lo, context);
    src.vpar_init_hi = number_at(obj, "vpar_init_hi", src.vpar_init_hi, context);
    src.rotation_theta = angle_at(obj, "rotation_theta", src.rotation_theta, context);
    src.rotation_zeta = angle_at(obj, "rotation_zeta", src.rotation_zeta, context);
    src.minor_radius_scale =
        number_at(obj, "minor_radius_scale", src.minor_radius_scale, context);
    return src;
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("config: top level must be a JSON object");
    check_keys(doc, {"out_dir", "staging", "pipeline", "geometry", "diffusion",
                     "species"},
               "config");

    RunConfig cfg;
    cfg.out_dir = string_at(doc, "out_dir", cfg.out_dir.string(), "config");

    if (const json* staging = find(doc, "staging")) {
        check_keys(*staging, {"mode", "capacity", "path"}, "staging");
        const std::string mode = string_at(*staging, "mode", "in_process", "staging");
        if (mode == "in_process")
            cfg.staging.mode = StageEndpoint::Mode::in_process;
        else if (mode == "file")
            cfg.staging.mode = StageEndpoint::Mode::file;
        else
            throw ConfigError("staging.mode must be 'in_process' or 'file', got '" +
                              mode + "'");
        cfg.staging.capacity =
            count_at(*staging, "capacity", cfg.staging.capacity, "staging");
        cfg.staging.path = string_at(*staging, "path", "", "staging");
    }

    if (const json* pipeline = find(doc, "pipeline")) {
        check_keys(*pipeline,
                   {"threshold", "worker_count", "properties", "read_timeout_s"},
                   "pipeline");
        cfg.pipeline.threshold =
            number_at(*pipeline, "threshold", cfg.pipeline.threshold, "pipeline");
        cfg.pipeline.worker_count = count_at(*pipeline, "worker_count",
                                             cfg.pipeline.worker_count, "pipeline");
        cfg.pipeline.properties = string_list_at(
            *pipeline, "properties", cfg.pipeline.properties, "pipeline");
        cfg.pipeline.read_timeout_s = number_at(
            *pipeline, "read_timeout_s", cfg.pipeline.read_timeout_s, "pipeline");
    }

    if (const json* geometry = find(doc, "geometry")) {
        check_keys(*geometry, {"center_r", "center_z", "radius", "xpoint_angle"},
                   "geometry");
        cfg.model.center_r = number_at(*geometry, "center_r", cfg.model.center_r,
                                       "geometry");
        cfg.model.center_z = number_at(*geometry, "center_z", cfg.model.center_z,
                                       "geometry");
        cfg.model.radius = number_at(*geometry, "radius", cfg.model.radius, "geometry");
        cfg.model.xpoint_angle =
            angle_at(*geometry, "xpoint_angle", cfg.model.xpoint_angle, "geometry");
    }

    if (const json* diffusion = find(doc, "diffusion")) {
        check_keys(*diffusion, {"properties", "regions", "dpdrs", "worker_count"},
                   "diffusion");
        cfg.diffusion_properties = string_list_at(
            *diffusion, "properties", cfg.diffusion_properties, "diffusion");
        if (const json* regions = find(*diffusion, "regions")) {
            if (!regions->is_array())
                throw ConfigError("diffusion.regions must be an array");
            for (size_t i = 0; i < regions->size(); ++i)
                cfg.regions.push_back(region_from_json(
                    (*regions)[i], "diffusion.regions[" + std::to_string(i) + "]"));
        }
        if (const json* dpdrs = find(*diffusion, "dpdrs")) {
            if (!dpdrs->is_array())
                throw ConfigError("diffusion.dpdrs must be an array of numbers");
            for (const auto& v : *dpdrs) {
                if (!v.is_number())
                    throw ConfigError("diffusion.dpdrs must be an array of numbers");
                cfg.dpdrs.push_back(v.get<double>());
            }
        }
        cfg.diffusion_workers =
            count_at(*diffusion, "worker_count", cfg.diffusion_workers, "diffusion");
    }

    const json* species = find(doc, "species");
    if (!species || !species->is_object() || species->empty())
        throw ConfigError("config: a non-empty 'species' object is required");
    for (const auto& [name, body] : species->items()) {
        const Species sp = species_from_string(name);  // rejects unknown names
        cfg.species_runs.push_back(source_from_json(body, sp, "species." + name));
    }
    // deterministic order regardless of document order
    std::sort(cfg.species_runs.begin(), cfg.species_runs.end(),
              [](const SourceConfig& a, const SourceConfig& b) {
                  return static_cast<int>(a.species) < static_cast<int>(b.species);
              });

    if (cfg.regions.empty())
        for (int s = 0; s < kSegmentsPerQuadrant; ++s)
            cfg.regions.push_back(RegionSpec::quad_segment(3, s));

    cfg.canonical_json = doc.dump();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    if (in.bad())
        throw IoError("cannot read config file " + path.string());
    return parse_run_config(text.str());
}

std::vector<std::string> validate_run_config(const RunConfig& cfg) {
    std::vector<std::string> bad;
    const auto complain = [&](const std::string& msg) { bad.push_back(msg); };

    if (cfg.out_dir.empty())
        complain("out_dir must not be empty");
    if (cfg.staging.capacity < 1)
        complain("staging.capacity must be >= 1");
    if (cfg.staging.mode == StageEndpoint::Mode::file && cfg.staging.path.empty())
        complain("staging.path is required for file mode");

    if (cfg.pipeline.threshold < 0.0)
        complain("pipeline.threshold must be >= 0");
    if (cfg.pipeline.worker_count < 1)
        complain("pipeline.worker_count must be >= 1");
    if (cfg.pipeline.read_timeout_s <= 0.0)
        complain("pipeline.read_timeout_s must be > 0");
    if (cfg.pipeline.properties.empty())
        complain("pipeline.properties must not be empty");
    for (const auto& p : cfg.pipeline.properties)
        if (p == "id" || !is_known_property(p))
            complain("pipeline.properties: unknown property '" + p + "'");
    const auto tracked = [&](std::string_view name) {
        return std::find(cfg.pipeline.properties.begin(), cfg.pipeline.properties.end(),
                         name) != cfg.pipeline.properties.end();
    };
    if (!tracked("theta"))
        complain("pipeline.properties must include 'theta' (region assignment)");
    if (!tracked("w0"))
        complain("pipeline.properties must include 'w0' (diffusion weighting)");

    if (!(cfg.model.radius > 0.0))
        complain("geometry.radius must be > 0");

    if (cfg.regions.empty())
        complain("diffusion.regions must not be empty");
    for (size_t i = 0; i < cfg.regions.size(); ++i) {
        const RegionSpec& r = cfg.regions[i];
        const std::string ctx = "diffusion.regions[" + std::to_string(i) + "]";
        if (r.kind == RegionSpec::Kind::quadrant_segment) {
            if (r.quadrant < 0 || r.quadrant >= kQuadrants)
                complain(ctx + ".quadrant must be 0..3");
            if (r.segment < 0 || r.segment >= kSegmentsPerQuadrant)
                complain(ctx + ".segment must be 0..7");
        } else {
            if (!(r.angle_lo >= 0.0 && r.angle_lo < kTwoPi))
                complain(ctx + ".angle_lo must lie in [0, 2pi)");
            if (!(r.angle_hi >= 0.0 && r.angle_hi < kTwoPi))
                complain(ctx + ".angle_hi must lie in [0, 2pi)");
        }
    }
    if (!cfg.dpdrs.empty() && cfg.dpdrs.size() != cfg.regions.size())
        complain("diffusion.dpdrs must list one value per region");
    for (double v : cfg.dpdrs)
        if (!(v > 0.0))
            complain("diffusion.dpdrs values must be > 0");
    if (cfg.diffusion_properties.empty())
        complain("diffusion.properties must not be empty");
    for (const auto& p : cfg.diffusion_properties) {
        if (!is_diffusion_property(p))
            complain("diffusion.properties: '" + p + "' is not one of psi, E, vPar, r");
        else if (!tracked(p))
            complain("diffusion.properties: '" + p +
                     "' is not tracked by pipeline.properties");
    }
    if (cfg.diffusion_workers < 1)
        complain("diffusion.worker_count must be >= 1");

    if (cfg.species_runs.empty())
        complain("at least one species is required");
    for (const auto& src : cfg.species_runs) {
        const std::string ctx = std::string("species.") + to_string(src.species);
        for (const auto& msg : src.validate_messages())
            complain(ctx + ": " + msg);
        if (cfg.pipeline.worker_count > src.n_particles)
            complain(ctx + ": pipeline.worker_count " +
                     std::to_string(cfg.pipeline.worker_count) + " exceeds n_particles " +
                     std::to_string(src.n_particles) +
                     " (every worker needs at least one seed)");
    }
    for (size_t i = 1; i < cfg.species_runs.size(); ++i)
        if (cfg.species_runs[i].species == cfg.species_runs[i - 1].species)
            complain("species listed twice");
    return bad;
}

void require_valid(const RunConfig& cfg) {
    const auto bad = validate_run_config(cfg);
    if (bad.empty())
        return;
    std::string joined = "config invalid: " + bad.front();
    for (size_t i = 1; i < bad.size(); ++i)
        joined += "; " + bad[i];
    throw ConfigError(joined);
}

double parse_angle(const std::string& text) {
    std::string body = text;
    // trim
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front())))
        body.erase(body.begin());
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back())))
        body.pop_back();
    double factor = 1.0;
    if (body.size() >= 2 && body.compare(body.size() - 2, 2, "pi") == 0) {
        factor = std::numbers::pi;
        body.resize(body.size() - 2);
    } else if (body.size() >= 2 &&
               body.compare(body.size() - 2, 2, "π") == 0) {  // UTF-8 pi
        factor = std::numbers::pi;
        body.resize(body.size() - 2);
    }
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back())))
        body.pop_back();  // "0.25 pi" leaves a gap before the suffix
    if (body.empty() && factor != 1.0)
        return factor;  // plain "pi"
    char* end = nullptr;
    const double value = std::strtod(body.c_str(), &end);
    if (end != body.c_str() + body.size() || body.empty())
        throw ConfigError("cannot parse angle '" + text + "'");
    return value * factor;
}

std::vector<RegionSpec> parse_regions_flag(const std::string& flag,
                                           AngleOrigin origin) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--regions expects quadrant=Q or angles=LO,HI, got '" + flag +
                          "'");
    const std::string kind = flag.substr(0, eq);
    const std::string rest = flag.substr(eq + 1);
    std::vector<RegionSpec> regions;
    if (kind == "quadrant") {
        char* end = nullptr;
        const long q = std::strtol(rest.c_str(), &end, 10);
        if (end != rest.c_str() + rest.size() || rest.empty() || q < 0 ||
            q >= kQuadrants)
            throw ConfigError("--regions quadrant=Q needs Q in 0..3, got '" + rest +
                              "'");
        for (int s = 0; s < kSegmentsPerQuadrant; ++s)
            regions.push_back(RegionSpec::quad_segment(static_cast<int>(q), s, origin));
        return regions;
    }
    if (kind == "angles") {
        const auto comma = rest.find(',');
        if (comma == std::string::npos)
            throw ConfigError("--regions angles=LO,HI needs two angles, got '" + rest +
                              "'");
        regions.push_back(RegionSpec::angles(parse_angle(rest.substr(0, comma)),
                                             parse_angle(rest.substr(comma + 1)),
                                             origin));
        return regions;
    }
    throw ConfigError("--regions expects quadrant=Q or angles=LO,HI, got '" + flag +
                      "'");
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t hash = 0xcbf29ce484222325ull;
    for (const char c : bytes) {
        hash ^= static_cast<uint8_t>(c);
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string hex64(uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

} // namespace sepstream
