// Command-line front end: run the coupled source+analysis workflow,
// recompute diffusion series from a stored trajectory file, or
// validate a config without running anything.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sepstream/diffusion.hpp"
#include "sepstream/errors.hpp"
#include "sepstream/export.hpp"
#include "sepstream/run_config.hpp"
#include "sepstream/runner.hpp"
#include "sepstream/trajstore.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_interrupt(int) {
    g_stop.store(true);
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string regions_flag;
    std::string origin_name = "horizontal";
    uint64_t seed = 0;
    bool seed_given = false;
    size_t workers = 0;
};

sepstream::AngleOrigin origin_from_flag(const std::string& name) {
    if (name == "horizontal")
        return sepstream::AngleOrigin::horizontal;
    if (name == "xpoint")
        return sepstream::AngleOrigin::xpoint;
    throw sepstream::ConfigError("--origin must be 'horizontal' or 'xpoint', got '" +
                                 name + "'");
}

int cmd_run(const CommonFlags& flags) {
    sepstream::RunConfig cfg = sepstream::load_run_config(flags.config_path);
    if (!flags.out_dir.empty())
        cfg.out_dir = flags.out_dir;
    if (flags.seed_given)
        for (auto& src : cfg.species_runs)
            src.seed = flags.seed;
    if (flags.workers > 0)
        cfg.pipeline.worker_count = flags.workers;
    if (!flags.regions_flag.empty())
        cfg.regions = sepstream::parse_regions_flag(flags.regions_flag,
                                                    origin_from_flag(flags.origin_name));

    std::signal(SIGINT, handle_interrupt);
    std::signal(SIGTERM, handle_interrupt);
    const sepstream::RunOutcome outcome = sepstream::run_workflow(cfg, &g_stop);

    for (const auto& s : outcome.species) {
        std::cout << sepstream::to_string(s.species) << ": "
                  << s.stats.frames_consumed << " frames, " << s.stats.seed_count
                  << " seeds, peak retained " << s.stats.peak_retained_records
                  << " (bound " << s.stats.seed_count + s.stats.max_frame_records
                  << ")\n";
        std::cout << "  trajectory: " << s.trajectory_path.string() << " ("
                  << s.trajectory_bytes << " bytes)\n";
        std::cout << "  diffusion:  " << s.csv_path.string() << ", "
                  << s.json_path.string() << "\n";
    }
    std::cout << "report: " << outcome.report_path.string() << "\n";
    if (g_stop.load())
        std::cout << "interrupted: outputs cover the steps published before the stop\n";
    return sepstream::kExitOk;
}

int cmd_diffuse(const CommonFlags& flags, const std::string& trajectory_path) {
    const sepstream::TrajectoryDataset dataset =
        sepstream::read_trajectory_file(trajectory_path);

    sepstream::DiffusionConfig dc;
    std::filesystem::path out_dir = flags.out_dir.empty() ? "out" : flags.out_dir;
    if (!flags.config_path.empty()) {
        const sepstream::RunConfig cfg = sepstream::load_run_config(flags.config_path);
        dc.regions = cfg.regions;
        dc.properties = cfg.diffusion_properties;
        dc.dpdrs = cfg.dpdrs;
        dc.model = cfg.model;
        dc.worker_count = cfg.diffusion_workers;
        if (flags.out_dir.empty())
            out_dir = cfg.out_dir;
    } else {
        const auto origin = origin_from_flag(flags.origin_name);
        for (int s = 0; s < sepstream::kSegmentsPerQuadrant; ++s)
            dc.regions.push_back(sepstream::RegionSpec::quad_segment(3, s, origin));
        // default to whichever of the four formula properties the file has
        for (const char* p : {"psi", "E", "vPar", "r"})
            if (std::find(dataset.properties.begin(), dataset.properties.end(), p) !=
                dataset.properties.end())
                dc.properties.push_back(p);
        if (dc.properties.empty())
            throw sepstream::ConfigError(
                "trajectory file tracks none of psi, E, vPar, r");
    }
    if (!flags.regions_flag.empty()) {
        dc.regions = sepstream::parse_regions_flag(flags.regions_flag,
                                                   origin_from_flag(flags.origin_name));
        dc.dpdrs.clear();
    }
    if (flags.workers > 0)
        dc.worker_count = flags.workers;
    dc.dt = dataset.dt;
    if (!(dc.dt > 0.0))
        throw sepstream::ConfigError("trajectory file has no positive dt");

    const sepstream::DiffusionSeries series = sepstream::compute_series(dataset, dc);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw sepstream::IoError("cannot create output directory " + out_dir.string() +
                                 ": " + ec.message());
    const std::string name = sepstream::to_string(dataset.species);
    const auto csv_path = out_dir / ("diffusion_" + name + ".csv");
    const auto json_path = out_dir / ("diffusion_" + name + ".json");
    sepstream::write_diffusion_csv(series, dataset.species, csv_path);
    sepstream::write_diffusion_json(series, dataset.species, json_path);
    std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
    return sepstream::kExitOk;
}

int cmd_validate(const std::string& config_path) {
    const sepstream::RunConfig cfg = sepstream::load_run_config(config_path);
    const auto bad = sepstream::validate_run_config(cfg);
    if (!bad.empty()) {
        for (const auto& msg : bad)
            std::cerr << "error: " << msg << "\n";
        return sepstream::kExitConfig;
    }

    std::cout << "config ok: " << cfg.species_runs.size() << " species, "
              << cfg.regions.size() << " regions, " << cfg.pipeline.worker_count
              << " pipeline workers\n";
    for (const auto& src : cfg.species_runs) {
        // seed fraction: |psi - 1| <= threshold over the uniform init band
        const double t = cfg.pipeline.threshold;
        const double lo = src.psi_init_lo, hi = src.psi_init_hi;
        double fraction;
        if (hi > lo)
            fraction = std::clamp((std::min(hi, 1.0 + t) - std::max(lo, 1.0 - t)) /
                                      (hi - lo),
                                  0.0, 1.0);
        else
            fraction = std::abs(lo - 1.0) <= t ? 1.0 : 0.0;
        const double seeds_est = fraction * static_cast<double>(src.n_particles);
        // growth compounds per step; losses make this an upper estimate
        const double frame_est =
            static_cast<double>(src.n_particles) *
            std::pow(1.0 + src.growth_rate, static_cast<double>(src.n_steps - 1));
        std::cout << sepstream::to_string(src.species) << ": ~"
                  << static_cast<uint64_t>(std::llround(seeds_est)) << " seeds of "
                  << src.n_particles << " particles; retained-record bound ~"
                  << static_cast<uint64_t>(std::llround(seeds_est + frame_est))
                  << " records over " << src.n_steps << " steps\n";
    }
    return sepstream::kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming separatrix-diffusion workflow"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string trajectory_path;

    CLI::App* run = app.add_subcommand(
        "run", "Simulate, analyze and export everything per the config");
    run->add_option("--config", flags.config_path, "Run configuration (JSON)")
        ->required();
    run->add_option("--out-dir", flags.out_dir, "Override the configured output dir");
    run->add_option("--seed", flags.seed, "Override every species' RNG seed");
    run->add_option("--workers", flags.workers, "Override pipeline worker count");
    run->add_option("--regions", flags.regions_flag,
                    "Override regions: quadrant=Q or angles=LO,HI");
    run->add_option("--origin", flags.origin_name,
                    "Angle origin for --regions: horizontal or xpoint");

    CLI::App* diffuse = app.add_subcommand(
        "diffuse", "Recompute diffusion series from a trajectory file");
    diffuse->add_option("--trajectory", trajectory_path, "Trajectory file (.strj)")
        ->required();
    diffuse->add_option("--config", flags.config_path,
                        "Take regions/properties/geometry from this config");
    diffuse->add_option("--out-dir", flags.out_dir, "Output directory (default out)");
    diffuse->add_option("--regions", flags.regions_flag,
                        "Regions: quadrant=Q or angles=LO,HI (angles accept 0.9pi)");
    diffuse->add_option("--origin", flags.origin_name,
                        "Angle origin: horizontal or xpoint");
    diffuse->add_option("--workers", flags.workers, "Region-parallel worker count");

    CLI::App* validate =
        app.add_subcommand("validate", "Check a config and print derived estimates");
    validate->add_option("--config", flags.config_path, "Run configuration (JSON)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? sepstream::kExitOk : sepstream::kExitConfig;
    }
    flags.seed_given = run->count("--seed") > 0;

    try {
        if (run->parsed())
            return cmd_run(flags);
        if (diffuse->parsed())
            return cmd_diffuse(flags, trajectory_path);
        return cmd_validate(flags.config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sepstream::exit_code_for(e);
    }
}
