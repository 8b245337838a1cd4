#include "sepstream/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "sepstream/errors.hpp"

namespace sepstream {

namespace {

const char* origin_name(AngleOrigin origin) {
    return origin == AngleOrigin::horizontal ? "horizontal" : "xpoint";
}

// null for NaN: JSON has no NaN literal and nlohmann would emit null
// anyway; being explicit keeps the intent visible
nlohmann::json json_number(double value) {
    if (std::isnan(value))
        return nullptr;
    return value;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

void finish_out(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out)
        throw IoError("short write to " + path.string());
}

} // namespace

std::string format_double(double value) {
    if (std::isnan(value))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_diffusion_csv(const DiffusionSeries& series, Species species,
                         const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << "species,region_kind,quadrant,segment,angle_lo,angle_hi,property,step,"
           "time_s,M,MSQ,msd,d,n_eff,w_sum\n";
    const size_t steps = series.evaluated_steps();
    for (size_t r = 0; r < series.regions.size(); ++r) {
        const RegionSpec& region = series.regions[r];
        std::string region_cols;
        if (region.kind == RegionSpec::Kind::quadrant_segment)
            region_cols = "quadrant_segment," + std::to_string(region.quadrant) + "," +
                          std::to_string(region.segment) + ",,";
        else
            region_cols = "angle_range,,," + format_double(region.angle_lo) + "," +
                          format_double(region.angle_hi);
        for (size_t p = 0; p < series.properties.size(); ++p) {
            for (uint64_t step = 1; step <= steps; ++step) {
                const DiffusionCell& cell = series.at(r, p, step);
                out << to_string(species) << ',' << region_cols << ','
                    << series.properties[p] << ',' << step << ','
                    << format_double(series.times[step - 1]) << ','
                    << format_double(cell.m) << ',' << format_double(cell.msq) << ','
                    << format_double(cell.msd) << ',' << format_double(cell.d) << ','
                    << cell.n_eff << ',' << format_double(cell.w_sum) << '\n';
            }
        }
    }
    finish_out(out, path);
}

void write_diffusion_json(const DiffusionSeries& series, Species species,
                          const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["species"] = to_string(species);
    doc["properties"] = series.properties;
    doc["region_counts"] = series.region_counts;
    doc["times"] = series.times;

    nlohmann::json regions = nlohmann::json::array();
    for (const RegionSpec& region : series.regions) {
        nlohmann::json r;
        r["origin"] = origin_name(region.origin);
        if (region.kind == RegionSpec::Kind::quadrant_segment) {
            r["kind"] = "quadrant_segment";
            r["quadrant"] = region.quadrant;
            r["segment"] = region.segment;
        } else {
            r["kind"] = "angle_range";
            r["angle_lo"] = region.angle_lo;
            r["angle_hi"] = region.angle_hi;
        }
        regions.push_back(std::move(r));
    }
    doc["regions"] = std::move(regions);

    const size_t steps = series.evaluated_steps();
    nlohmann::json cells = nlohmann::json::array();
    for (size_t r = 0; r < series.regions.size(); ++r) {
        for (size_t p = 0; p < series.properties.size(); ++p) {
            for (uint64_t step = 1; step <= steps; ++step) {
                const DiffusionCell& cell = series.at(r, p, step);
                nlohmann::json c;
                c["region"] = r;
                c["property"] = series.properties[p];
                c["step"] = step;
                c["time_s"] = series.times[step - 1];
                c["defined"] = cell.defined;
                c["M"] = json_number(cell.m);
                c["MSQ"] = json_number(cell.msq);
                c["msd"] = json_number(cell.msd);
                c["d"] = json_number(cell.d);
                c["n_eff"] = cell.n_eff;
                c["w_sum"] = cell.w_sum;
                cells.push_back(std::move(c));
            }
        }
    }
    doc["cells"] = std::move(cells);

    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
    finish_out(out, path);
}

} // namespace sepstream
