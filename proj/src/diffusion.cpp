#include "sepstream/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "sepstream/errors.hpp"

namespace sepstream {

namespace {

constexpr std::string_view kDiffusionProperties[] = {"psi", "E", "vPar", "r"};

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

} // namespace

bool is_diffusion_property(std::string_view name) {
    return std::find(std::begin(kDiffusionProperties), std::end(kDiffusionProperties),
                     name) != std::end(kDiffusionProperties);
}

void DiffusionConfig::validate() const {
    if (regions.empty())
        throw ConfigError("diffusion: no regions configured");
    if (properties.empty())
        throw ConfigError("diffusion: no properties configured");
    for (const auto& p : properties)
        if (!is_diffusion_property(p))
            throw ConfigError("diffusion: property '" + p +
                              "' is not one of psi, E, vPar, r");
    if (!(dt > 0.0))
        throw ConfigError("diffusion: dt must be > 0");
    if (!dpdrs.empty() && dpdrs.size() != regions.size())
        throw ConfigError("diffusion: dpdrs list must match the region list");
    for (double v : dpdrs)
        if (!(v > 0.0))
            throw ConfigError("diffusion: dpdrs must be > 0");
    if (worker_count < 1)
        throw ConfigError("diffusion: worker_count must be >= 1");
    for (const auto& r : regions) {
        if (r.kind == RegionSpec::Kind::quadrant_segment) {
            if (r.quadrant < 0 || r.quadrant >= kQuadrants)
                throw ConfigError("diffusion: quadrant out of range");
            if (r.segment < 0 || r.segment >= kSegmentsPerQuadrant)
                throw ConfigError("diffusion: segment out of range");
        }
    }
}

const DiffusionCell& DiffusionSeries::at(size_t region, size_t property,
                                         uint64_t step) const {
    const size_t steps = times.size();
    return cells[(region * properties.size() + property) * steps + (step - 1)];
}

std::vector<std::vector<size_t>> assign_regions(const TrajectoryDataset& dataset,
                                                const SeparatrixModel& model,
                                                const std::vector<RegionSpec>& regions) {
    const size_t theta_idx = dataset.property_index("theta");
    const size_t S = dataset.step_count();
    std::vector<std::vector<size_t>> members(regions.size());
    for (size_t row = 0; row < dataset.particle_count(); ++row) {
        if (S == 0 || !dataset.present(row, 0))
            continue;
        const double theta = dataset.data[theta_idx][row * S];
        for (size_t r = 0; r < regions.size(); ++r) {
            const RegionSpec& spec = regions[r];
            const double angle = spec.origin == AngleOrigin::horizontal
                                     ? wrap_angle(theta)
                                     : wrap_angle(theta - model.xpoint_angle);
            if (spec.kind == RegionSpec::Kind::quadrant_segment) {
                const auto [q, s] = region_of(angle);
                if (q == spec.quadrant && s == spec.segment)
                    members[r].push_back(row);
            } else if (in_angle_range(angle, spec)) {
                members[r].push_back(row);
            }
        }
    }
    return members;
}

std::optional<double> displacement(const TrajectoryDataset& dataset, size_t row,
                                   std::string_view property, uint64_t step) {
    if (!dataset.present(row, 0) || !dataset.present(row, step))
        return std::nullopt;
    const auto& grid = dataset.data[dataset.property_index(property)];
    const size_t base = row * dataset.step_count();
    return grid[base + step] - grid[base];
}

MomentResult weighted_moments(const TrajectoryDataset& dataset,
                              const std::vector<size_t>& rows,
                              std::string_view property, uint64_t step) {
    const auto& grid = dataset.data[dataset.property_index(property)];
    const auto& w0 = dataset.data[dataset.property_index("w0")];
    const size_t S = dataset.step_count();

    KahanSum num_m, num_sq, den;
    uint64_t n_eff = 0;
    for (size_t row : rows) {
        if (!dataset.present(row, 0) || !dataset.present(row, step))
            continue;
        const size_t base = row * S;
        const double w = w0[base + step];
        if (w == -1.0)
            continue;
        const double delta = grid[base + step] - grid[base];
        num_m.add(delta * w);
        num_sq.add(delta * delta * w);
        den.add(w);
        ++n_eff;
    }

    MomentResult result;
    result.w_sum = den.sum;
    result.n_eff = n_eff;
    if (den.sum == 0.0)
        return result;  // gap, not an error
    result.defined = true;
    result.m = num_m.sum / den.sum;
    result.msq = num_sq.sum / den.sum;
    return result;
}

double diffusion_coefficient(double m, double msq, std::string_view property,
                             uint64_t step, double dt, double dpdrs) {
    double d = (msq - m * m) / (dt * static_cast<double>(step));
    if (property == "psi")
        d /= dpdrs * dpdrs;
    return d;
}

DiffusionSeries compute_series(const TrajectoryDataset& dataset,
                               const DiffusionConfig& config) {
    config.validate();
    for (const auto& p : config.properties)
        dataset.property_index(p);  // fail early with the property name
    dataset.property_index("w0");

    DiffusionSeries series;
    series.regions = config.regions;
    series.properties = config.properties;
    const size_t S = dataset.step_count();
    if (S >= 2)
        series.times.assign(dataset.times.begin() + 1, dataset.times.end());

    const auto members = assign_regions(dataset, config.model, config.regions);
    series.region_counts.reserve(members.size());
    for (const auto& rows : members)
        series.region_counts.push_back(rows.size());

    const size_t n_regions = config.regions.size();
    const size_t n_props = config.properties.size();
    const size_t n_steps = series.times.size();
    series.cells.assign(n_regions * n_props * n_steps, DiffusionCell{});

    // cells are disjoint per region, so regions can fan out freely
    const auto compute_region = [&](size_t r) {
        const double dpdrs = config.dpdrs.empty() ? 1.0 : config.dpdrs[r];
        for (size_t p = 0; p < n_props; ++p) {
            const std::string& prop = config.properties[p];
            for (uint64_t step = 1; step <= n_steps; ++step) {
                const MomentResult mom = weighted_moments(dataset, members[r], prop, step);
                DiffusionCell& cell =
                    series.cells[(r * n_props + p) * n_steps + (step - 1)];
                cell.w_sum = mom.w_sum;
                cell.n_eff = mom.n_eff;
                if (!mom.defined)
                    continue;
                cell.defined = true;
                cell.m = mom.m;
                cell.msq = mom.msq;
                cell.msd = mom.msq - mom.m * mom.m;
                cell.d = diffusion_coefficient(mom.m, mom.msq, prop, step, config.dt,
                                               dpdrs);
            }
        }
    };

    const size_t workers = std::min(config.worker_count, n_regions);
    if (workers <= 1) {
        for (size_t r = 0; r < n_regions; ++r)
            compute_region(r);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (size_t k = 0; k < workers; ++k)
            threads.emplace_back([&] {
                for (size_t r = next.fetch_add(1); r < n_regions;
                     r = next.fetch_add(1))
                    compute_region(r);
            });
        for (auto& t : threads)
            t.join();
    }
    return series;
}

} // namespace sepstream
