#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sepstream/geometry.hpp"
#include "sepstream/trajstore.hpp"

namespace sepstream {

// Per-region weighted displacement statistics along the separatrix.
// For each region, tracked property p and step N >= 1:
//   M(p)   = sum(delta * w0) / sum(w0)        delta = p(N) - p(0)
//   MSQ(p) = sum(delta^2 * w0) / sum(w0)
//   msd    = MSQ - M^2
//   d      = msd / (dt * N), divided by dpdrs^2 as well for psi
// Sums run over the region's particles that are present at steps 0 and
// N with w0(N) != -1; the weight is the step-N w0. Regions are fixed by
// step-0 poloidal angle for the whole run.

// the property set the formulas are defined for
bool is_diffusion_property(std::string_view name);

struct DiffusionConfig {
    std::vector<RegionSpec> regions;
    std::vector<std::string> properties;  // subset of {psi, E, vPar, r}
    double dt = 0.0;                      // s, denominator time base
    // per-region normalization for d(psi); empty means all 1.0
    std::vector<double> dpdrs;
    SeparatrixModel model;
    size_t worker_count = 1;  // regions computed in parallel

    void validate() const;  // throws ConfigError
};

struct MomentResult {
    bool defined = false;  // false when sum(w0) == 0 (no contributors)
    double m = std::numeric_limits<double>::quiet_NaN();
    double msq = std::numeric_limits<double>::quiet_NaN();
    double w_sum = 0.0;
    uint64_t n_eff = 0;
};

struct DiffusionCell {
    bool defined = false;
    double m = std::numeric_limits<double>::quiet_NaN();
    double msq = std::numeric_limits<double>::quiet_NaN();
    double msd = std::numeric_limits<double>::quiet_NaN();
    double d = std::numeric_limits<double>::quiet_NaN();
    double w_sum = 0.0;
    uint64_t n_eff = 0;
};

struct DiffusionSeries {
    std::vector<RegionSpec> regions;
    std::vector<std::string> properties;
    std::vector<uint64_t> region_counts;  // particles assigned per region
    std::vector<double> times;            // times[N-1] = dataset time at step N
    std::vector<DiffusionCell> cells;     // region-major, then property, then step

    size_t evaluated_steps() const { return times.size(); }
    const DiffusionCell& at(size_t region, size_t property, uint64_t step) const;
};

// Row indices (ascending) of the dataset particles whose step-0
// poloidal angle falls in each region. Quadrant-segment regions
// partition the population; angle ranges may overlap.
std::vector<std::vector<size_t>> assign_regions(const TrajectoryDataset& dataset,
                                                const SeparatrixModel& model,
                                                const std::vector<RegionSpec>& regions);

// p(step) - p(0) for one dataset row; nullopt when either sample is
// absent.
std::optional<double> displacement(const TrajectoryDataset& dataset, size_t row,
                                   std::string_view property, uint64_t step);

// Weighted moments over the given rows in ascending order with
// compensated summation.
MomentResult weighted_moments(const TrajectoryDataset& dataset,
                              const std::vector<size_t>& rows,
                              std::string_view property, uint64_t step);

double diffusion_coefficient(double m, double msq, std::string_view property,
                             uint64_t step, double dt, double dpdrs);

DiffusionSeries compute_series(const TrajectoryDataset& dataset,
                               const DiffusionConfig& config);

} // namespace sepstream
