#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepstream/particle.hpp"
#include "sepstream/staging.hpp"

namespace sepstream {

// The streaming analysis engine. Step 0 selects which particles to
// follow; every later step is trimmed against that seed set, sorted by
// id, split into contiguous id shards, and appended to per-worker
// trajectory blocks. Retained analysis-side state stays bounded by
// |seeds| live trimmed records plus one in-flight frame, regardless of
// how large the source population grows.

// every float property, i.e. kAllProperties minus "id"
std::vector<std::string> default_trajectory_properties();

struct SeedSet {
    std::vector<uint64_t> ids;            // strictly increasing
    std::vector<ParticleRecord> initial;  // step-0 record per id, same order
    double threshold = 0.0;
};

struct Partition {
    size_t worker_count = 1;
    // W+1 id values; shard k covers ids in [boundaries[k], boundaries[k+1])
    std::vector<uint64_t> boundaries;
    // W+1 positions into the sorted seed id list; shard k is
    // [offsets[k], offsets[k+1])
    std::vector<size_t> offsets;
};

// Selects records with sep_flag <= threshold and w0 != -1 from the
// step-0 frame; ids are sorted ascending and deduplicated (first
// occurrence wins). Empty selection throws ConfigError.
SeedSet build_seed_set(const StepFrame& frame0, double threshold);

// Keeps exactly the frame records whose id is in the seed set, sorted
// by id ascending. A duplicate id anywhere in the frame throws
// IntegrityError. Records never enter or leave the seed set here;
// particles tagged near the separatrix at later steps stay untracked.
std::vector<ParticleRecord> trim(const StepFrame& frame, const SeedSet& seeds);

// Contiguous near-equal split of the sorted seed ids: shard sizes
// differ by at most one, earlier shards take the remainder.
// worker_count of 0 or more than the seed count throws ConfigError.
Partition assign_shards(const SeedSet& seeds, size_t worker_count);

// One worker's trajectories. Steps append in order; rows follow the
// shard's sorted ids. Internally step-major while filling, transposed
// to particle-major by finalize(). A particle missing from a step gets
// presence false and the fill value; absence is absorbing, so a record
// for a previously absent row throws IntegrityError.
class TrajectoryBlock {
public:
    TrajectoryBlock(size_t worker, std::vector<uint64_t> ids,
                    std::vector<std::string> properties,
                    double fill_value = std::numeric_limits<double>::quiet_NaN());

    // records must be sorted by id and lie within this shard's ids;
    // step_index must equal steps_filled()
    void append_step(std::span<const ParticleRecord> records, uint64_t step_index,
                     double time);

    // transposes to particle-major; appending or finalizing again
    // afterwards throws ProtocolError
    void finalize();
    bool finalized() const { return finalized_; }

    size_t worker() const { return worker_; }
    const std::vector<uint64_t>& ids() const { return ids_; }
    const std::vector<std::string>& properties() const { return properties_; }
    uint64_t steps_filled() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }

    bool present(size_t row, size_t step) const;
    double value(std::string_view property, size_t row, size_t step) const;
    // one particle's full time series; finalized blocks only
    std::span<const double> series(std::string_view property, size_t row) const;

    // Move-out accessors for merging, so a merge can release one
    // property grid at a time instead of doubling the whole block.
    // Finalized blocks only; the grid is left empty.
    std::vector<double> release_property(std::string_view name);
    std::vector<uint8_t> release_presence();

private:
    size_t property_index(std::string_view name) const;
    size_t cell(size_t row, size_t step) const;

    size_t worker_;
    std::vector<uint64_t> ids_;
    std::vector<std::string> properties_;
    double fill_value_;
    bool finalized_ = false;
    std::vector<double> times_;
    std::vector<std::vector<double>> data_;  // per property, one layout-dependent grid
    std::vector<uint8_t> presence_;
    std::vector<uint8_t> seen_absent_;  // per row; set once a step misses it
};

struct PipelineConfig {
    double threshold = 0.05;
    size_t worker_count = 1;
    std::vector<std::string> properties = default_trajectory_properties();
    double fill_value = std::numeric_limits<double>::quiet_NaN();
    // longest silence tolerated between frames before giving up
    double read_timeout_s = 60.0;
};

struct PipelineStats {
    uint64_t frames_consumed = 0;
    uint64_t seed_count = 0;
    uint64_t first_frame_records = 0;
    uint64_t last_frame_records = 0;
    uint64_t max_frame_records = 0;
    // high-water mark of particle records held at once: in-flight frame
    // + live trimmed output + step-0 seed records; the streaming bound
    // is seed_count + max_frame_records
    uint64_t peak_retained_records = 0;
    uint64_t records_kept_total = 0;
    uint64_t records_dropped_total = 0;
};

struct PipelineResult {
    Species species = Species::electron;
    std::vector<TrajectoryBlock> blocks;  // finalized, one per worker
    PipelineStats stats;
};

// Consumes the stream to end-of-stream. Workers append concurrently
// with the reader's next-frame fetch; each worker owns its block
// exclusively. Missing step indices throw IntegrityError; a stream
// ending before step 0 throws ProtocolError.
PipelineResult run_pipeline(StepReader& reader, const PipelineConfig& config);

} // namespace sepstream
