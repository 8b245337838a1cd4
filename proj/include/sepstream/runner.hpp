#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sepstream/pipeline.hpp"
#include "sepstream/run_config.hpp"

namespace sepstream {

// Drives the whole coupled workflow for every configured species:
// source thread streaming step frames, pipeline consuming them
// concurrently, trajectory file write, diffusion series computation and
// exports, plus a run_report.json summarizing counters and timings.

struct SpeciesOutcome {
    Species species = Species::electron;
    std::filesystem::path trajectory_path;
    std::filesystem::path csv_path;
    std::filesystem::path json_path;
    PipelineStats stats;
    uint64_t frames_published = 0;
    uint64_t trajectory_bytes = 0;
    double source_seconds = 0.0;    // producer wall time (overlaps analysis)
    double analysis_seconds = 0.0;  // pipeline wall time
    double diffusion_seconds = 0.0;
    double write_seconds = 0.0;
};

struct RunOutcome {
    std::filesystem::path report_path;
    std::vector<SpeciesOutcome> species;
    double total_seconds = 0.0;
};

// Validates the config, then runs each species in turn. A set stop
// flag (e.g. from SIGINT) stops the producer at the next step; the
// consumer drains what was published and the partial results are still
// written out.
RunOutcome run_workflow(const RunConfig& config,
                        const std::atomic<bool>* stop = nullptr);

} // namespace sepstream
