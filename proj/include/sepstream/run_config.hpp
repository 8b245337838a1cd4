#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sepstream/diffusion.hpp"
#include "sepstream/geometry.hpp"
#include "sepstream/pipeline.hpp"
#include "sepstream/staging.hpp"
#include "sepstream/synth_source.hpp"

namespace sepstream {

// One JSON document drives a whole run: source settings per species,
// the staging endpoint, pipeline selection/partitioning, separatrix
// geometry, diffusion regions and outputs. Unknown keys anywhere in
// the document are rejected.

struct RunConfig {
    std::filesystem::path out_dir = "out";
    StageEndpoint staging;
    PipelineConfig pipeline;
    SeparatrixModel model;

    std::vector<RegionSpec> regions;           // default: quadrant 3, all 8 segments
    std::vector<std::string> diffusion_properties = {"psi", "E", "vPar", "r"};
    std::vector<double> dpdrs;                 // empty = all 1.0
    size_t diffusion_workers = 1;

    std::vector<SourceConfig> species_runs;    // one entry per species

    // the parsed document re-serialized with sorted keys; digests and
    // reports cite it so identical configs hash identically
    std::string canonical_json;
};

// Parses and structurally validates (types, ranges are checked later by
// validate_run_config). Throws ConfigError on malformed JSON, unknown
// keys or wrong value types; IoError when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

// Every violated invariant across all nested configs, with field
// context; empty means the config can run.
std::vector<std::string> validate_run_config(const RunConfig& config);

// Throws ConfigError joining all failures.
void require_valid(const RunConfig& config);

// "0.9pi" or "0.9π" multiplies by pi; otherwise plain radians.
double parse_angle(const std::string& text);

// CLI region shorthand: "quadrant=Q" expands to Q's eight segments,
// "angles=LO,HI" to one inclusive angle range.
std::vector<RegionSpec> parse_regions_flag(const std::string& flag, AngleOrigin origin);

// FNV-1a, used to fingerprint configurations in manifests and reports.
uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t value);

} // namespace sepstream
