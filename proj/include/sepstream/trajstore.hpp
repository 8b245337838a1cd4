#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepstream/particle.hpp"
#include "sepstream/pipeline.hpp"

namespace sepstream {

// Persistent trajectory dataset and its on-disk form.
//
// File layout (little-endian):
//   magic            4 bytes "STRJ"
//   version          u16 (currently 1)
//   species          u8
//   particle_count   u64 (P)
//   step_count       u64 (S)
//   dt               f64 seconds
//   property_count   u16
//   directory        per property: name_len u16, name, element_type u8
//                    (always f64), byte_length u64 (= P*S*8)
//   ids              P x u64, strictly increasing
//   times            S x f64
//   presence         ceil(P*S/8) bytes; bit row*S + step, LSB first
//   per property     P x S f64, particle-major, directory order
//
// A JSON manifest sidecar <file>.manifest.json duplicates the header
// fields plus a run-configuration digest for human inspection.

constexpr uint16_t kTrajectoryFormatVersion = 1;

struct TrajectoryDataset {
    Species species = Species::electron;
    double dt = 0.0;
    std::vector<uint64_t> ids;    // P entries
    std::vector<double> times;    // S entries
    std::vector<std::string> properties;
    std::vector<uint8_t> presence;            // packed bits, row*S + step
    std::vector<std::vector<double>> data;    // per property, P*S values

    size_t particle_count() const { return ids.size(); }
    size_t step_count() const { return times.size(); }
    bool present(size_t row, size_t step) const;
    size_t property_index(std::string_view name) const;  // throws ConfigError
    std::span<const double> series(std::string_view property, size_t row) const;
};

// Concatenates finalized per-worker blocks (in worker order) into one
// dataset, consuming them one property grid at a time so peak memory
// stays near a single copy of the data. Blocks must share steps_filled,
// times and property lists; the joined id list must remain strictly
// increasing. Violations throw IntegrityError.
TrajectoryDataset merge_blocks(std::vector<TrajectoryBlock>&& blocks, Species species);

// Exact on-disk size implied by the header fields.
uint64_t trajectory_file_size(uint64_t particle_count, uint64_t step_count,
                              std::span<const std::string> properties);

// Atomic write (temp + rename) of the binary file and its manifest.
// config_digest lands in the manifest verbatim; pass "" when there is
// no run configuration to cite.
void write_trajectory_file(const TrajectoryDataset& dataset,
                           const std::filesystem::path& path,
                           const std::string& config_digest);

// Validates magic/version (FormatError) and exact length, id order and
// directory consistency (IntegrityError).
TrajectoryDataset read_trajectory_file(const std::filesystem::path& path);

} // namespace sepstream
