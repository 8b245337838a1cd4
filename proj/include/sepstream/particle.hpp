#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sepstream {

enum class Species : uint8_t { electron = 0, ion = 1 };

const char* to_string(Species species);
Species species_from_string(std::string_view name);  // throws ConfigError

// One particle's state at one simulation step. Positions use the
// (psi, theta, zeta, r) coordinates of the synthetic source; psi is
// normalized poloidal flux with 1.0 on the separatrix.
struct ParticleRecord {
    uint64_t id = 0;
    double psi = 1.0;
    double theta = 0.0;   // poloidal angle [0, 2pi), horizontal convention
    double zeta = 0.0;    // toroidal angle [0, 2pi)
    double r = 0.0;       // minor radius, m
    double vpar = 0.0;    // m/s, parallel to the magnetic field
    double energy = 0.0;  // eV
    double w0 = 1.0;      // diffusion weight; -1 marks an unwanted particle
    double w1 = 1.0;
    double w2 = 1.0;
    double sep_flag = 0.0;  // distance-from-separatrix proxy
};

// All particles emitted for one simulation step. Record ordering is
// deliberately unspecified; the source shuffles it every step.
struct StepBatch {
    uint64_t step = 0;
    double time = 0.0;  // s
    Species species = Species::electron;
    std::vector<ParticleRecord> records;
};

// Canonical staging property names, in directory order. "id" is the
// only unsigned column; everything else is float64.
inline constexpr std::array<std::string_view, 11> kAllProperties = {
    "id", "psi", "theta", "zeta", "r", "vPar", "E", "w0", "w1", "w2", "sep_flag",
};

// Float properties by name; "id" is not addressable here.
double property_value(const ParticleRecord& record, std::string_view name);
void set_property(ParticleRecord& record, std::string_view name, double value);
bool is_known_property(std::string_view name);

} // namespace sepstream
