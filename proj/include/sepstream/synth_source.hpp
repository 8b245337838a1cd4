#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "sepstream/geometry.hpp"
#include "sepstream/particle.hpp"

namespace sepstream {

// Parameters for the synthetic particle source. Dynamics are
// independent per-property Gaussian random walks (plus an optional
// deterministic psi drift), which gives a closed-form expected
// diffusion coefficient sigma^2/dt for validating the analysis side.
struct SourceConfig {
    uint64_t n_particles = 1000;
    uint64_t n_steps = 100;  // total step batches emitted, steps 0..n_steps-1
    double dt = 1.0;         // s
    Species species = Species::electron;

    // per-step Gaussian increment standard deviations
    double sigma_psi = 0.0;
    double sigma_energy = 0.0;  // eV
    double sigma_vpar = 0.0;    // m/s

    double drift_psi = 0.0;  // deterministic per-step psi drift
    double loss_psi = 1.2;   // psi beyond which a particle hits the diverter
    uint64_t seed = 12345;
    double growth_rate = 0.0;  // fraction of fresh near-separatrix particles per step

    // initial-value bands (uniform draws)
    double psi_init_lo = 0.95, psi_init_hi = 1.05;
    double theta_init_lo = 0.0, theta_init_hi = kTwoPi;
    double zeta_init_lo = 0.0, zeta_init_hi = kTwoPi;
    double energy_init_lo = 100.0, energy_init_hi = 1000.0;  // eV
    double vpar_init_lo = -1.0e5, vpar_init_hi = 1.0e5;      // m/s

    double rotation_theta = 0.0;  // radians per step
    double rotation_zeta = 0.0;
    double minor_radius_scale = 0.5;  // r = scale * psi, m

    // every violated invariant, one message each; empty means valid
    std::vector<std::string> validate_messages() const;
    void validate() const;  // throws ConfigError listing all failures
};

// Mock simulation side: a single sequential producer that advances a
// particle population one step at a time. Reproducible: the same (config, seed)
// yields bit-identical batch sequences. Particles whose psi exceeds
// loss_psi are flagged with w0 = -1, stay for one more batch, then
// disappear. New particles may be tagged each step (growth_rate); their
// ids are strictly greater than all ids issued before.
class SynthSource {
public:
    explicit SynthSource(SourceConfig config);

    // Step-0 batch; resets the source state.
    StepBatch init_population();

    // Next batch from the previous one. Precondition: !done(batch).
    StepBatch advance(const StepBatch& batch);

    bool done(const StepBatch& batch) const {
        return batch.step + 1 >= config_.n_steps;
    }

    const SourceConfig& config() const { return config_; }

private:
    ParticleRecord make_particle(uint64_t id);
    double uniform(double lo, double hi);
    double gaussian(double sigma);

    SourceConfig config_;
    std::mt19937_64 rng_;
    uint64_t next_id_ = 0;
    // ids flagged w0 = -1 in the latest batch; they survive exactly one
    // more advance
    std::unordered_set<uint64_t> freshly_lost_;
};

} // namespace sepstream
