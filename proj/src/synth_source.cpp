#include "sepstream/synth_source.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepstream/errors.hpp"

namespace sepstream {

std::vector<std::string> SourceConfig::validate_messages() const {
    std::vector<std::string> bad;
    if (n_particles < 1)
        bad.push_back("n_particles must be >= 1");
    if (n_steps < 1)
        bad.push_back("n_steps must be >= 1");
    if (dt <= 0.0)
        bad.push_back("dt must be > 0");
    if (sigma_psi < 0.0)
        bad.push_back("sigma_psi must be >= 0");
    if (sigma_energy < 0.0)
        bad.push_back("sigma_energy must be >= 0");
    if (sigma_vpar < 0.0)
        bad.push_back("sigma_vpar must be >= 0");
    if (growth_rate < 0.0)
        bad.push_back("growth_rate must be >= 0");
    if (psi_init_lo > psi_init_hi)
        bad.push_back("psi init band is inverted");
    if (energy_init_lo > energy_init_hi)
        bad.push_back("energy init band is inverted");
    if (vpar_init_lo > vpar_init_hi)
        bad.push_back("vPar init band is inverted");
    if (energy_init_lo < 0.0)
        bad.push_back("energy init band must be >= 0");
    if (minor_radius_scale <= 0.0)
        bad.push_back("minor_radius_scale must be > 0");
    return bad;
}

void SourceConfig::validate() const {
    const auto bad = validate_messages();
    if (bad.empty())
        return;
    std::string joined = "source: " + bad.front();
    for (size_t i = 1; i < bad.size(); ++i)
        joined += "; " + bad[i];
    throw ConfigError(joined);
}

SynthSource::SynthSource(SourceConfig config) : config_(std::move(config)) {
    config_.validate();
}

double SynthSource::uniform(double lo, double hi) {
    if (lo == hi)
        return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
}

double SynthSource::gaussian(double sigma) {
    if (sigma == 0.0)
        return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng_);
}

ParticleRecord SynthSource::make_particle(uint64_t id) {
    ParticleRecord p;
    p.id = id;
    p.psi = uniform(config_.psi_init_lo, config_.psi_init_hi);
    p.theta = wrap_angle(uniform(config_.theta_init_lo, config_.theta_init_hi));
    p.zeta = wrap_angle(uniform(config_.zeta_init_lo, config_.zeta_init_hi));
    p.energy = uniform(config_.energy_init_lo, config_.energy_init_hi);
    p.vpar = uniform(config_.vpar_init_lo, config_.vpar_init_hi);
    p.r = config_.minor_radius_scale * p.psi;
    p.w0 = p.w1 = p.w2 = 1.0;
    p.sep_flag = separatrix_distance(p.psi);
    return p;
}

StepBatch SynthSource::init_population() {
    rng_.seed(config_.seed);
    next_id_ = 0;
    freshly_lost_.clear();

    StepBatch batch;
    batch.step = 0;
    batch.time = 0.0;
    batch.species = config_.species;
    batch.records.reserve(config_.n_particles);
    for (uint64_t i = 0; i < config_.n_particles; ++i)
        batch.records.push_back(make_particle(next_id_++));
    return batch;
}

StepBatch SynthSource::advance(const StepBatch& batch) {
    StepBatch out;
    out.step = batch.step + 1;
    out.time = static_cast<double>(out.step) * config_.dt;
    out.species = batch.species;
    out.records.reserve(batch.records.size());

    for (const ParticleRecord& in : batch.records) {
        if (in.w0 == -1.0) {
            // flagged last step: carry once more, then drop for good
            auto it = freshly_lost_.find(in.id);
            if (it != freshly_lost_.end()) {
                freshly_lost_.erase(it);
                out.records.push_back(in);
            }
            continue;
        }
        ParticleRecord p = in;
        p.psi += config_.drift_psi + gaussian(config_.sigma_psi);
        p.energy = std::max(0.0, p.energy + gaussian(config_.sigma_energy));
        p.vpar += gaussian(config_.sigma_vpar);
        p.theta = wrap_angle(p.theta + config_.rotation_theta);
        p.zeta = wrap_angle(p.zeta + config_.rotation_zeta);
        p.r = config_.minor_radius_scale * p.psi;
        p.sep_flag = separatrix_distance(p.psi);
        if (p.psi > config_.loss_psi) {
            // hit the diverter
            p.w0 = -1.0;
            freshly_lost_.insert(p.id);
        }
        out.records.push_back(p);
    }

    const auto n_new = static_cast<uint64_t>(
        config_.growth_rate * static_cast<double>(batch.records.size()));
    for (uint64_t i = 0; i < n_new; ++i)
        out.records.push_back(make_particle(next_id_++));

    std::shuffle(out.records.begin(), out.records.end(), rng_);
    return out;
}

} // namespace sepstream
