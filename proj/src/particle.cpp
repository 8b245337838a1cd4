#include "sepstream/particle.hpp"

#include <string>

#include "sepstream/errors.hpp"

namespace sepstream {

const char* to_string(Species species) {
    return species == Species::electron ? "electron" : "ion";
}

Species species_from_string(std::string_view name) {
    if (name == "electron")
        return Species::electron;
    if (name == "ion")
        return Species::ion;
    throw ConfigError("unknown species '" + std::string(name) +
                      "' (expected electron or ion)");
}

namespace {

double* field_of(ParticleRecord& record, std::string_view name) {
    if (name == "psi") return &record.psi;
    if (name == "theta") return &record.theta;
    if (name == "zeta") return &record.zeta;
    if (name == "r") return &record.r;
    if (name == "vPar") return &record.vpar;
    if (name == "E") return &record.energy;
    if (name == "w0") return &record.w0;
    if (name == "w1") return &record.w1;
    if (name == "w2") return &record.w2;
    if (name == "sep_flag") return &record.sep_flag;
    return nullptr;
}

} // namespace

double property_value(const ParticleRecord& record, std::string_view name) {
    auto& mutable_record = const_cast<ParticleRecord&>(record);
    if (const double* field = field_of(mutable_record, name))
        return *field;
    throw ConfigError("unknown particle property '" + std::string(name) + "'");
}

void set_property(ParticleRecord& record, std::string_view name, double value) {
    if (double* field = field_of(record, name)) {
        *field = value;
        return;
    }
    throw ConfigError("unknown particle property '" + std::string(name) + "'");
}

bool is_known_property(std::string_view name) {
    for (auto known : kAllProperties)
        if (known == name)
            return true;
    return false;
}

} // namespace sepstream
