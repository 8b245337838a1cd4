#pragma once

#include <filesystem>
#include <string>

#include "sepstream/diffusion.hpp"
#include "sepstream/particle.hpp"

namespace sepstream {

// Plot-ready exports of a diffusion series. The CSV column order is
// part of the interface:
//   species,region_kind,quadrant,segment,angle_lo,angle_hi,property,
//   step,time_s,M,MSQ,msd,d,n_eff,w_sum
// Quadrant-segment rows leave the angle columns empty and vice versa.
// Doubles print with 17 significant digits so readback reproduces the
// in-memory values; NaN prints as "nan".

std::string format_double(double value);

void write_diffusion_csv(const DiffusionSeries& series, Species species,
                         const std::filesystem::path& path);

void write_diffusion_json(const DiffusionSeries& series, Species species,
                          const std::filesystem::path& path);

} // namespace sepstream
