#include "sepstream/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sepstream {

std::pair<double, double> SeparatrixModel::point_at(double angle) const {
    const double rad = radius_at(angle);
    return {center_r + rad * std::cos(angle), center_z + rad * std::sin(angle)};
}

RegionSpec RegionSpec::quad_segment(int quadrant, int segment, AngleOrigin origin) {
    RegionSpec spec;
    spec.kind = Kind::quadrant_segment;
    spec.quadrant = quadrant;
    spec.segment = segment;
    spec.origin = origin;
    return spec;
}

RegionSpec RegionSpec::angles(double lo, double hi, AngleOrigin origin) {
    RegionSpec spec;
    spec.kind = Kind::angle_range;
    spec.angle_lo = lo;
    spec.angle_hi = hi;
    spec.origin = origin;
    return spec;
}

double wrap_angle(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0)
        a += kTwoPi;
    if (a >= kTwoPi)  // fmod can land exactly on 2pi after the correction
        a -= kTwoPi;
    return a;
}

double poloidal_angle(double r, double z, const SeparatrixModel& model,
                      AngleOrigin origin) {
    const double dr = r - model.center_r;
    const double dz = z - model.center_z;
    if (dr == 0.0 && dz == 0.0)
        throw std::domain_error("poloidal_angle: position coincides with model center");
    const double horizontal = wrap_angle(std::atan2(dz, dr));
    if (origin == AngleOrigin::horizontal)
        return horizontal;
    return wrap_angle(horizontal - model.xpoint_angle);
}

std::pair<int, int> region_of(double angle) {
    const double bin_width = kTwoPi / kTotalSegments;
    int g = static_cast<int>(std::floor(angle / bin_width));
    if (g < 0)
        g = 0;
    if (g >= kTotalSegments)  // closes the final bin at 2pi
        g = kTotalSegments - 1;
    // the division can land one ulp off right at a bin edge; settle the
    // bin against the edge values so [g*w, (g+1)*w) holds exactly
    if (g > 0 && angle < static_cast<double>(g) * bin_width)
        --g;
    else if (g + 1 < kTotalSegments &&
             angle >= static_cast<double>(g + 1) * bin_width)
        ++g;
    return {g / kSegmentsPerQuadrant, g % kSegmentsPerQuadrant};
}

bool in_angle_range(double angle, const RegionSpec& spec) {
    if (spec.angle_lo <= spec.angle_hi)
        return angle >= spec.angle_lo && angle <= spec.angle_hi;
    // wraps through 0
    return angle >= spec.angle_lo || angle <= spec.angle_hi;
}

double separatrix_distance(double psi) {
    return std::abs(psi - 1.0);
}

} // namespace sepstream
