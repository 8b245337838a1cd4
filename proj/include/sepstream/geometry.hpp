#pragma once

#include <numbers>
#include <utility>

namespace sepstream {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr int kQuadrants = 4;
inline constexpr int kSegmentsPerQuadrant = 8;
inline constexpr int kTotalSegments = kQuadrants * kSegmentsPerQuadrant;

// Where poloidal angle 0 points: the horizontal direction (the usual
// polar convention) or the X-point of the separatrix.
enum class AngleOrigin { horizontal, xpoint };

// Separatrix modeled as a closed curve around a center point in the
// (R, Z) cross-section plane, parameterized by poloidal angle. The
// curve is a circle; the X-point sits at a configurable angle
// (horizontal convention), default at the bottom of the cross-section.
struct SeparatrixModel {
    double center_r = 1.7;  // m
    double center_z = 0.0;  // m
    double radius = 0.5;    // m
    double xpoint_angle = 1.5 * std::numbers::pi;  // radians in [0, 2pi)

    double radius_at(double /*angle*/) const { return radius; }
    // (R, Z) of the curve point at the given poloidal angle (horizontal
    // convention). radius_at(0) == radius_at(2*pi), so the curve closes.
    std::pair<double, double> point_at(double angle) const;
};

// A region along the separatrix: either one of the 32 quadrant
// segments, or an arbitrary poloidal-angle range (wrapping mod 2pi,
// bounds inclusive).
struct RegionSpec {
    enum class Kind { quadrant_segment, angle_range };

    Kind kind = Kind::quadrant_segment;
    int quadrant = 0;       // 0..3, quadrant_segment only
    int segment = 0;        // 0..7, quadrant_segment only
    double angle_lo = 0.0;  // radians in [0, 2pi), angle_range only
    double angle_hi = 0.0;
    AngleOrigin origin = AngleOrigin::horizontal;

    static RegionSpec quad_segment(int quadrant, int segment,
                                   AngleOrigin origin = AngleOrigin::horizontal);
    static RegionSpec angles(double lo, double hi,
                             AngleOrigin origin = AngleOrigin::horizontal);
};

// Maps any angle (radians) into [0, 2pi).
double wrap_angle(double angle);

// Poloidal angle of a cross-section position relative to the model
// center, in [0, 2pi). The xpoint origin shifts the horizontal angle by
// -xpoint_angle. Throws std::domain_error if the position coincides
// with the center.
double poloidal_angle(double r, double z, const SeparatrixModel& model,
                      AngleOrigin origin);

// (quadrant, segment) for an angle in [0, 2pi). Segments are the 32
// equal bins of width pi/16; bin w is [w*pi/16, (w+1)*pi/16), with the
// last bin closed at 2pi.
std::pair<int, int> region_of(double angle);

// Membership of an angle in an angle-range spec, inclusive bounds,
// wrapping through 0 when angle_lo > angle_hi.
bool in_angle_range(double angle, const RegionSpec& spec);

// Distance-from-separatrix proxy: |psi - 1|, zero on the surface.
double separatrix_distance(double psi);

} // namespace sepstream
