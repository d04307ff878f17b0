#pragma once

#include <cmath>
#include <numbers>

namespace unav {

inline constexpr double kPi = std::numbers::pi;

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

// Absolute wrapped difference, in [0, pi].
inline double angle_abs_diff(double a, double b) {
    return std::abs(wrap_angle(a - b));
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace unav
