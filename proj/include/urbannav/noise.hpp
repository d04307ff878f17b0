#pragma once

#include <cmath>

#include "urbannav/angles.hpp"

namespace unav {

// Sensor and process noise configuration shared by the truth simulator and the
// pose estimator. All magnitudes frozen after the one-time odometry/heading
// calibration against the no-compass range target.
struct NoiseConfig {
    // Compass: zero-mean Gaussian per reading with this 2-sigma band.
    // Zero means a perfect compass; negative disables the compass entirely.
    double compass_2sigma_rad = deg2rad(30.0);

    // Odometry encoder quantization: +-1/2 tick uniform per reading.
    double encoder_counts_per_rev = 4096.0;
    double wheel_radius_m = 0.35;

    // Wheel slip: distance random walk, sigma = slip_frac * sqrt(d * 1 m).
    double slip_frac = 0.01;

    // Landmark position fix 1-sigma (per axis).
    double landmark_fix_sigma_m = 5.0;

    // Heading random walk: per-step floor plus per-meter growth. The per-meter
    // term is the calibration knob for the dead-reckoning range target.
    double q_theta_step = deg2rad(0.1) * deg2rad(0.1);
    double q_theta_per_m = 6.6e-5;

    // Initial pose belief 1-sigmas.
    double init_sigma_xy_m = 1.0;
    double init_sigma_theta_rad = deg2rad(1.0);

    // counts <= 0 models an ideal (noise-free) encoder
    double odo_tick_m() const {
        if (encoder_counts_per_rev <= 0.0) return 0.0;
        return 2.0 * kPi * wheel_radius_m / encoder_counts_per_rev;
    }
    double odo_quant_var() const {
        const double t = odo_tick_m();
        return t * t / 12.0;
    }
    bool has_compass() const { return compass_2sigma_rad >= 0.0; }
    double compass_sigma_rad() const { return std::max(0.0, compass_2sigma_rad) / 2.0; }
};

}  // namespace unav
