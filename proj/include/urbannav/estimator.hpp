#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "urbannav/angles.hpp"
#include "urbannav/citygen.hpp"
#include "urbannav/geometry.hpp"
#include "urbannav/noise.hpp"

namespace unav::estimator {

struct GateRejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major symmetric 3x3 covariance.
using Cov3 = std::array<double, 9>;

struct PoseBelief {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    Cov3 cov{};

    static PoseBelief init(Vec2 pos, double heading, const NoiseConfig& n) {
        PoseBelief b;
        b.x = pos.x;
        b.y = pos.y;
        b.theta = wrap_angle(heading);
        b.cov = {n.init_sigma_xy_m * n.init_sigma_xy_m, 0, 0,
                 0, n.init_sigma_xy_m * n.init_sigma_xy_m, 0,
                 0, 0, n.init_sigma_theta_rad * n.init_sigma_theta_rad};
        return b;
    }

    Vec2 position() const { return {x, y}; }

    void symmetrize() {
        cov[1] = cov[3] = 0.5 * (cov[1] + cov[3]);
        cov[2] = cov[6] = 0.5 * (cov[2] + cov[6]);
        cov[5] = cov[7] = 0.5 * (cov[5] + cov[7]);
    }
};

struct LandmarkFix {
    int landmark_id = -1;
    Vec2 position;   // measured vehicle position referenced to the map
    double sigma_m = 5.0;
};

namespace detail {

inline Cov3 mat_mul(const Cov3& A, const Cov3& B) {
    Cov3 C{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += A[i * 3 + k] * B[k * 3 + j];
            C[i * 3 + j] = s;
        }
    return C;
}

inline Cov3 transpose(const Cov3& A) {
    return {A[0], A[3], A[6], A[1], A[4], A[7], A[2], A[5], A[8]};
}

// Eigenvalues of the symmetric 2x2 position block.
inline std::pair<double, double> position_eigenvalues(const Cov3& P) {
    const double a = P[0], b = P[1], c = P[4];
    const double tr = 0.5 * (a + c);
    const double det = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
    return {tr + det, tr - det};
}

}  // namespace detail

// Dead-reckoning prediction: advance the mean by the odometry distance along
// the mid-step heading, with the heading change implied by the commanded
// steering. Process noise covers encoder quantization, slip, and a heading
// random walk.
inline PoseBelief predict(const PoseBelief& b, double odo_m, double dtheta,
                          const NoiseConfig& n) {
    const double mid = b.theta + 0.5 * dtheta;
    const double c = std::cos(mid);
    const double s = std::sin(mid);

    PoseBelief out = b;
    out.x += odo_m * c;
    out.y += odo_m * s;
    out.theta = wrap_angle(b.theta + dtheta);

    const Cov3 F = {1, 0, -odo_m * s, 0, 1, odo_m * c, 0, 0, 1};
    Cov3 P = detail::mat_mul(detail::mat_mul(F, b.cov), detail::transpose(F));

    const double var_d = n.odo_quant_var() + n.slip_frac * n.slip_frac * odo_m;
    const double q_theta = n.q_theta_step + n.q_theta_per_m * odo_m;
    P[0] += var_d * c * c;
    P[1] += var_d * c * s;
    P[3] += var_d * c * s;
    P[4] += var_d * s * s;
    P[8] += q_theta;
    out.cov = P;
    out.symmetrize();
    return out;
}

// Scalar EKF update on heading with wrapped innovation.
inline PoseBelief update_compass(const PoseBelief& b, double z_rad, double sigma_theta) {
    const double R = sigma_theta * sigma_theta;
    const double S = b.cov[8] + R;
    if (S <= 0.0) {  // heading already exact (perfect compass after collapse)
        PoseBelief out = b;
        out.theta = wrap_angle(z_rad);
        return out;
    }
    const double k0 = b.cov[2] / S;
    const double k1 = b.cov[5] / S;
    const double k2 = b.cov[8] / S;
    const double innov = wrap_angle(z_rad - b.theta);

    PoseBelief out = b;
    out.x += k0 * innov;
    out.y += k1 * innov;
    out.theta = wrap_angle(b.theta + k2 * innov);

    // P' = P - K S K^T with K = P e_theta / S
    const double pc[3] = {b.cov[2], b.cov[5], b.cov[8]};
    const double k[3] = {k0, k1, k2};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.cov[i * 3 + j] = b.cov[i * 3 + j] - k[i] * pc[j];
    out.symmetrize();
    return out;
}

inline double position_mahalanobis(const PoseBelief& b, const Vec2& p) {
    const double a = b.cov[0], c = b.cov[4], off = b.cov[1];
    const double det = a * c - off * off;
    if (det <= 0.0) return std::numeric_limits<double>::infinity();
    const double dx = p.x - b.x;
    const double dy = p.y - b.y;
    const double m2 = (c * dx * dx - 2.0 * off * dx * dy + a * dy * dy) / det;
    return std::sqrt(std::max(0.0, m2));
}

// Direct (x, y) position fix. Throws GateRejected if the fix falls outside the
// 2-sigma association gate.
inline PoseBelief update_landmark(const PoseBelief& b, const LandmarkFix& fix,
                                  double gate_radius = 2.0) {
    if (fix.sigma_m <= 0.0) throw std::invalid_argument("landmark fix sigma must be > 0");
    if (position_mahalanobis(b, fix.position) > gate_radius)
        throw GateRejected("landmark fix outside association gate");

    const double R = fix.sigma_m * fix.sigma_m;
    // S = position block + R I
    const double s00 = b.cov[0] + R, s01 = b.cov[1], s11 = b.cov[4] + R;
    const double det = s00 * s11 - s01 * s01;
    const double i00 = s11 / det, i01 = -s01 / det, i11 = s00 / det;

    // K = P H^T S^-1, H = [I2 0]
    double K[3][2];
    for (int i = 0; i < 3; ++i) {
        const double ph0 = b.cov[i * 3 + 0];
        const double ph1 = b.cov[i * 3 + 1];
        K[i][0] = ph0 * i00 + ph1 * i01;
        K[i][1] = ph0 * i01 + ph1 * i11;
    }
    const double r0 = fix.position.x - b.x;
    const double r1 = fix.position.y - b.y;

    PoseBelief out = b;
    out.x += K[0][0] * r0 + K[0][1] * r1;
    out.y += K[1][0] * r0 + K[1][1] * r1;
    out.theta = wrap_angle(b.theta + K[2][0] * r0 + K[2][1] * r1);

    // Joseph form: P' = (I-KH) P (I-KH)^T + K R K^T
    Cov3 A = {1 - K[0][0], -K[0][1], 0, -K[1][0], 1 - K[1][1], 0, -K[2][0], -K[2][1], 1};
    Cov3 P = detail::mat_mul(detail::mat_mul(A, b.cov), detail::transpose(A));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            P[i * 3 + j] += R * (K[i][0] * K[j][0] + K[i][1] * K[j][1]);
    out.cov = P;
    out.symmetrize();
    return out;
}

// Full major-axis length of the 2-sigma position uncertainty ellipse.
inline double ellipse_major_axis(const PoseBelief& b) {
    return 4.0 * std::sqrt(std::max(0.0, detail::position_eigenvalues(b.cov).first));
}

inline bool is_lost(const PoseBelief& b, double threshold_m = 100.0) {
    return ellipse_major_axis(b) > threshold_m;
}

// Landmarks within the 2-sigma gate (boundary inclusive).
inline std::vector<citygen::Landmark> gate_landmarks(const PoseBelief& b,
                                                     const citygen::LandmarkSet& lms,
                                                     double gate_radius = 2.0) {
    std::vector<citygen::Landmark> out;
    for (const auto& lm : lms.entries)
        if (position_mahalanobis(b, lm.pos) <= gate_radius) out.push_back(lm);
    return out;
}

inline bool in_gate(const PoseBelief& b, const Vec2& p, double gate_radius = 2.0) {
    return position_mahalanobis(b, p) <= gate_radius;
}

}  // namespace unav::estimator
