#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "urbannav/angles.hpp"
#include "urbannav/geometry.hpp"
#include "urbannav/noise.hpp"
#include "urbannav/rng.hpp"

namespace unav::vehicle {

struct VehicleState {
    double x = 0.0;   // rear axle center [m]
    double y = 0.0;
    double theta = 0.0;  // wrapped to (-pi, pi]
    double v = 0.0;      // [m/s]
};

struct ControlCommand {
    double accel = 0.0;  // [m/s^2]
    double steer = 0.0;  // [rad]
};

struct VehicleParams {
    double wheelbase_m = 2.85;
    double dt_s = 0.1;
    double steer_max_rad = 0.55;
    double accel_max = 2.5;
    double v_cruise = 10.0;
};

struct SensorReadings {
    double odo_distance_m = 0.0;
    double compass_rad = 0.0;
    bool compass_valid = false;
};

inline ControlCommand saturate(ControlCommand u, const VehicleParams& p) {
    u.accel = std::clamp(u.accel, -p.accel_max, p.accel_max);
    u.steer = std::clamp(u.steer, -p.steer_max_rad, p.steer_max_rad);
    return u;
}

// Arc length covered in one step.
inline double step_distance(const VehicleState& s, const ControlCommand& u,
                            const VehicleParams& p) {
    return 0.5 * u.accel * p.dt_s * p.dt_s + s.v * p.dt_s;
}

// Four-state kinematic bicycle step. The body-frame displacement follows a
// circular arc of radius wheelbase/steer; near-zero steering uses the
// second-order series limit of the same arc.
inline VehicleState step_bicycle(const VehicleState& s, ControlCommand u,
                                 const VehicleParams& p) {
    constexpr double kEpsStraight = 1e-6;
    u = saturate(u, p);
    const double d = step_distance(s, u, p);
    double dx, dy, dtheta;
    if (std::abs(u.steer) < kEpsStraight) {
        dtheta = d * u.steer / p.wheelbase_m;
        dx = d;
        dy = d * d * u.steer / (2.0 * p.wheelbase_m);
    } else {
        const double rho = p.wheelbase_m / u.steer;
        dtheta = d / rho;
        dx = rho * std::sin(dtheta);
        dy = rho * (1.0 - std::cos(dtheta));
    }
    VehicleState out;
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    out.x = s.x + dx * c - dy * sn;
    out.y = s.y + dx * sn + dy * c;
    out.theta = wrap_angle(s.theta + dtheta);
    out.v = std::max(0.0, s.v + u.accel * p.dt_s);
    return out;
}

// Heading change implied by a commanded steer over a measured distance; the
// estimator uses this as its prediction input.
inline double steer_implied_dtheta(double distance_m, double steer_rad,
                                   const VehicleParams& p) {
    return distance_m * steer_rad / p.wheelbase_m;
}

inline SensorReadings sense(const VehicleState& s_prev, const VehicleState& s,
                            const ControlCommand& u, const VehicleParams& p,
                            const NoiseConfig& noise, Rng& rng) {
    const double d = step_distance(s_prev, u, p);
    SensorReadings r;
    double odo = d;
    const double tick = noise.odo_tick_m();
    if (tick > 0.0) odo += rng.uniform(-0.5 * tick, 0.5 * tick);
    if (noise.slip_frac > 0.0 && d > 0.0)
        odo += noise.slip_frac * std::sqrt(d) * rng.normal();
    r.odo_distance_m = std::max(0.0, odo);
    if (noise.has_compass()) {
        r.compass_rad = wrap_angle(s.theta + noise.compass_sigma_rad() * rng.normal());
        r.compass_valid = true;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Path following

struct FollowerGains {
    double k_heading = 1.0;
    double k_cross = 0.6;       // Stanley cross-track gain
    double v_soft = 1.0;        // softening speed in the cross-track term
    double k_speed = 1.0;
    double v_turn = 3.0;        // speed through sharp corners
    double slow_distance_m = 22.0;
    double corner_angle_rad = deg2rad(25.0);
};

// Replaces sharp polyline corners with circular fillets so the reference path
// stays within the vehicle's minimum turning radius.
inline std::vector<Vec2> make_path(const std::vector<Vec2>& waypoints,
                                   double fillet_radius_m = 8.0,
                                   double max_seg_m = 2.0) {
    std::vector<Vec2> out;
    if (waypoints.size() < 3 || fillet_radius_m <= 0.0) {
        out = waypoints;
        return out;
    }
    out.push_back(waypoints.front());
    for (size_t i = 1; i + 1 < waypoints.size(); ++i) {
        const Vec2 prev = waypoints[i - 1];
        const Vec2 cur = waypoints[i];
        const Vec2 next = waypoints[i + 1];
        const double b_in = bearing(prev, cur);
        const double b_out = bearing(cur, next);
        const double turn = wrap_angle(b_out - b_in);
        const double d_in = distance(prev, cur);
        const double d_out = distance(cur, next);
        const double setback =
            std::min({fillet_radius_m * std::tan(std::abs(turn) / 2.0), 0.45 * d_in,
                      0.45 * d_out});
        if (std::abs(turn) < deg2rad(10.0) || setback < 0.5) {
            out.push_back(cur);
            continue;
        }
        const double r = setback / std::tan(std::abs(turn) / 2.0);
        const Vec2 entry = cur + Vec2{std::cos(b_in), std::sin(b_in)} * (-setback);
        const int steps = std::max(2, (int)std::ceil(r * std::abs(turn) / max_seg_m));
        // arc from entry, rotating by `turn` about the fillet center
        const double side = turn >= 0.0 ? 1.0 : -1.0;
        const Vec2 center =
            entry + Vec2{std::cos(b_in + side * kPi / 2.0), std::sin(b_in + side * kPi / 2.0)} * r;
        for (int k = 0; k <= steps; ++k) {
            const double a = b_in - side * kPi / 2.0 + turn * (double(k) / steps);
            out.push_back(center + Vec2{std::cos(a), std::sin(a)} * r);
        }
    }
    out.push_back(waypoints.back());
    return out;
}

// Stateful path follower: projects onto the polyline with a monotone cursor,
// steers with a heading + cross-track law, and slows ahead of sharp corners.
class PathFollower {
public:
    PathFollower() = default;
    explicit PathFollower(FollowerGains gains) : gains_(gains) {}

    void set_path(std::vector<Vec2> path) {
        path_ = std::move(path);
        cursor_ = 0;
    }
    void append(const std::vector<Vec2>& more) {
        path_.insert(path_.end(), more.begin(), more.end());
    }
    const std::vector<Vec2>& path() const { return path_; }
    bool empty() const { return path_.size() < 2; }

    // Signed cross-track error at the current projection (positive = left of path).
    double cross_track_error(const VehicleState& s) const {
        if (empty()) return 0.0;
        const auto [seg, t] = project({s.x, s.y});
        const Vec2 a = path_[seg];
        const Vec2 b = path_[seg + 1];
        const Vec2 dir = b - a;
        const double len = dir.norm();
        if (len == 0.0) return 0.0;
        const Vec2 p = Vec2{s.x, s.y} - (a + dir * t);
        return (dir.x * p.y - dir.y * p.x) / len;
    }

    double remaining_distance(const VehicleState& s) const {
        if (empty()) return 0.0;
        const auto [seg, t] = project({s.x, s.y});
        double rem = distance(path_[seg] + (path_[seg + 1] - path_[seg]) * t, path_[seg + 1]);
        for (size_t i = seg + 1; i + 1 < path_.size(); ++i)
            rem += distance(path_[i], path_[i + 1]);
        return rem;
    }

    ControlCommand control(const VehicleState& s, const VehicleParams& p) {
        if (empty()) return {};
        const auto [seg, t] = project({s.x, s.y});
        cursor_ = seg;
        const Vec2 a = path_[seg];
        const Vec2 b = path_[seg + 1];
        const double path_heading = bearing(a, b);
        const double e_head = wrap_angle(path_heading - s.theta);
        const double e_ct = cross_track_error(s);

        ControlCommand u;
        u.steer = gains_.k_heading * e_head +
                  std::atan2(-gains_.k_cross * e_ct, std::max(s.v, 0.0) + gains_.v_soft);

        double v_ref = p.v_cruise;
        if (corner_within(seg, t, gains_.slow_distance_m)) v_ref = gains_.v_turn;
        u.accel = gains_.k_speed * (v_ref - s.v);
        return saturate(u, p);
    }

private:
    std::pair<size_t, double> project(const Vec2& pos) const {
        size_t best_seg = cursor_;
        double best_t = 0.0;
        double best_d = 1e300;
        const size_t lo = cursor_;
        const size_t hi = std::min(path_.size() - 1, cursor_ + 80);
        for (size_t i = lo; i < hi; ++i) {
            const Vec2 ab = path_[i + 1] - path_[i];
            const double len2 = ab.norm2();
            double t = len2 > 0.0 ? std::clamp((pos - path_[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
            const double d = distance(pos, path_[i] + ab * t);
            if (d < best_d - 1e-12) {
                best_d = d;
                best_seg = i;
                best_t = t;
            }
        }
        return {best_seg, best_t};
    }

    bool corner_within(size_t seg, double t, double horizon_m) const {
        double acc = distance(path_[seg] + (path_[seg + 1] - path_[seg]) * t, path_[seg + 1]);
        for (size_t i = seg + 1; i + 1 < path_.size() && acc < horizon_m; ++i) {
            const double turn =
                angle_abs_diff(bearing(path_[i], path_[i + 1]), bearing(path_[i - 1], path_[i]));
            if (turn > gains_.corner_angle_rad) return true;
            acc += distance(path_[i], path_[i + 1]);
        }
        return false;
    }

    FollowerGains gains_;
    std::vector<Vec2> path_;
    size_t cursor_ = 0;
};

// One-shot controller over a fixed polyline; empty path holds (zero command).
inline ControlCommand follow_path(const VehicleState& s, const std::vector<Vec2>& path,
                                  const VehicleParams& p,
                                  const FollowerGains& gains = {}) {
    if (path.size() < 2) return {};
    PathFollower f(gains);
    f.set_path(path);
    return f.control(s, p);
}

}  // namespace unav::vehicle
