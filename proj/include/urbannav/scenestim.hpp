#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "urbannav/rng.hpp"

namespace unav::scenestim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Cues and features

enum class CueKind {
    TrafficLight,  // z_TL
    StopSign,      // z_SS
    RoadRight,     // z_roadR
    RoadStraight,  // z_roadS
    RoadLeft,      // z_roadL
    CrossTrafficRight,  // z_ctR
    CrossTrafficLeft,   // z_ctL
    ParkedRight,        // z_pcR
    ParkedLeft,         // z_pcL
    Lanes,              // z_lanes
    OncomingOutgoing,   // z_onout
    OneWayRight,        // z_owR
    OneWayLeft,         // z_owL
    DoNotEnter,         // z_DNE
};
inline constexpr int kNumCueKinds = 14;

inline const char* to_string(CueKind k) {
    switch (k) {
        case CueKind::TrafficLight: return "z_TL";
        case CueKind::StopSign: return "z_SS";
        case CueKind::RoadRight: return "z_roadR";
        case CueKind::RoadStraight: return "z_roadS";
        case CueKind::RoadLeft: return "z_roadL";
        case CueKind::CrossTrafficRight: return "z_ctR";
        case CueKind::CrossTrafficLeft: return "z_ctL";
        case CueKind::ParkedRight: return "z_pcR";
        case CueKind::ParkedLeft: return "z_pcL";
        case CueKind::Lanes: return "z_lanes";
        case CueKind::OncomingOutgoing: return "z_onout";
        case CueKind::OneWayRight: return "z_owR";
        case CueKind::OneWayLeft: return "z_owL";
        default: return "z_DNE";
    }
}

inline std::optional<CueKind> cue_kind_from_string(const std::string& s) {
    for (int i = 0; i < kNumCueKinds; ++i)
        if (s == to_string((CueKind)i)) return (CueKind)i;
    return std::nullopt;
}

// Measured detection precision per cue class.
inline double cue_precision(CueKind k) {
    switch (k) {
        case CueKind::StopSign: return 0.97;
        case CueKind::TrafficLight: return 0.95;
        case CueKind::RoadRight:
        case CueKind::RoadStraight:
        case CueKind::RoadLeft: return 0.77;
        case CueKind::CrossTrafficRight:
        case CueKind::CrossTrafficLeft: return 0.86;
        case CueKind::ParkedRight:
        case CueKind::ParkedLeft: return 0.83;
        case CueKind::Lanes:
        case CueKind::OncomingOutgoing: return 0.96;
        case CueKind::OneWayRight:
        case CueKind::OneWayLeft:
        case CueKind::DoNotEnter: return 0.95;
    }
    return 0.5;
}

struct CueEvent {
    CueKind kind = CueKind::TrafficLight;
    bool detected = false;
};

enum class Feature { Intersection, Left, Straight, Right };
inline constexpr int kNumFeatures = 4;

// Per-feature marginals as log-odds; message products become sums.
struct FeatureBelief {
    double log_odds[kNumFeatures] = {0, 0, 0, 0};  // p = 0.5 each
    bool activated = false;

    double probability(Feature f) const {
        return 1.0 / (1.0 + std::exp(-log_odds[(int)f]));
    }
};

struct Message {
    Feature feature;
    double mu;  // 0.5 neutral, >0.5 supports, <0.5 dissents
};

// Edge map from detected cues to feature messages. Before the intersection is
// established, only the establishing cues (traffic light, stop sign, left and
// right road surface) send non-neutral messages.
inline std::vector<Message> message_for_cue(const CueEvent& cue, const FeatureBelief& beliefs) {
    std::vector<Message> out;
    if (!cue.detected) return out;  // neutral 0.5, identity

    const double p = cue_precision(cue.kind);
    auto establishing = [](CueKind k) {
        return k == CueKind::TrafficLight || k == CueKind::StopSign ||
               k == CueKind::RoadRight || k == CueKind::RoadLeft;
    };
    if (!beliefs.activated && !establishing(cue.kind)) return out;

    switch (cue.kind) {
        case CueKind::TrafficLight:
        case CueKind::StopSign:
            out.push_back({Feature::Intersection, p});
            break;
        case CueKind::RoadRight: out.push_back({Feature::Right, p}); break;
        case CueKind::RoadStraight: out.push_back({Feature::Straight, p}); break;
        case CueKind::RoadLeft: out.push_back({Feature::Left, p}); break;
        case CueKind::CrossTrafficRight: out.push_back({Feature::Right, p}); break;
        case CueKind::CrossTrafficLeft: out.push_back({Feature::Left, p}); break;
        case CueKind::ParkedRight: out.push_back({Feature::Right, p}); break;
        case CueKind::ParkedLeft: out.push_back({Feature::Left, p}); break;
        case CueKind::Lanes:
        case CueKind::OncomingOutgoing:
            out.push_back({Feature::Straight, p});
            break;
        // mutual exclusion edges
        case CueKind::OneWayRight: out.push_back({Feature::Left, 1.0 - p}); break;
        case CueKind::OneWayLeft: out.push_back({Feature::Right, 1.0 - p}); break;
        case CueKind::DoNotEnter: out.push_back({Feature::Straight, 1.0 - p}); break;
    }
    return out;
}

// Accumulate messages into the belief; activation latches once the
// intersection or a left/right turn feature exceeds 0.9.
inline FeatureBelief propagate(FeatureBelief beliefs, const std::vector<Message>& messages) {
    for (const auto& m : messages) {
        if (m.mu <= 0.0 || m.mu >= 1.0)
            throw std::invalid_argument("message mu must lie in (0, 1)");
        beliefs.log_odds[(int)m.feature] += std::log(m.mu / (1.0 - m.mu));
    }
    if (!beliefs.activated &&
        (beliefs.probability(Feature::Intersection) > 0.9 ||
         beliefs.probability(Feature::Left) > 0.9 ||
         beliefs.probability(Feature::Right) > 0.9))
        beliefs.activated = true;
    return beliefs;
}

// One evaluation step: messages from every detected cue, plus the weak dissent
// (0.49) for each direction with no detection once activated and within 20 m.
inline std::vector<Message> step_messages(const std::vector<CueEvent>& cues,
                                          const FeatureBelief& beliefs,
                                          double distance_to_intersection_m) {
    std::vector<Message> msgs;
    bool direction_seen[kNumFeatures] = {false, false, false, false};
    for (const auto& cue : cues) {
        for (const auto& m : message_for_cue(cue, beliefs)) {
            if (m.mu > 0.5) direction_seen[(int)m.feature] = true;
            msgs.push_back(m);
        }
    }
    if (beliefs.activated && distance_to_intersection_m < 20.0) {
        for (Feature f : {Feature::Left, Feature::Straight, Feature::Right})
            if (!direction_seen[(int)f]) msgs.push_back({f, 0.49});
    }
    return msgs;
}

// ---------------------------------------------------------------------------
// Height -> distance calibration

enum class ObjClass { TrafficLight, StopSign, Car };

inline std::optional<ObjClass> obj_class_from_string(const std::string& s) {
    if (s == "traffic-light") return ObjClass::TrafficLight;
    if (s == "stop-sign") return ObjClass::StopSign;
    if (s == "car") return ObjClass::Car;
    return std::nullopt;
}

// Inverse-height distance model d = a/h + b with a fixed residual sigma.
struct CalibCurve {
    double a = 0.0;
    double b = 0.0;
    double sigma_m = 0.0;
    double h_min_px = 1.0;
    double h_max_px = 1e9;

    double eval(double h_px) const { return a / h_px + b; }
};

// Fig. 22 residuals: stop sign 1.7 m, traffic light 5.9 m. The (a, b)
// coefficients are synthetic pinhole defaults exposed in config.
struct CalibTable {
    CalibCurve stop_sign{6000.0, -2.0, 1.7, 20.0, 400.0};
    CalibCurve traffic_light{9000.0, -1.0, 5.9, 20.0, 400.0};

    const CalibCurve& for_class(ObjClass c) const {
        return c == ObjClass::StopSign ? stop_sign : traffic_light;
    }
};

struct RangeMeasurement {
    double distance_m = 0.0;
    double sigma_m = 0.0;
};

inline std::optional<RangeMeasurement> distance_from_height(const CalibTable& table,
                                                            ObjClass cls, double h_px) {
    const CalibCurve& c = table.for_class(cls);
    if (h_px < c.h_min_px || h_px > c.h_max_px) return std::nullopt;  // skip update
    return RangeMeasurement{c.eval(h_px), c.sigma_m};
}

// Least-squares fit of d = a/h + b from (h, d) samples.
inline CalibCurve fit_inverse_height(const std::vector<std::pair<double, double>>& samples) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [h, d] : samples) {
        const double u = 1.0 / h;
        sx += u;
        sy += d;
        sxx += u * u;
        sxy += u * d;
    }
    const double n = (double)samples.size();
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double b = (sy - a * sx) / n;
    CalibCurve c;
    c.a = a;
    c.b = b;
    double ss = 0.0;
    for (const auto& [h, d] : samples) {
        const double r = d - (a / h + b);
        ss += r * r;
    }
    c.sigma_m = n > 2 ? std::sqrt(ss / (n - 2)) : 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// 1-D static range filter

struct RangeBelief {
    double mean_m = 0.0;
    double var_m2 = 1e6;
    double q_m2 = 0.01;  // odometry noise variance per step
    double r_m2 = 1.0;   // default measurement noise variance
    bool initialized = false;
};

inline RangeBelief kf1d_predict(const RangeBelief& rb, double dt_m) {
    RangeBelief out = rb;
    out.mean_m = rb.mean_m - dt_m;
    out.var_m2 = rb.var_m2 + rb.q_m2;
    return out;
}

inline RangeBelief kf1d_update(const RangeBelief& rb, double z_m, double r_m2 = -1.0) {
    const double r = r_m2 < 0.0 ? rb.r_m2 : r_m2;
    if (r <= 0.0) throw std::invalid_argument("measurement variance must be > 0");
    RangeBelief out = rb;
    const double gain = rb.var_m2 / (rb.var_m2 + r);
    out.mean_m = rb.mean_m + gain * (z_m - rb.mean_m);
    out.var_m2 = rb.var_m2 - gain * rb.var_m2;
    out.initialized = true;
    return out;
}

// ---------------------------------------------------------------------------
// Pixel-domain classifiers (pure functions over pre-extracted segments)

struct BinaryGrid {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> cells;  // row-major, nonzero = road

    uint8_t at(int x, int y) const { return cells[(size_t)y * width + x]; }
};

struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open

    long area() const { return (long)(x1 - x0) * (y1 - y0); }
};

struct RoadRois {
    PixelRect right, straight, left;
};

// Road-direction rule: a direction exists when the road-pixel fraction in its
// region of interest strictly exceeds 0.2.
inline std::array<bool, 3> classify_road_rois(const BinaryGrid& mask, const RoadRois& rois) {
    auto frac = [&](const PixelRect& r) {
        if (r.area() <= 0 || r.x0 < 0 || r.y0 < 0 || r.x1 > mask.width || r.y1 > mask.height)
            throw ConfigError("road ROI empty or outside mask bounds");
        long road = 0;
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x)
                if (mask.at(x, y)) ++road;
        return (double)road / (double)r.area();
    };
    return {frac(rois.right) > 0.2, frac(rois.straight) > 0.2, frac(rois.left) > 0.2};
}

struct SegmentObs {
    int frame_id = 0;
    ObjClass cls = ObjClass::Car;
    double score = 0.0;
    double height_px = 0.0;
    double left_end_height_px = 0.0;
    double right_end_height_px = 0.0;
    double area_px2 = 0.0;
    double x_center_px = 0.0;
    double image_width_px = 1232.0;
};

namespace detail {

inline bool passes_car_filters(const SegmentObs& s) {
    if (s.cls != ObjClass::Car) return false;
    if (s.score <= 0.95) return false;
    if (s.height_px <= 0.0) return false;
    const double length = s.height_px > 0.0 ? s.area_px2 / s.height_px : 0.0;
    return length / s.height_px > 2.0;
}

inline bool corresponds(const SegmentObs& a, const SegmentObs& b) {
    const double size_rel = std::abs(a.area_px2 - b.area_px2) /
                            std::max(a.area_px2, b.area_px2);
    if (size_rel >= 0.03) return false;
    const double dx_rel = std::abs(a.x_center_px - b.x_center_px) / a.image_width_px;
    return dx_rel < 0.05;
}

}  // namespace detail

// Frame-pair cross-traffic tracker: matched side-profile cars with steady
// horizontal motion set the flag for their direction of travel.
inline std::pair<bool, bool> track_cross_traffic(const std::vector<SegmentObs>& prev,
                                                 const std::vector<SegmentObs>& cur) {
    bool right = false, left = false;
    for (const auto& p : prev) {
        if (!detail::passes_car_filters(p)) continue;
        for (const auto& c : cur) {
            if (!detail::passes_car_filters(c)) continue;
            if (!detail::corresponds(p, c)) continue;
            const double dx = c.x_center_px - p.x_center_px;
            if (std::abs(dx) < 0.005 * p.image_width_px) continue;  // stationary, no track
            (dx > 0.0 ? right : left) = true;
        }
    }
    return {right, left};
}

// Parked-car orientation: a matched stationary car's lower end is its nose.
// Returns (z_pcR, z_pcL) contribution; equal end heights emit nothing.
inline std::pair<bool, bool> classify_parked_car(const SegmentObs& prev, const SegmentObs& cur) {
    if (!detail::passes_car_filters(prev) || !detail::passes_car_filters(cur)) return {false, false};
    if (!detail::corresponds(prev, cur)) return {false, false};
    if (std::abs(cur.x_center_px - prev.x_center_px) >= 0.005 * prev.image_width_px)
        return {false, false};  // moving
    if (cur.left_end_height_px < cur.right_end_height_px) return {false, true};   // nose left
    if (cur.right_end_height_px < cur.left_end_height_px) return {true, false};   // nose right
    return {false, false};
}

// ---------------------------------------------------------------------------
// Stochastic cue simulation

struct SceneTruth {
    bool is_intersection = false;
    bool opt_left = false, opt_straight = false, opt_right = false;
    bool traffic_light = false, stop_sign = false;
    bool cross_traffic_right = false, cross_traffic_left = false;
    bool parked_right = false, parked_left = false;
    bool lanes_visible = false, oncoming = false;
    bool one_way_right = false, one_way_left = false, do_not_enter = false;
};

struct CueRates {
    double rate[kNumCueKinds];

    CueRates() {
        for (int i = 0; i < kNumCueKinds; ++i) rate[i] = cue_precision((CueKind)i);
    }
    explicit CueRates(double uniform) {
        for (int i = 0; i < kNumCueKinds; ++i) rate[i] = uniform;
    }
};

// Sensing range per cue class.
inline double cue_range_m(CueKind k) {
    switch (k) {
        case CueKind::TrafficLight:
        case CueKind::StopSign:
        case CueKind::OneWayRight:
        case CueKind::OneWayLeft:
        case CueKind::DoNotEnter: return 60.0;
        case CueKind::RoadRight:
        case CueKind::RoadStraight:
        case CueKind::RoadLeft: return 50.0;
        case CueKind::CrossTrafficRight:
        case CueKind::CrossTrafficLeft: return 45.0;
        case CueKind::ParkedRight:
        case CueKind::ParkedLeft: return 40.0;
        case CueKind::Lanes:
        case CueKind::OncomingOutgoing: return 60.0;
    }
    return 0.0;
}

inline bool cue_condition(const SceneTruth& t, CueKind k) {
    switch (k) {
        case CueKind::TrafficLight: return t.traffic_light;
        case CueKind::StopSign: return t.stop_sign;
        case CueKind::RoadRight: return t.is_intersection && t.opt_right;
        case CueKind::RoadStraight: return t.is_intersection && t.opt_straight;
        case CueKind::RoadLeft: return t.is_intersection && t.opt_left;
        case CueKind::CrossTrafficRight: return t.cross_traffic_right;
        case CueKind::CrossTrafficLeft: return t.cross_traffic_left;
        case CueKind::ParkedRight: return t.parked_right;
        case CueKind::ParkedLeft: return t.parked_left;
        case CueKind::Lanes: return t.lanes_visible;
        case CueKind::OncomingOutgoing: return t.oncoming;
        case CueKind::OneWayRight: return t.one_way_right;
        case CueKind::OneWayLeft: return t.one_way_left;
        case CueKind::DoNotEnter: return t.do_not_enter;
    }
    return false;
}

// Emits one event per cue kind; a cue can only fire when its ground-truth
// condition holds and the intersection is within its sensing range (no false
// positives, matching the >=0.9-score filtering posture of the detectors).
inline std::vector<CueEvent> simulate_cues(const SceneTruth& truth, double distance_m,
                                           const CueRates& rates, Rng& rng) {
    std::vector<CueEvent> out;
    out.reserve(kNumCueKinds);
    for (int i = 0; i < kNumCueKinds; ++i) {
        const auto k = (CueKind)i;
        const double r = rates.rate[i];
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("cue rate outside [0, 1]");
        CueEvent ev{k, false};
        if (cue_condition(truth, k) && distance_m <= cue_range_m(k))
            ev.detected = rng.bernoulli(r);
        out.push_back(ev);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step-level estimator state

struct SceneEstimator {
    FeatureBelief beliefs;
    RangeBelief range;
    double intersection_depth_m = 15.0;  // converts traffic-light (end) fixes to start

    // One evaluation: odometry prediction, optional range fixes, cue messages.
    void step(double odo_dt_m, const std::vector<CueEvent>& cues,
              const std::vector<RangeMeasurement>& range_fixes) {
        if (range.initialized) range = kf1d_predict(range, odo_dt_m);
        for (const auto& f : range_fixes) range = kf1d_update(range, f.distance_m, f.sigma_m * f.sigma_m);
        const double dist = range.initialized ? range.mean_m : 1e9;
        beliefs = propagate(beliefs, step_messages(cues, beliefs, dist));
    }
};

}  // namespace unav::scenestim
