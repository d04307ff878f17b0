#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "urbannav/angles.hpp"
#include "urbannav/citygen.hpp"
#include "urbannav/estimator.hpp"
#include "urbannav/geometry.hpp"

namespace unav::navigator {

struct DecisionOption {
    int index = 0;
    double exit_bearing_rad = 0.0;   // heading after the decision
    double goal_bearing_rad = 0.0;   // direction to target after the decision
    double penalty_rad = 0.0;
    bool is_u_turn = false;
};

inline double option_cost(const DecisionOption& o) {
    return angle_abs_diff(o.exit_bearing_rad, o.goal_bearing_rad) + o.penalty_rad;
}

// Compass decision law: argmin over options of wrapped |exit - goal| + penalty,
// ties broken by lowest index.
inline int decide_intersection(const std::vector<DecisionOption>& options) {
    if (options.empty()) throw std::invalid_argument("no intersection options");
    int best = 0;
    double best_cost = option_cost(options[0]);
    for (size_t i = 1; i < options.size(); ++i) {
        const double c = option_cost(options[i]);
        if (c < best_cost) {
            best_cost = c;
            best = (int)i;
        }
    }
    return best;
}

// Decisions are identified by their absolute exit direction quantized to the
// eight compass half-quadrants, so a repeat approach from a different leg still
// matches the same physical choice.
inline int decision_key_from_bearing(double exit_bearing_rad) {
    int k = (int)std::lround(wrap_angle(exit_bearing_rad) / (kPi / 4.0));
    return ((k % 8) + 8) % 8;
}

struct VisitRecord {
    Vec2 est_pos;                        // estimated position at detection
    std::map<int, int> decision_counts;  // decision key -> times taken
};

// Visited-intersection list keyed on uncertain pose. Matching is nearest
// within r_match; mismatches at high pose uncertainty are accepted behavior.
struct IntersectionMemory {
    std::vector<VisitRecord> visits;
    double r_match_m = 30.0;
    double gamma_increment_rad = kPi / 2.0;

    std::optional<size_t> match(const Vec2& est_pos) const {
        std::optional<size_t> best;
        double best_d = r_match_m;
        for (size_t i = 0; i < visits.size(); ++i) {
            const double d = distance(visits[i].est_pos, est_pos);
            if (d <= best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    double penalty(const Vec2& est_pos, int decision_key) const {
        const auto m = match(est_pos);
        if (!m) return 0.0;
        const auto it = visits[*m].decision_counts.find(decision_key);
        if (it == visits[*m].decision_counts.end()) return 0.0;
        return gamma_increment_rad * it->second;
    }

    void record_visit(const Vec2& est_pos, int decision_key) {
        if (auto m = match(est_pos)) {
            visits[*m].decision_counts[decision_key] += 1;
        } else {
            VisitRecord r;
            r.est_pos = est_pos;
            r.decision_counts[decision_key] = 1;
            visits.push_back(std::move(r));
        }
    }
};

inline std::optional<size_t> match_intersection(const IntersectionMemory& mem,
                                                const Vec2& est_pos) {
    return mem.match(est_pos);
}

inline void record_visit(IntersectionMemory& mem, const Vec2& est_pos, int decision_key) {
    mem.record_visit(est_pos, decision_key);
}

enum class StrategyKind { StraightToGoal, LandmarkToLandmark, Hybrid };

struct StrategyConfig {
    StrategyKind kind = StrategyKind::StraightToGoal;
    double hybrid_threshold_m = 50.0;
    double goal_radius_m = 25.0;
    double landmark_standoff_m = 30.0;  // a landmark this close is "visited"
};

// Landmark-seeking rule: nearest landmark to the estimate that is strictly
// closer to the goal than the estimate is; falls back to the goal. Landmarks
// the vehicle is effectively standing on are skipped so the target advances.
inline Vec2 nearest_qualifying_landmark(const estimator::PoseBelief& b,
                                        const citygen::LandmarkSet& lms, const Vec2& goal,
                                        double standoff_m = 30.0) {
    const Vec2 mean = b.position();
    const double my_goal_dist = distance(mean, goal);
    std::optional<Vec2> best;
    double best_d = 1e300;
    for (const auto& lm : lms.entries) {
        if (distance(lm.pos, goal) >= my_goal_dist) continue;
        const double d = distance(mean, lm.pos);
        if (d < standoff_m) continue;
        if (d < best_d) {
            best_d = d;
            best = lm.pos;
        }
    }
    return best.value_or(goal);
}

inline Vec2 select_waypoint(const StrategyConfig& strategy, const estimator::PoseBelief& b,
                            const citygen::LandmarkSet& lms, const Vec2& goal) {
    switch (strategy.kind) {
        case StrategyKind::StraightToGoal:
            return goal;
        case StrategyKind::LandmarkToLandmark:
            return nearest_qualifying_landmark(b, lms, goal, strategy.landmark_standoff_m);
        case StrategyKind::Hybrid:
            if (estimator::ellipse_major_axis(b) < strategy.hybrid_threshold_m) return goal;
            return nearest_qualifying_landmark(b, lms, goal, strategy.landmark_standoff_m);
    }
    return goal;
}

}  // namespace unav::navigator
