#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "urbannav/citygen.hpp"
#include "urbannav/estimator.hpp"
#include "urbannav/navigator.hpp"
#include "urbannav/noise.hpp"
#include "urbannav/rng.hpp"
#include "urbannav/scenestim.hpp"
#include "urbannav/vehicle.hpp"

namespace unav::harness {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Outcome { Reached, Lost, Timeout };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Reached: return "reached";
        case Outcome::Lost: return "lost";
        default: return "timeout";
    }
}

inline Outcome outcome_from_string(const std::string& s) {
    if (s == "reached") return Outcome::Reached;
    if (s == "lost") return Outcome::Lost;
    if (s == "timeout") return Outcome::Timeout;
    throw ConfigError("unknown outcome: " + s);
}

struct ScenarioConfig {
    citygen::MapParams map;
    NoiseConfig noise;
    vehicle::VehicleParams veh;
    vehicle::FollowerGains gains;
    navigator::StrategyConfig strategy;

    double landmark_density_per_km2 = 1.0;
    double landmark_rate = 1.0;           // detection probability per pass
    double landmark_sense_radius_m = 25.0;
    double lost_threshold_m = 100.0;
    double decision_trigger_m = 20.0;     // distance ahead of a node to decide
    double min_separation_m = -1.0;       // <0: 25% of bounds diagonal
    uint64_t seed = 1;
    uint64_t world_seed = 0;              // 0: derive world from `seed`
    long timeout_steps = -1;              // <0: 4x euclidean time budget
    double range_cap_m = -1.0;            // >0: endless-driving mode, respawning goals
    bool scene_gate = false;              // gate decisions on scene-belief activation

    void validate() const {
        if (landmark_rate < 0.0 || landmark_rate > 1.0)
            throw ConfigError("landmark rate must be in [0, 1]");
        if (landmark_density_per_km2 < 0.0) throw ConfigError("landmark density must be >= 0");
        if (lost_threshold_m <= 0.0) throw ConfigError("lost threshold must be > 0");
        if (decision_trigger_m <= 0.0) throw ConfigError("decision trigger must be > 0");
        if (landmark_sense_radius_m <= 0.0) throw ConfigError("sense radius must be > 0");
        if (veh.dt_s <= 0.0 || veh.v_cruise <= 0.0)
            throw ConfigError("vehicle dt and cruise speed must be > 0");
        if (strategy.goal_radius_m <= 0.0) throw ConfigError("goal radius must be > 0");
    }
};

inline navigator::StrategyKind strategy_from_string(const std::string& s) {
    if (s == "straight-to-goal") return navigator::StrategyKind::StraightToGoal;
    if (s == "landmark-to-landmark") return navigator::StrategyKind::LandmarkToLandmark;
    if (s == "hybrid") return navigator::StrategyKind::Hybrid;
    throw ConfigError("unknown strategy: " + s);
}

inline const char* to_string(navigator::StrategyKind k) {
    switch (k) {
        case navigator::StrategyKind::StraightToGoal: return "straight-to-goal";
        case navigator::StrategyKind::LandmarkToLandmark: return "landmark-to-landmark";
        default: return "hybrid";
    }
}

// Overlays JSON fields on top of defaults; every key is optional.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
    ScenarioConfig c;
    auto get = [](const nlohmann::json& o, const char* k, double& dst) {
        if (o.contains(k)) dst = o.at(k).get<double>();
    };
    if (j.contains("map")) {
        const auto& m = j["map"];
        get(m, "area_km2", c.map.area_km2);
        get(m, "block_min_m", c.map.block_min_m);
        get(m, "block_max_m", c.map.block_max_m);
        get(m, "dead_end_fraction", c.map.dead_end_fraction);
        get(m, "one_way_fraction", c.map.one_way_fraction);
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        if (n.contains("compass_2sigma_deg"))
            c.noise.compass_2sigma_rad = deg2rad(n["compass_2sigma_deg"].get<double>());
        get(n, "encoder_counts_per_rev", c.noise.encoder_counts_per_rev);
        get(n, "wheel_radius_m", c.noise.wheel_radius_m);
        get(n, "slip_frac", c.noise.slip_frac);
        get(n, "landmark_fix_sigma_m", c.noise.landmark_fix_sigma_m);
        get(n, "q_theta_per_m", c.noise.q_theta_per_m);
        get(n, "init_sigma_xy_m", c.noise.init_sigma_xy_m);
        if (n.contains("init_sigma_theta_deg"))
            c.noise.init_sigma_theta_rad = deg2rad(n["init_sigma_theta_deg"].get<double>());
    }
    if (j.contains("vehicle")) {
        const auto& v = j["vehicle"];
        get(v, "wheelbase_m", c.veh.wheelbase_m);
        get(v, "dt_s", c.veh.dt_s);
        get(v, "steer_max_rad", c.veh.steer_max_rad);
        get(v, "accel_max", c.veh.accel_max);
        get(v, "v_cruise", c.veh.v_cruise);
    }
    if (j.contains("strategy")) {
        const auto& s = j["strategy"];
        if (s.contains("kind")) c.strategy.kind = strategy_from_string(s["kind"].get<std::string>());
        get(s, "hybrid_threshold_m", c.strategy.hybrid_threshold_m);
        get(s, "goal_radius_m", c.strategy.goal_radius_m);
    }
    get(j, "landmark_density_per_km2", c.landmark_density_per_km2);
    get(j, "landmark_rate", c.landmark_rate);
    get(j, "landmark_sense_radius_m", c.landmark_sense_radius_m);
    get(j, "lost_threshold_m", c.lost_threshold_m);
    get(j, "decision_trigger_m", c.decision_trigger_m);
    get(j, "min_separation_m", c.min_separation_m);
    get(j, "range_cap_m", c.range_cap_m);
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("timeout_steps")) c.timeout_steps = j["timeout_steps"].get<long>();
    if (j.contains("scene_gate")) c.scene_gate = j["scene_gate"].get<bool>();
    c.validate();
    return c;
}

struct TrialRecord {
    uint64_t seed = 0;
    Outcome outcome = Outcome::Timeout;
    double manhattan_m = 0.0;   // odometer path length
    double euclidean_m = 0.0;   // straight-line start-to-goal range
    double final_axis_m = 0.0;
    long landmark_updates = 0;
    long decisions = 0;
};

namespace detail {

// Scene ground truth for a node approach, derived from graph geometry plus
// per-node furnishing drawn from the world seed.
inline scenestim::SceneTruth node_scene_truth(const citygen::RoadNetwork& net, int node,
                                              int arrival_edge, uint64_t world_seed) {
    scenestim::SceneTruth t;
    const int from = arrival_edge >= 0 ? net.other_end(arrival_edge, node) : -1;
    double approach_b = 0.0;
    if (from >= 0) approach_b = bearing(net.nodes[from].pos, net.nodes[node].pos);
    int exits = 0;
    for (int e : net.adjacency[node]) {
        if (e == arrival_edge) continue;
        if (!net.traversable_from(e, node)) continue;
        ++exits;
        const int m = net.other_end(e, node);
        const double rel = wrap_angle(bearing(net.nodes[node].pos, net.nodes[m].pos) - approach_b);
        if (std::abs(rel) <= kPi / 4.0) t.opt_straight = true;
        else if (rel > kPi / 4.0 && rel < 3.0 * kPi / 4.0) t.opt_left = true;
        else if (rel < -kPi / 4.0 && rel > -3.0 * kPi / 4.0) t.opt_right = true;
    }
    t.is_intersection = exits >= 2;
    Rng furnish(derive_seed(world_seed, 0x5CE7E, (uint64_t)node));
    if (t.is_intersection) {
        if (furnish.bernoulli(0.5)) t.traffic_light = true;
        else t.stop_sign = true;
        t.cross_traffic_right = t.opt_right && furnish.bernoulli(0.5);
        t.cross_traffic_left = t.opt_left && furnish.bernoulli(0.5);
        t.parked_right = t.opt_right && furnish.bernoulli(0.3);
        t.parked_left = t.opt_left && furnish.bernoulli(0.3);
        t.lanes_visible = t.opt_straight && furnish.bernoulli(0.7);
        t.oncoming = t.opt_straight && furnish.bernoulli(0.3);
    }
    return t;
}

}  // namespace detail

// Single goal-seeking trial. Wiring: the controller tracks the road with
// locally-sensed truth, while every navigation decision and landmark gate uses
// the estimated pose only.
inline TrialRecord run_trial(const ScenarioConfig& cfg, std::ostream* trace = nullptr) {
    cfg.validate();
    const uint64_t wseed = cfg.world_seed ? cfg.world_seed : derive_seed(cfg.seed, 0x30);
    const auto net = citygen::generate_map(cfg.map, derive_seed(wseed, 0x31));
    const auto lms =
        citygen::place_landmarks(net, cfg.landmark_density_per_km2, derive_seed(wseed, 0x32));
    const auto ep = citygen::sample_endpoints(net, derive_seed(wseed, 0x33), cfg.min_separation_m);
    Rng rng(derive_seed(cfg.seed, 0x34));

    const bool range_mode = cfg.range_cap_m > 0.0;

    // In endless-driving mode every goal of a trial lies along the same travel
    // axis (short jogs aside), so the route shape is a long out-and-back line
    // rather than a diagonal staircase that splits drift between both axes.
    auto pick_range_goal = [&](int from_node, const Vec2& pos) -> Vec2 {
        double min_sep = cfg.min_separation_m;
        if (min_sep < 0.0) min_sep = 0.25 * net.bounds.diagonal();
        int fallback = -1;
        for (int attempt = 0; attempt < 400; ++attempt) {
            const int cand = (int)rng.uniform_index(net.nodes.size());
            const Vec2 cp = net.nodes[cand].pos;
            if (cand == from_node || distance(cp, pos) < min_sep) continue;
            if (!citygen::reachable(net, from_node, cand)) continue;
            if (fallback < 0) fallback = cand;
            if (std::abs(cp.y - pos.y) <= 0.1 * std::abs(cp.x - pos.x)) return cp;
        }
        if (fallback < 0) fallback = (from_node + 1) % (int)net.nodes.size();
        return net.nodes[fallback].pos;
    };

    Vec2 goal = range_mode ? pick_range_goal(ep.start_node, ep.start) : ep.goal;
    const double first_leg_euclid = distance(ep.start, goal);

    TrialRecord rec;
    rec.seed = cfg.seed;
    rec.euclidean_m = first_leg_euclid;

    vehicle::VehicleState truth{ep.start.x, ep.start.y, ep.start_heading_rad, 0.0};
    vehicle::PathFollower follower(cfg.gains);
    navigator::IntersectionMemory memory;
    scenestim::SceneEstimator scene;
    std::optional<scenestim::SceneTruth> scene_truth;

    int cur_from = ep.start_node;
    int cur_to = -1;
    int arrival_edge = -1;

    estimator::PoseBelief belief = estimator::PoseBelief::init(ep.start, truth.theta, cfg.noise);

    auto make_leg_path = [&](int from, int corner, int to) {
        std::vector<Vec2> wps;
        if (from >= 0 && from != corner) wps.push_back(net.nodes[from].pos);
        wps.push_back(net.nodes[corner].pos);
        wps.push_back(net.nodes[to].pos);
        follower.set_path(vehicle::make_path(wps));
    };

    auto decide_at = [&](int node) -> bool {
        const Vec2 est = belief.position();
        const Vec2 waypoint = navigator::select_waypoint(cfg.strategy, belief, lms, goal);

        std::vector<navigator::DecisionOption> options;
        std::vector<int> option_edges;
        auto add_option = [&](int e, bool u_turn) {
            const int m = net.other_end(e, node);
            navigator::DecisionOption o;
            o.index = (int)options.size();
            o.exit_bearing_rad = bearing(net.nodes[node].pos, net.nodes[m].pos);
            // goal bearing taken one block past the intersection along this exit
            const Vec2 post = est + (net.nodes[m].pos - net.nodes[node].pos);
            o.goal_bearing_rad = bearing(post, waypoint);
            o.penalty_rad =
                memory.penalty(est, navigator::decision_key_from_bearing(o.exit_bearing_rad));
            o.is_u_turn = u_turn;
            options.push_back(o);
            option_edges.push_back(e);
        };
        for (int e : net.adjacency[node]) {
            if (e == arrival_edge) continue;
            if (!net.traversable_from(e, node)) continue;
            add_option(e, false);
        }
        if (options.empty()) {
            // dead end: U-turn is the only move
            if (arrival_edge >= 0 && net.traversable_from(arrival_edge, node))
                add_option(arrival_edge, true);
            if (options.empty()) return false;
        }
        const int pick = navigator::decide_intersection(options);
        const int e = option_edges[pick];
        memory.record_visit(
            est, navigator::decision_key_from_bearing(options[pick].exit_bearing_rad));
        ++rec.decisions;

        const int next = net.other_end(e, node);
        make_leg_path(cur_from, node, next);
        arrival_edge = e;
        cur_from = node;
        cur_to = next;
        scene_truth.reset();
        scene = scenestim::SceneEstimator{};
        if (trace) {
            nlohmann::json d;
            d["event"] = "decision";
            d["node"] = node;
            d["est"] = {est.x, est.y};
            d["chosen_exit_bearing_rad"] = options[pick].exit_bearing_rad;
            d["n_options"] = options.size();
            *trace << d.dump() << "\n";
        }
        return true;
    };

    // first leg: full option set at the start node, truth heading snapped to it
    if (!decide_at(ep.start_node)) {
        rec.outcome = Outcome::Timeout;
        rec.final_axis_m = estimator::ellipse_major_axis(belief);
        return rec;
    }
    truth.theta = bearing(net.nodes[cur_from].pos, net.nodes[cur_to].pos);
    belief.theta = truth.theta;

    long timeout = cfg.timeout_steps;
    if (timeout < 0) {
        const double budget = range_mode ? cfg.range_cap_m : first_leg_euclid;
        timeout = (long)std::ceil(4.0 * (budget / cfg.veh.v_cruise) / cfg.veh.dt_s);
    }

    std::vector<char> lm_armed(lms.entries.size(), 0);
    std::vector<int> lm_near;
    const double refresh_pad = 16.0 * (cfg.veh.v_cruise * 1.5) * cfg.veh.dt_s;
    Vec2 leg_start = ep.start;
    double euclid_done = 0.0;

    for (long t = 0;; ++t) {
        if (t >= timeout) {
            rec.outcome = Outcome::Timeout;
            break;
        }

        const vehicle::ControlCommand cmd = follower.control(truth, cfg.veh);
        const vehicle::VehicleState next = vehicle::step_bicycle(truth, cmd, cfg.veh);
        const auto readings = vehicle::sense(truth, next, cmd, cfg.veh, cfg.noise, rng);
        rec.manhattan_m += readings.odo_distance_m;

        belief = estimator::predict(
            belief, readings.odo_distance_m,
            vehicle::steer_implied_dtheta(readings.odo_distance_m, cmd.steer, cfg.veh), cfg.noise);
        if (readings.compass_valid)
            belief = estimator::update_compass(belief, readings.compass_rad,
                                               cfg.noise.compass_sigma_rad());

        truth = next;
        const Vec2 tp{truth.x, truth.y};

        // landmark passes: one detection draw on entering the sensing radius
        if (!lms.entries.empty()) {
            if (t % 16 == 0) {
                lm_near.clear();
                for (int i = 0; i < (int)lms.entries.size(); ++i)
                    if (distance(tp, lms.entries[i].pos) <
                        cfg.landmark_sense_radius_m + refresh_pad)
                        lm_near.push_back(i);
            }
            for (int i : lm_near) {
                const double d = distance(tp, lms.entries[i].pos);
                if (d > cfg.landmark_sense_radius_m) {
                    lm_armed[i] = 0;
                    continue;
                }
                if (lm_armed[i]) continue;
                lm_armed[i] = 1;
                const bool detected = rng.bernoulli(cfg.landmark_rate);
                if (!detected) continue;
                if (!estimator::in_gate(belief, lms.entries[i].pos)) continue;
                estimator::LandmarkFix fix;
                fix.landmark_id = lms.entries[i].id;
                fix.sigma_m = cfg.noise.landmark_fix_sigma_m;
                fix.position = {tp.x + fix.sigma_m * rng.normal(),
                                tp.y + fix.sigma_m * rng.normal()};
                try {
                    belief = estimator::update_landmark(belief, fix);
                    ++rec.landmark_updates;
                } catch (const estimator::GateRejected&) {
                }
            }
        }

        if (estimator::is_lost(belief, cfg.lost_threshold_m)) {
            rec.outcome = Outcome::Lost;
            break;
        }
        if (range_mode && rec.manhattan_m >= cfg.range_cap_m) {
            rec.outcome = Outcome::Timeout;
            break;
        }

        if (distance(tp, goal) < cfg.strategy.goal_radius_m) {
            if (!range_mode) {
                rec.outcome = Outcome::Reached;
                break;
            }
            // respawn a fresh reachable goal and keep driving
            euclid_done += distance(leg_start, goal);
            leg_start = tp;
            goal = pick_range_goal(cur_to, tp);
        }

        // intersection approach
        const double d_node = distance(tp, net.nodes[cur_to].pos);
        if (cfg.scene_gate && d_node < 70.0) {
            if (!scene_truth)
                scene_truth = detail::node_scene_truth(net, cur_to, arrival_edge, wseed);
            const auto cues = scenestim::simulate_cues(
                *scene_truth, d_node, scenestim::CueRates(cfg.landmark_rate), rng);
            std::vector<scenestim::RangeMeasurement> fixes;
            for (const auto& cue : cues) {
                if (!cue.detected) continue;
                if (cue.kind == scenestim::CueKind::StopSign)
                    fixes.push_back({d_node + 1.7 * rng.normal(), 1.7});
                else if (cue.kind == scenestim::CueKind::TrafficLight)
                    fixes.push_back({d_node + 5.9 * rng.normal(), 5.9});
            }
            scene.step(readings.odo_distance_m, cues, fixes);
        }
        if (d_node < cfg.decision_trigger_m) {
            const bool gate_open =
                !cfg.scene_gate || scene.beliefs.activated || d_node < 3.0;
            if (gate_open && !decide_at(cur_to)) {
                rec.outcome = Outcome::Timeout;
                break;
            }
        }

        if (trace && t % 10 == 0) {
            nlohmann::json s;
            s["t"] = t;
            s["truth"] = {truth.x, truth.y, truth.theta, truth.v};
            s["cmd"] = {cmd.accel, cmd.steer};
            s["odo_m"] = readings.odo_distance_m;
            if (readings.compass_valid) s["compass_rad"] = readings.compass_rad;
            s["belief"] = {belief.x, belief.y, belief.theta};
            s["cov_ut"] = {belief.cov[0], belief.cov[1], belief.cov[2],
                           belief.cov[4], belief.cov[5], belief.cov[8]};
            s["major_axis_m"] = estimator::ellipse_major_axis(belief);
            *trace << s.dump() << "\n";
        }
    }

    rec.final_axis_m = estimator::ellipse_major_axis(belief);
    if (range_mode)
        rec.euclidean_m = euclid_done + distance(leg_start, Vec2{truth.x, truth.y});
    return rec;
}

// Drives a fixed waypoint route with dead-reckoning plus compass only and
// returns the final belief. Used for covariance shape studies.
inline estimator::PoseBelief drive_route(const std::vector<Vec2>& waypoints,
                                         const NoiseConfig& noise,
                                         const vehicle::VehicleParams& vp,
                                         const vehicle::FollowerGains& gains, uint64_t seed) {
    if (waypoints.size() < 2) throw ConfigError("route needs at least two waypoints");
    Rng rng(derive_seed(seed, 0x40));
    vehicle::PathFollower follower(gains);
    follower.set_path(vehicle::make_path(waypoints));
    const double b0 = bearing(waypoints[0], waypoints[1]);
    vehicle::VehicleState truth{waypoints[0].x, waypoints[0].y, b0, 0.0};
    estimator::PoseBelief belief = estimator::PoseBelief::init(waypoints[0], b0, noise);

    double route_len = 0.0;
    for (size_t i = 0; i + 1 < waypoints.size(); ++i)
        route_len += distance(waypoints[i], waypoints[i + 1]);
    const long timeout = (long)std::ceil(4.0 * route_len / vp.v_cruise / vp.dt_s);

    for (long t = 0; t < timeout; ++t) {
        const auto cmd = follower.control(truth, vp);
        const auto next = vehicle::step_bicycle(truth, cmd, vp);
        const auto readings = vehicle::sense(truth, next, cmd, vp, noise, rng);
        belief = estimator::predict(
            belief, readings.odo_distance_m,
            vehicle::steer_implied_dtheta(readings.odo_distance_m, cmd.steer, vp), noise);
        if (readings.compass_valid)
            belief = estimator::update_compass(belief, readings.compass_rad,
                                               noise.compass_sigma_rad());
        truth = next;
        if (distance({truth.x, truth.y}, waypoints.back()) < 3.0) break;
    }
    return belief;
}

// ---------------------------------------------------------------------------
// Aggregation

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double rank = std::ceil(p / 100.0 * (double)v.size());
    const size_t i = (size_t)std::max(1.0, rank) - 1;
    return v[std::min(i, v.size() - 1)];
}

struct Summary {
    size_t n = 0;
    size_t reached = 0;
    size_t lost = 0;
    size_t timeout = 0;
    double success_rate = std::numeric_limits<double>::quiet_NaN();
    double mean_manhattan_m = std::numeric_limits<double>::quiet_NaN();
    double mean_euclidean_m = std::numeric_limits<double>::quiet_NaN();
    double mean_final_axis_m = std::numeric_limits<double>::quiet_NaN();
    double range80_m = 0.0;  // upper edge of the farthest bucket with >= 80% success
};

inline Summary summarize(const std::vector<TrialRecord>& recs, double bucket_m = 500.0) {
    Summary s;
    s.n = recs.size();
    if (recs.empty()) return s;
    double man = 0, euc = 0, axis = 0;
    std::map<long, std::pair<long, long>> buckets;  // index -> (reached, total)
    for (const auto& r : recs) {
        switch (r.outcome) {
            case Outcome::Reached: ++s.reached; break;
            case Outcome::Lost: ++s.lost; break;
            case Outcome::Timeout: ++s.timeout; break;
        }
        man += r.manhattan_m;
        euc += r.euclidean_m;
        axis += r.final_axis_m;
        auto& b = buckets[(long)std::floor(r.euclidean_m / bucket_m)];
        if (r.outcome == Outcome::Reached) ++b.first;
        ++b.second;
    }
    s.success_rate = (double)s.reached / (double)s.n;
    s.mean_manhattan_m = man / (double)s.n;
    s.mean_euclidean_m = euc / (double)s.n;
    s.mean_final_axis_m = axis / (double)s.n;
    for (const auto& [idx, b] : buckets)
        if ((double)b.first / (double)b.second >= 0.8)
            s.range80_m = std::max(s.range80_m, (double)(idx + 1) * bucket_m);
    return s;
}

struct StudyCell {
    std::string case_label;   // compass case for range studies, empty otherwise
    std::string strategy;
    double density_per_km2 = 0.0;
    double rate = 0.0;
    std::vector<TrialRecord> trials;
    Summary summary;
};

struct StudyTable {
    std::vector<StudyCell> cells;
    double bucket_m = 500.0;
};

// Work-stealing loop over preallocated indices; with threads <= 1 runs inline.
// Results written by index keep parallel output identical to serial.
template <class F>
inline void parallel_for(size_t n, int threads, F&& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const int nt = std::min<int>(threads, (int)n);
    pool.reserve(nt);
    for (int w = 0; w < nt; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

struct CompassCase {
    std::string label;
    double two_sigma_rad;
};

inline std::vector<CompassCase> default_compass_cases() {
    return {{"none", -1.0},
            {"pm30", deg2rad(30.0)},
            {"pm20", deg2rad(20.0)},
            {"pm10", deg2rad(10.0)}};
}

// Dead-reckoning range study: no landmarks, goals respawn until the vehicle is
// lost or hits the distance cap.
inline StudyTable run_range_study(const ScenarioConfig& base, size_t n_trials,
                                  int threads = 1,
                                  std::vector<CompassCase> cases = default_compass_cases(),
                                  double cap_m = 50000.0) {
    StudyTable table;
    if (n_trials == 0) return table;
    for (size_t ci = 0; ci < cases.size(); ++ci) {
        StudyCell cell;
        cell.case_label = cases[ci].label;
        cell.strategy = to_string(base.strategy.kind);
        cell.density_per_km2 = 0.0;
        cell.rate = 0.0;
        cell.trials.resize(n_trials);
        parallel_for(n_trials, threads, [&, ci](size_t ti) {
            ScenarioConfig cfg = base;
            cfg.landmark_density_per_km2 = 0.0;
            cfg.range_cap_m = cap_m;
            cfg.noise.compass_2sigma_rad = cases[ci].two_sigma_rad;
            cfg.world_seed = derive_seed(base.seed, 0x51, ti);
            cfg.seed = derive_seed(base.seed, 0x52 + ci, ti);
            cell.trials[ti] = run_trial(cfg);
        });
        cell.summary = summarize(cell.trials, table.bucket_m);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

// Strategy x density x rate grid. Worlds are shared across cells at equal
// trial index (common random numbers), and landmark sets nest across densities.
inline StudyTable run_landmark_study(const ScenarioConfig& base,
                                     const std::vector<navigator::StrategyKind>& strategies,
                                     const std::vector<double>& densities,
                                     const std::vector<double>& rates, size_t n_trials,
                                     int threads = 1) {
    StudyTable table;
    size_t cell_index = 0;
    for (auto sk : strategies)
        for (double den : densities)
            for (double rate : rates) {
                StudyCell cell;
                cell.strategy = to_string(sk);
                cell.density_per_km2 = den;
                cell.rate = rate;
                cell.trials.resize(n_trials);
                const size_t ci = cell_index++;
                parallel_for(n_trials, threads, [&, ci, sk, den, rate](size_t ti) {
                    ScenarioConfig cfg = base;
                    cfg.strategy.kind = sk;
                    cfg.landmark_density_per_km2 = den;
                    cfg.landmark_rate = rate;
                    cfg.world_seed = derive_seed(base.seed, 0x61, ti);
                    cfg.seed = derive_seed(base.seed, 0x100 + ci, ti);
                    cell.trials[ti] = run_trial(cfg);
                });
                cell.summary = summarize(cell.trials, table.bucket_m);
                table.cells.push_back(std::move(cell));
            }
    return table;
}

// ---------------------------------------------------------------------------
// Persistence. All floats go through fixed-width printf formatting so reruns
// are byte-identical.

namespace detail {

inline std::string fmt(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace detail

inline void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& recs) {
    os << "seed,outcome,manhattan_m,euclidean_m,final_axis_m,landmark_updates,decisions\n";
    for (const auto& r : recs)
        os << r.seed << ',' << to_string(r.outcome) << ',' << detail::fmt(r.manhattan_m) << ','
           << detail::fmt(r.euclidean_m) << ',' << detail::fmt(r.final_axis_m) << ','
           << r.landmark_updates << ',' << r.decisions << "\n";
}

inline void write_study_csv(std::ostream& os, const StudyTable& table) {
    os << "# euclidean_bucket_m=" << detail::fmt(table.bucket_m, 0) << "\n";
    os << "case,strategy,density_per_km2,rate,n,success_rate,mean_manhattan_m,"
          "mean_euclidean_m,mean_final_axis_m,range80_m\n";
    for (const auto& c : table.cells)
        os << c.case_label << ',' << c.strategy << ',' << detail::fmt(c.density_per_km2, 2) << ','
           << detail::fmt(c.rate, 2) << ',' << c.summary.n << ','
           << detail::fmt(c.summary.success_rate, 4) << ','
           << detail::fmt(c.summary.mean_manhattan_m) << ','
           << detail::fmt(c.summary.mean_euclidean_m) << ','
           << detail::fmt(c.summary.mean_final_axis_m) << ','
           << detail::fmt(c.summary.range80_m, 0) << "\n";
}

// ---------------------------------------------------------------------------
// Scene approach study (synthetic cue streams at configured precisions)

struct SceneStudyResult {
    int intersection_trials = 0;
    int detected_all_pre_arrival = 0;
    int null_trials = 0;
    int false_activations = 0;
};

inline SceneStudyResult run_scene_study(int n_intersections, int n_nulls, uint64_t seed,
                                        double start_m = 80.0, double step_m = 1.0) {
    using namespace scenestim;
    SceneStudyResult res;
    const CueRates rates;  // detection rates at the configured cue precisions

    auto run_approach = [&](const SceneTruth& truth, Rng& rng, bool& detected_all,
                            bool& activated) {
        SceneEstimator est;
        detected_all = false;
        activated = false;
        for (double d = start_m; d > 0.0; d -= step_m) {
            const auto cues = simulate_cues(truth, d, rates, rng);
            std::vector<RangeMeasurement> fixes;
            for (const auto& cue : cues) {
                if (!cue.detected) continue;
                if (cue.kind == CueKind::StopSign)
                    fixes.push_back({d + 1.7 * rng.normal(), 1.7});
                else if (cue.kind == CueKind::TrafficLight)
                    fixes.push_back({d + 5.9 * rng.normal(), 5.9});
            }
            est.step(step_m, cues, fixes);
            activated = activated || est.beliefs.activated;
            if (!detected_all) {
                bool all = est.beliefs.probability(Feature::Intersection) > 0.9;
                if (truth.opt_left) all = all && est.beliefs.probability(Feature::Left) > 0.9;
                if (truth.opt_straight)
                    all = all && est.beliefs.probability(Feature::Straight) > 0.9;
                if (truth.opt_right) all = all && est.beliefs.probability(Feature::Right) > 0.9;
                detected_all = all;
            }
        }
    };

    for (int i = 0; i < n_intersections; ++i) {
        Rng rng(derive_seed(seed, 0x71, (uint64_t)i));
        SceneTruth t;
        t.is_intersection = true;
        while (!t.opt_left && !t.opt_straight && !t.opt_right) {
            t.opt_left = rng.bernoulli(0.6);
            t.opt_straight = rng.bernoulli(0.6);
            t.opt_right = rng.bernoulli(0.6);
        }
        if (rng.bernoulli(0.5)) t.traffic_light = true;
        else t.stop_sign = true;
        t.cross_traffic_right = t.opt_right && rng.bernoulli(0.5);
        t.cross_traffic_left = t.opt_left && rng.bernoulli(0.5);
        t.parked_right = t.opt_right && rng.bernoulli(0.3);
        t.parked_left = t.opt_left && rng.bernoulli(0.3);
        t.lanes_visible = t.opt_straight && rng.bernoulli(0.7);
        t.oncoming = t.opt_straight && rng.bernoulli(0.3);
        bool detected = false, activated = false;
        run_approach(t, rng, detected, activated);
        ++res.intersection_trials;
        if (detected) ++res.detected_all_pre_arrival;
    }
    for (int i = 0; i < n_nulls; ++i) {
        Rng rng(derive_seed(seed, 0x72, (uint64_t)i));
        SceneTruth t;  // plain road; lane markings may still be visible
        t.lanes_visible = rng.bernoulli(0.7);
        t.oncoming = rng.bernoulli(0.3);
        bool detected = false, activated = false;
        run_approach(t, rng, detected, activated);
        ++res.null_trials;
        if (activated) ++res.false_activations;
    }
    return res;
}

// Replays a JSONL cue stream through the scene estimator and writes one belief
// record per input line. Returns the number of steps processed.
inline size_t scene_replay(std::istream& in, std::ostream& out) {
    using namespace scenestim;
    SceneEstimator est;
    CalibTable calib;
    size_t steps = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad replay line: ") + e.what());
        }
        std::vector<CueEvent> cues;
        for (const auto& c : j.at("cues")) {
            const auto kind = cue_kind_from_string(c.at("kind").get<std::string>());
            if (!kind) throw ConfigError("unknown cue kind: " + c.at("kind").get<std::string>());
            cues.push_back({*kind, c.at("detected").get<bool>()});
        }
        std::vector<RangeMeasurement> fixes;
        if (j.contains("segments")) {
            for (const auto& s : j["segments"]) {
                const auto cls = obj_class_from_string(s.at("class").get<std::string>());
                if (!cls) throw ConfigError("unknown segment class");
                if (*cls == ObjClass::Car) continue;
                const auto m = distance_from_height(calib, *cls, s.at("height_px").get<double>());
                if (!m) continue;
                RangeMeasurement f = *m;
                if (*cls == ObjClass::TrafficLight) f.distance_m -= est.intersection_depth_m;
                fixes.push_back(f);
            }
        }
        est.step(j.value("odo_dt_m", 0.0), cues, fixes);
        ++steps;

        nlohmann::json rec;
        rec["t"] = j.value("t", 0.0);
        rec["p_int"] = est.beliefs.probability(Feature::Intersection);
        rec["p_left"] = est.beliefs.probability(Feature::Left);
        rec["p_straight"] = est.beliefs.probability(Feature::Straight);
        rec["p_right"] = est.beliefs.probability(Feature::Right);
        rec["activated"] = est.beliefs.activated;
        if (est.range.initialized) {
            rec["range_mean_m"] = est.range.mean_m;
            rec["range_sigma_m"] = std::sqrt(est.range.var_m2);
        }
        out << rec.dump() << "\n";
    }
    return steps;
}

}  // namespace unav::harness
