#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "urbannav/harness.hpp"

using namespace unav;
using namespace unav::harness;

namespace {

ScenarioConfig small_world(uint64_t seed) {
    ScenarioConfig c;
    c.map.area_km2 = 1.0;
    c.min_separation_m = 300.0;
    c.seed = seed;
    return c;
}

ScenarioConfig zero_noise(uint64_t seed) {
    ScenarioConfig c = small_world(seed);
    c.noise.encoder_counts_per_rev = 0.0;
    c.noise.slip_frac = 0.0;
    c.noise.compass_2sigma_rad = 0.0;
    c.landmark_density_per_km2 = 40.0;
    c.landmark_rate = 1.0;
    return c;
}

}  // namespace

TEST_CASE("config validation rejects bad ranges before simulation") {
    ScenarioConfig c;
    c.landmark_rate = 1.5;
    REQUIRE_THROWS_AS(run_trial(c), ConfigError);
    c = ScenarioConfig{};
    c.landmark_density_per_km2 = -1.0;
    REQUIRE_THROWS_AS(run_trial(c), ConfigError);
    c = ScenarioConfig{};
    c.lost_threshold_m = 0.0;
    REQUIRE_THROWS_AS(run_trial(c), ConfigError);
    REQUIRE_THROWS_AS(config_from_json({{"landmark_rate", 2.0}}), ConfigError);
    REQUIRE_THROWS_AS(config_from_json({{"strategy", {{"kind", "warp"}}}}), ConfigError);
}

TEST_CASE("config overlay picks up nested fields") {
    nlohmann::json j;
    j["map"]["area_km2"] = 4.0;
    j["noise"]["compass_2sigma_deg"] = 20.0;
    j["strategy"]["kind"] = "hybrid";
    j["landmark_rate"] = 0.4;
    j["seed"] = 99;
    const auto c = config_from_json(j);
    REQUIRE(c.map.area_km2 == 4.0);
    REQUIRE(c.noise.compass_2sigma_rad == Catch::Approx(deg2rad(20.0)));
    REQUIRE(c.strategy.kind == navigator::StrategyKind::Hybrid);
    REQUIRE(c.landmark_rate == 0.4);
    REQUIRE(c.seed == 99);
}

TEST_CASE("zero noise with dense landmarks reaches the goal with a tight belief") {
    const auto rec = run_trial(zero_noise(5));
    REQUIRE(rec.outcome == Outcome::Reached);
    // initial axis is 4 * 1 m; exact sensing keeps it from growing
    REQUIRE(rec.final_axis_m <= 4.5);
    REQUIRE(rec.manhattan_m >= rec.euclidean_m - 2.0 * 25.0);
}

TEST_CASE("no compass and no landmarks loses the vehicle within hundreds of meters") {
    ScenarioConfig c = small_world(11);
    c.noise.compass_2sigma_rad = -1.0;
    c.landmark_density_per_km2 = 0.0;
    double total = 0.0;
    const int kTrials = 10;
    for (int i = 0; i < kTrials; ++i) {
        c.seed = 100 + i;
        const auto rec = run_trial(c);
        REQUIRE(rec.outcome == Outcome::Lost);
        total += rec.manhattan_m;
    }
    const double mean = total / kTrials;
    REQUIRE(mean > 100.0);
    REQUIRE(mean < 900.0);
}

TEST_CASE("identical configs give identical trial records") {
    const auto a = run_trial(small_world(21));
    const auto b = run_trial(small_world(21));
    REQUIRE(a.outcome == b.outcome);
    REQUIRE(a.manhattan_m == b.manhattan_m);
    REQUIRE(a.euclidean_m == b.euclidean_m);
    REQUIRE(a.final_axis_m == b.final_axis_m);
    REQUIRE(a.landmark_updates == b.landmark_updates);
    REQUIRE(a.decisions == b.decisions);
}

TEST_CASE("range study emits one row per compass case") {
    ScenarioConfig c = small_world(31);
    const auto table = run_range_study(c, 2, 1, default_compass_cases(), 1500.0);
    REQUIRE(table.cells.size() == 4);
    REQUIRE(table.cells[0].case_label == "none");
    REQUIRE(table.cells[3].case_label == "pm10");
    for (const auto& cell : table.cells) REQUIRE(cell.trials.size() == 2);
    // no compass is lost far earlier than a +-30 degree compass
    REQUIRE(table.cells[0].summary.mean_manhattan_m <
            table.cells[1].summary.mean_manhattan_m);
}

TEST_CASE("zero-trial range study returns an empty table") {
    const auto table = run_range_study(small_world(1), 0, 1);
    REQUIRE(table.cells.empty());
}

TEST_CASE("summarize computes rates, means, and percentiles") {
    std::vector<TrialRecord> recs;
    for (int i = 0; i < 10; ++i) {
        TrialRecord r;
        r.outcome = i < 8 ? Outcome::Reached : Outcome::Lost;
        r.manhattan_m = 100.0 * (i + 1);
        r.euclidean_m = 80.0 * (i + 1);
        recs.push_back(r);
    }
    const auto s = summarize(recs);
    REQUIRE(s.n == 10);
    REQUIRE(s.success_rate == Catch::Approx(0.8));
    REQUIRE(s.mean_manhattan_m == Catch::Approx(550.0));

    const auto empty = summarize({});
    REQUIRE(empty.n == 0);
    REQUIRE(std::isnan(empty.success_rate));

    REQUIRE(percentile({1.0, 2.0, 3.0}, 50.0) == 2.0);
    REQUIRE(percentile({1.0, 2.0, 3.0}, 100.0) == 3.0);
    REQUIRE(std::isnan(percentile({}, 50.0)));
}

TEST_CASE("aggregation is order independent") {
    std::vector<TrialRecord> recs;
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        TrialRecord r;
        r.outcome = rng.bernoulli(0.6) ? Outcome::Reached : Outcome::Timeout;
        r.manhattan_m = rng.uniform(100.0, 5000.0);
        r.euclidean_m = rng.uniform(100.0, 3000.0);
        recs.push_back(r);
    }
    auto shuffled = recs;
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    const auto a = summarize(recs);
    const auto b = summarize(shuffled);
    REQUIRE(a.success_rate == b.success_rate);
    REQUIRE(a.mean_manhattan_m == Catch::Approx(b.mean_manhattan_m).margin(1e-9));
    REQUIRE(a.range80_m == b.range80_m);
}

TEST_CASE("parallel and serial study output is byte identical") {
    ScenarioConfig c = small_world(41);
    const std::vector<navigator::StrategyKind> strat{navigator::StrategyKind::StraightToGoal};
    const auto serial = run_landmark_study(c, strat, {1.0}, {0.6}, 4, 1);
    const auto parallel = run_landmark_study(c, strat, {1.0}, {0.6}, 4, 4);
    std::ostringstream s1, s2, t1, t2;
    write_study_csv(s1, serial);
    write_study_csv(s2, parallel);
    REQUIRE(s1.str() == s2.str());
    write_trials_csv(t1, serial.cells[0].trials);
    write_trials_csv(t2, parallel.cells[0].trials);
    REQUIRE(t1.str() == t2.str());
    REQUIRE(t1.str().rfind("seed,outcome,manhattan_m,euclidean_m,final_axis_m,"
                           "landmark_updates,decisions\n",
                           0) == 0);
}

TEST_CASE("trace output is valid JSONL") {
    ScenarioConfig c = zero_noise(51);
    std::ostringstream trace;
    run_trial(c, &trace);
    std::istringstream in(trace.str());
    std::string line;
    size_t lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        REQUIRE_NOTHROW(nlohmann::json::parse(line));
        ++lines;
    }
    REQUIRE(lines > 0);
}

TEST_CASE("fixed route drive ends near the route end") {
    NoiseConfig n;
    vehicle::VehicleParams vp;
    const std::vector<Vec2> route{{0, 0}, {400, 0}, {400, 300}};
    const auto b = drive_route(route, n, vp, vehicle::FollowerGains{}, 7);
    REQUIRE(distance(b.position(), {400, 300}) < 30.0);
    REQUIRE_THROWS_AS(drive_route({{0, 0}}, n, vp, vehicle::FollowerGains{}, 7), ConfigError);
}

TEST_CASE("scene study detects intersections and never false-activates") {
    const auto res = run_scene_study(40, 40, 12345);
    REQUIRE(res.intersection_trials == 40);
    REQUIRE(res.null_trials == 40);
    REQUIRE(res.false_activations == 0);
    REQUIRE(res.detected_all_pre_arrival >= 32);  // >= 80% even at this small N
}

TEST_CASE("scene replay consumes cue streams and emits belief records") {
    std::stringstream in;
    in << R"({"t":0.0,"frame":1,"cues":[{"kind":"z_SS","detected":true},{"kind":"z_TL","detected":true}],"odo_dt_m":1.0,)"
       << R"("segments":[{"class":"stop-sign","height_px":100.0}]})" << "\n";
    in << R"({"t":0.1,"frame":2,"cues":[{"kind":"z_roadL","detected":true}],"odo_dt_m":1.0})"
       << "\n";
    std::ostringstream out;
    REQUIRE(scene_replay(in, out) == 2);
    std::istringstream lines(out.str());
    std::string line;
    REQUIRE(std::getline(lines, line));
    auto rec = nlohmann::json::parse(line);
    REQUIRE(rec["p_int"].get<double>() > 0.99);
    REQUIRE(rec["activated"].get<bool>());
    REQUIRE(rec.contains("range_mean_m"));
    REQUIRE(std::getline(lines, line));
    rec = nlohmann::json::parse(line);
    REQUIRE(rec["p_left"].get<double>() > 0.5);

    std::stringstream bad;
    bad << R"({"t":0,"cues":[{"kind":"z_nope","detected":true}]})" << "\n";
    std::ostringstream sink;
    REQUIRE_THROWS_AS(scene_replay(bad, sink), ConfigError);
}

TEST_CASE("trial works when loaded from a full JSON config") {
    nlohmann::json j;
    j["map"]["area_km2"] = 1.0;
    j["min_separation_m"] = 300.0;
    j["noise"]["compass_2sigma_deg"] = 30.0;
    j["landmark_density_per_km2"] = 10.0;
    j["landmark_rate"] = 0.8;
    j["seed"] = 77;
    const auto rec = run_trial(config_from_json(j));
    REQUIRE((rec.outcome == Outcome::Reached || rec.outcome == Outcome::Lost ||
             rec.outcome == Outcome::Timeout));
    REQUIRE(rec.decisions > 0);
}

TEST_CASE("scene-gated trials still navigate") {
    ScenarioConfig c = zero_noise(61);
    c.scene_gate = true;
    c.landmark_rate = 0.9;
    const auto rec = run_trial(c);
    REQUIRE(rec.outcome == Outcome::Reached);
}
