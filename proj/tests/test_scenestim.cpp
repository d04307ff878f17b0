#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "urbannav/scenestim.hpp"

using namespace unav;
using namespace unav::scenestim;

namespace {

FeatureBelief activated_belief() {
    FeatureBelief b;
    b.activated = true;
    return b;
}

SegmentObs car(double area, double height, double x_center, double score = 0.97) {
    SegmentObs s;
    s.cls = ObjClass::Car;
    s.score = score;
    s.height_px = height;
    s.area_px2 = area;
    s.x_center_px = x_center;
    s.left_end_height_px = height;
    s.right_end_height_px = height;
    return s;
}

}  // namespace

TEST_CASE("cue precision table matches the measured detector precisions") {
    REQUIRE(cue_precision(CueKind::StopSign) == 0.97);
    REQUIRE(cue_precision(CueKind::TrafficLight) == 0.95);
    REQUIRE(cue_precision(CueKind::RoadRight) == 0.77);
    REQUIRE(cue_precision(CueKind::RoadStraight) == 0.77);
    REQUIRE(cue_precision(CueKind::RoadLeft) == 0.77);
    REQUIRE(cue_precision(CueKind::CrossTrafficRight) == 0.86);
    REQUIRE(cue_precision(CueKind::CrossTrafficLeft) == 0.86);
    REQUIRE(cue_precision(CueKind::ParkedRight) == 0.83);
    REQUIRE(cue_precision(CueKind::ParkedLeft) == 0.83);
    REQUIRE(cue_precision(CueKind::Lanes) == 0.96);
    REQUIRE(cue_precision(CueKind::OncomingOutgoing) == 0.96);
    REQUIRE(cue_precision(CueKind::OneWayRight) == 0.95);
    REQUIRE(cue_precision(CueKind::OneWayLeft) == 0.95);
    REQUIRE(cue_precision(CueKind::DoNotEnter) == 0.95);
}

TEST_CASE("stop sign distances always carry the 1.7 m residual sigma") {
    CalibTable t;
    for (double h : {30.0, 60.0, 120.0, 240.0}) {
        const auto m = distance_from_height(t, ObjClass::StopSign, h);
        REQUIRE(m.has_value());
        REQUIRE(m->sigma_m == 1.7);
    }
    REQUIRE(distance_from_height(t, ObjClass::TrafficLight, 100.0)->sigma_m == 5.9);
}

TEST_CASE("doubling segment height halves the offset distance") {
    CalibTable t;
    const double d1 = distance_from_height(t, ObjClass::StopSign, 50.0)->distance_m;
    const double d2 = distance_from_height(t, ObjClass::StopSign, 100.0)->distance_m;
    const double b = t.stop_sign.b;
    REQUIRE(d2 - b == Catch::Approx(0.5 * (d1 - b)).margin(1e-12));
}

TEST_CASE("out-of-range heights yield no measurement") {
    CalibTable t;
    REQUIRE_FALSE(distance_from_height(t, ObjClass::StopSign, 1.0).has_value());
    REQUIRE_FALSE(distance_from_height(t, ObjClass::StopSign, 10000.0).has_value());
}

TEST_CASE("inverse-height refit recovers synthetic pinhole coefficients within 1%") {
    const double a_true = 7500.0, b_true = -1.5;
    std::vector<std::pair<double, double>> samples;
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double h = rng.uniform(25.0, 380.0);
        samples.push_back({h, a_true / h + b_true + 0.05 * rng.normal()});
    }
    const auto fit = fit_inverse_height(samples);
    REQUIRE(fit.a == Catch::Approx(a_true).epsilon(0.01));
    REQUIRE(fit.b == Catch::Approx(b_true).margin(std::abs(b_true) * 0.01 + 0.1));
}

TEST_CASE("range filter prediction is the exact odometry shift") {
    RangeBelief rb;
    rb.mean_m = 50.0;
    rb.var_m2 = 4.0;
    rb.q_m2 = 0.01;
    const auto out = kf1d_predict(rb, 1.0);
    REQUIRE(out.mean_m == Catch::Approx(49.0).margin(1e-15));
    REQUIRE(out.var_m2 == Catch::Approx(4.01).margin(1e-15));

    RangeBelief id = rb;
    id.q_m2 = 0.0;
    const auto same = kf1d_predict(id, 0.0);
    REQUIRE(same.mean_m == rb.mean_m);
    REQUIRE(same.var_m2 == rb.var_m2);

    // chained predicts sum distances exactly
    auto c = rb;
    for (int i = 0; i < 10; ++i) c = kf1d_predict(c, 0.5);
    REQUIRE(c.mean_m == Catch::Approx(45.0).margin(1e-12));
}

TEST_CASE("range filter update matches the scalar Kalman equations") {
    RangeBelief rb;
    rb.mean_m = 49.0;
    rb.var_m2 = 4.01;
    const auto out = kf1d_update(rb, 47.0, 2.89);
    const double K = 4.01 / (4.01 + 2.89);
    REQUIRE(K == Catch::Approx(0.5812).margin(5e-5));
    REQUIRE(out.mean_m == Catch::Approx(49.0 + K * (47.0 - 49.0)).margin(1e-9));
    REQUIRE(out.var_m2 == Catch::Approx(4.01 - K * 4.01).margin(1e-9));

    // equal variances meet in the middle
    RangeBelief eq;
    eq.mean_m = 10.0;
    eq.var_m2 = 2.0;
    REQUIRE(kf1d_update(eq, 20.0, 2.0).mean_m == Catch::Approx(15.0).margin(1e-12));

    // huge measurement noise leaves the prior nearly untouched
    REQUIRE(kf1d_update(eq, 20.0, 1e12).mean_m == Catch::Approx(10.0).margin(1e-9));
    REQUIRE_THROWS_AS(kf1d_update(eq, 20.0, 0.0), std::invalid_argument);
}

TEST_CASE("range filter agrees with an independent oracle over random sequences") {
    Rng rng(555);
    for (int seq = 0; seq < 1000; ++seq) {
        RangeBelief rb;
        rb.mean_m = rng.uniform(10.0, 90.0);
        rb.var_m2 = rng.uniform(0.5, 25.0);
        rb.q_m2 = rng.uniform(0.0, 0.1);
        double mean = rb.mean_m, var = rb.var_m2;
        for (int k = 0; k < 20; ++k) {
            const double dt = rng.uniform(0.0, 2.0);
            rb = kf1d_predict(rb, dt);
            mean -= dt;
            var += rb.q_m2;
            if (rng.bernoulli(0.7)) {
                const double z = rng.uniform(0.0, 100.0);
                const double r = rng.uniform(0.5, 40.0);
                rb = kf1d_update(rb, z, r);
                // oracle written as information-weighted average
                const double w0 = 1.0 / var, w1 = 1.0 / r;
                mean = (w0 * mean + w1 * z) / (w0 + w1);
                var = 1.0 / (w0 + w1);
            }
            REQUIRE(rb.mean_m == Catch::Approx(mean).margin(1e-9));
            REQUIRE(rb.var_m2 == Catch::Approx(var).margin(1e-9));
        }
    }
}

TEST_CASE("with zero process noise the filter equals batch weighted least squares") {
    RangeBelief rb;
    rb.mean_m = 50.0;
    rb.var_m2 = 100.0;
    rb.q_m2 = 0.0;
    const double zs[3] = {48.0, 52.0, 49.0};
    const double rs[3] = {4.0, 9.0, 1.0};
    for (int i = 0; i < 3; ++i) rb = kf1d_update(rb, zs[i], rs[i]);
    double wsum = 1.0 / 100.0, msum = 50.0 / 100.0;
    for (int i = 0; i < 3; ++i) {
        wsum += 1.0 / rs[i];
        msum += zs[i] / rs[i];
    }
    REQUIRE(rb.mean_m == Catch::Approx(msum / wsum).margin(1e-12));
    REQUIRE(rb.var_m2 == Catch::Approx(1.0 / wsum).margin(1e-12));
}

TEST_CASE("road ROI rule uses a strict 20 percent threshold") {
    BinaryGrid mask;
    mask.width = 30;
    mask.height = 10;
    mask.cells.assign(300, 0);
    // right ROI [0,10): 21 road pixels; straight [10,20): 20; left [20,30): 25
    for (int i = 0; i < 21; ++i) mask.cells[(i / 10) * 30 + i % 10] = 1;
    for (int i = 0; i < 20; ++i) mask.cells[(i / 10) * 30 + 10 + i % 10] = 1;
    for (int i = 0; i < 25; ++i) mask.cells[(i / 10) * 30 + 20 + i % 10] = 1;
    RoadRois rois;
    rois.right = {0, 0, 10, 10};
    rois.straight = {10, 0, 20, 10};
    rois.left = {20, 0, 30, 10};
    const auto flags = classify_road_rois(mask, rois);
    REQUIRE(flags[0]);        // 21/100 > 0.2
    REQUIRE_FALSE(flags[1]);  // exactly 20/100 fails the strict inequality
    REQUIRE(flags[2]);        // the (1,0,1) three-way pattern
}

TEST_CASE("empty or out-of-bounds ROI is a configuration error") {
    BinaryGrid mask;
    mask.width = 10;
    mask.height = 10;
    mask.cells.assign(100, 0);
    RoadRois rois;
    rois.right = {0, 0, 0, 0};
    rois.straight = {0, 0, 5, 5};
    rois.left = {5, 0, 10, 5};
    REQUIRE_THROWS_AS(classify_road_rois(mask, rois), ConfigError);
    rois.right = {0, 0, 20, 5};
    REQUIRE_THROWS_AS(classify_road_rois(mask, rois), ConfigError);
}

TEST_CASE("cross-traffic tracker matches rightward motion") {
    // area diff 2.4%, x shift 30/1232 = 2.4%, ratio 1000/20/20 = 2.5
    const auto [r, l] = track_cross_traffic({car(1000, 20, 400)}, {car(1025, 20, 430)});
    REQUIRE(r);
    REQUIRE_FALSE(l);
    const auto [r2, l2] = track_cross_traffic({car(1000, 20, 430)}, {car(1025, 20, 400)});
    REQUIRE_FALSE(r2);
    REQUIRE(l2);
}

TEST_CASE("cross-traffic correspondence and filter rules") {
    // 10% area difference: no match
    auto none = track_cross_traffic({car(1000, 20, 400)}, {car(1100, 20, 430)});
    REQUIRE_FALSE(none.first);
    REQUIRE_FALSE(none.second);
    // length-to-height ratio 1.5: filtered out
    none = track_cross_traffic({car(600, 20, 400)}, {car(610, 20, 430)});
    REQUIRE_FALSE(none.first);
    // low score: filtered out
    none = track_cross_traffic({car(1000, 20, 400, 0.9)}, {car(1010, 20, 430, 0.9)});
    REQUIRE_FALSE(none.first);
    // near-zero displacement: stationary, no track
    none = track_cross_traffic({car(1000, 20, 400)}, {car(1005, 20, 402)});
    REQUIRE_FALSE(none.first);
    REQUIRE_FALSE(none.second);
}

TEST_CASE("parked car orientation follows the lower nose end") {
    auto prev = car(1000, 20, 400);
    auto cur = car(1005, 20, 402);  // stationary match
    cur.left_end_height_px = 60.0;
    cur.right_end_height_px = 80.0;
    auto [r, l] = classify_parked_car(prev, cur);
    REQUIRE_FALSE(r);
    REQUIRE(l);  // nose left: left-facing
    cur.left_end_height_px = 80.0;
    cur.right_end_height_px = 60.0;
    std::tie(r, l) = classify_parked_car(prev, cur);
    REQUIRE(r);
    REQUIRE_FALSE(l);
    cur.left_end_height_px = cur.right_end_height_px = 70.0;
    std::tie(r, l) = classify_parked_car(prev, cur);
    REQUIRE_FALSE(r);
    REQUIRE_FALSE(l);
    // moving cars are not parked
    cur.left_end_height_px = 60.0;
    cur.right_end_height_px = 80.0;
    cur.x_center_px = 450.0;
    std::tie(r, l) = classify_parked_car(prev, cur);
    REQUIRE_FALSE(l);
}

TEST_CASE("one-way sign excludes the opposite turn down to 0.05") {
    auto b = activated_belief();
    const auto msgs = message_for_cue({CueKind::OneWayRight, true}, b);
    REQUIRE(msgs.size() == 1);
    REQUIRE(msgs[0].feature == Feature::Left);
    REQUIRE(msgs[0].mu == Catch::Approx(0.05).margin(1e-12));
    b = propagate(b, msgs);
    REQUIRE(b.probability(Feature::Left) == Catch::Approx(0.05).margin(1e-12));
}

TEST_CASE("undetected cues leave beliefs bit-exact") {
    FeatureBelief b = activated_belief();
    std::vector<CueEvent> cues;
    for (int i = 0; i < kNumCueKinds; ++i) cues.push_back({(CueKind)i, false});
    const auto out = propagate(b, step_messages(cues, b, 100.0));
    for (int f = 0; f < kNumFeatures; ++f) REQUIRE(out.log_odds[f] == b.log_odds[f]);
}

TEST_CASE("before activation only establishing cues carry weight") {
    FeatureBelief b;  // not activated
    REQUIRE(message_for_cue({CueKind::CrossTrafficRight, true}, b).empty());
    REQUIRE(message_for_cue({CueKind::Lanes, true}, b).empty());
    REQUIRE(message_for_cue({CueKind::OneWayLeft, true}, b).empty());
    REQUIRE_FALSE(message_for_cue({CueKind::TrafficLight, true}, b).empty());
    REQUIRE_FALSE(message_for_cue({CueKind::StopSign, true}, b).empty());
    REQUIRE_FALSE(message_for_cue({CueKind::RoadRight, true}, b).empty());
    REQUIRE_FALSE(message_for_cue({CueKind::RoadLeft, true}, b).empty());
}

TEST_CASE("traffic light plus stop sign establish the intersection at 0.99838") {
    FeatureBelief b;
    b = propagate(b, {{Feature::Intersection, 0.95}, {Feature::Intersection, 0.97}});
    const double expected = (0.95 * 0.97) / (0.95 * 0.97 + 0.05 * 0.03);
    REQUIRE(b.probability(Feature::Intersection) == Catch::Approx(expected).margin(1e-12));
    REQUIRE(b.probability(Feature::Intersection) == Catch::Approx(0.99838).margin(1e-5));
    REQUIRE(b.activated);
}

TEST_CASE("log-odds accumulation equals the brute-force product to 1e-12") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        FeatureBelief b;
        b.activated = true;
        double prod = 1.0, prod_c = 1.0;
        const int len = 1 + (int)rng.uniform_index(10000);
        std::vector<Message> msgs;
        for (int i = 0; i < len; ++i) {
            const double mu = rng.uniform(0.35, 0.65);
            msgs.push_back({Feature::Straight, mu});
            prod *= mu;
            prod_c *= 1.0 - mu;
            // renormalize the running products to dodge underflow in the oracle
            const double s = prod + prod_c;
            prod /= s;
            prod_c /= s;
        }
        b = propagate(b, msgs);
        REQUIRE(b.probability(Feature::Straight) ==
                Catch::Approx(prod / (prod + prod_c)).margin(1e-12));
    }
}

TEST_CASE("message monotonicity and exclusion dominance") {
    FeatureBelief b = activated_belief();
    const double p0 = b.probability(Feature::Right);
    b = propagate(b, {{Feature::Right, 0.77}});
    REQUIRE(b.probability(Feature::Right) > p0);
    b = propagate(b, {{Feature::Right, 0.05}});
    REQUIRE(b.probability(Feature::Right) < 0.5);  // one exclusion beats one support
    b = propagate(b, {{Feature::Right, 0.49}});
    const double before = b.probability(Feature::Right);
    b = propagate(b, {{Feature::Right, 0.49}});
    REQUIRE(b.probability(Feature::Right) < before);
}

TEST_CASE("saturating messages are rejected") {
    FeatureBelief b;
    REQUIRE_THROWS_AS(propagate(b, {{Feature::Straight, 0.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(propagate(b, {{Feature::Straight, 1.0}}), std::invalid_argument);
}

TEST_CASE("dissent fires once per missing direction inside 20 m after activation") {
    FeatureBelief b = activated_belief();
    std::vector<CueEvent> cues{{CueKind::RoadRight, true}};
    auto msgs = step_messages(cues, b, 15.0);
    // roadR supports Right; Left and Straight each get one 0.49 dissent
    int dissents = 0;
    for (const auto& m : msgs)
        if (m.mu == 0.49) ++dissents;
    REQUIRE(dissents == 2);
    // outside 20 m: no dissent
    msgs = step_messages(cues, b, 25.0);
    for (const auto& m : msgs) REQUIRE(m.mu != 0.49);
    // before activation: no dissent either
    FeatureBelief cold;
    msgs = step_messages(cues, cold, 15.0);
    for (const auto& m : msgs) REQUIRE(m.mu != 0.49);
}

TEST_CASE("simulated cues respect rates, ranges, and ground truth") {
    SceneTruth t;
    t.is_intersection = true;
    t.opt_left = t.opt_straight = t.opt_right = true;
    t.traffic_light = true;
    Rng rng(9);

    for (const auto& c : simulate_cues(t, 30.0, CueRates(0.0), rng))
        REQUIRE_FALSE(c.detected);

    for (int i = 0; i < 50; ++i)
        for (const auto& c : simulate_cues(t, 30.0, CueRates(1.0), rng)) {
            if (c.kind == CueKind::TrafficLight) REQUIRE(c.detected);
            if (c.kind == CueKind::StopSign) REQUIRE_FALSE(c.detected);  // absent
        }

    // out of range: nothing fires
    for (const auto& c : simulate_cues(t, 500.0, CueRates(1.0), rng))
        REQUIRE_FALSE(c.detected);

    // empirical rate over 10,000 frames within the binomial 99% band
    int hits = 0;
    const int kFrames = 10000;
    for (int i = 0; i < kFrames; ++i)
        for (const auto& c : simulate_cues(t, 30.0, CueRates(0.6), rng))
            if (c.kind == CueKind::TrafficLight && c.detected) ++hits;
    const double rate = (double)hits / kFrames;
    REQUIRE(rate > 0.58);
    REQUIRE(rate < 0.62);

    REQUIRE_THROWS_AS(simulate_cues(t, 30.0, CueRates(1.5), rng), std::invalid_argument);
}

TEST_CASE("scene estimator steps range and beliefs together") {
    SceneEstimator est;
    est.range = kf1d_update(est.range, 60.0, 2.89);
    REQUIRE(est.range.initialized);
    std::vector<CueEvent> cues{{CueKind::StopSign, true}, {CueKind::TrafficLight, true}};
    est.step(1.0, cues, {});
    REQUIRE(est.range.mean_m == Catch::Approx(59.0).margin(1e-6));
    REQUIRE(est.beliefs.activated);
}
