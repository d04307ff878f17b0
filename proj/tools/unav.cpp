// Command-line front end: map generation, single trials, the two Monte Carlo
// studies, scene-stream replay, and CSV summarization.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "urbannav/harness.hpp"

namespace fs = std::filesystem;
using namespace unav;

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw harness::ConfigError("cannot open config: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

harness::ScenarioConfig load_config(const std::string& config_path, uint64_t seed_flag) {
    harness::ScenarioConfig cfg;
    nlohmann::json raw = nlohmann::json::object();
    if (!config_path.empty()) raw = load_json(config_path);
    cfg = harness::config_from_json(raw);
    if (seed_flag) cfg.seed = seed_flag;
    return cfg;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    const fs::path p = fs::path(dir) / name;
    std::ofstream os(p);
    if (!os) throw harness::ConfigError("cannot write " + p.string());
    return os;
}

int resolve_parallel(int parallel) {
    if (parallel > 0) return parallel;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? (int)hw : 1;
}

std::vector<harness::TrialRecord> flatten(const harness::StudyTable& table) {
    std::vector<harness::TrialRecord> all;
    for (const auto& c : table.cells)
        all.insert(all.end(), c.trials.begin(), c.trials.end());
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"urban navigation simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    size_t trials = 100;
    int parallel = 0;
    bool trace = false;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--seed", seed, "master seed override");
    app.add_option("--trials", trials, "trials per case/cell")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--parallel", parallel, "worker threads (0 = hardware)");
    app.add_flag("--trace", trace, "emit JSONL traces");

    auto* gen_map = app.add_subcommand("gen-map", "generate a road network and landmarks");
    auto* run_trial = app.add_subcommand("run-trial", "run a single goal-seeking trial");
    auto* range_study = app.add_subcommand("range-study", "dead-reckoning range study");
    auto* landmark_study =
        app.add_subcommand("landmark-study", "strategy x density x rate success study");
    auto* scene_replay = app.add_subcommand("scene-replay", "replay a JSONL cue stream");
    auto* summarize = app.add_subcommand("summarize", "summarize a trials.csv");

    // global flags may appear after the subcommand name
    for (auto* sub : {gen_map, run_trial, range_study, landmark_study, scene_replay, summarize})
        sub->fallthrough();

    std::string replay_in;
    scene_replay->add_option("input", replay_in, "cue-stream JSONL (default stdin)");
    std::string summarize_in;
    summarize->add_option("input", summarize_in, "trials.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_map->parsed()) {
            const auto cfg = load_config(config_path, seed);
            const auto net = citygen::generate_map(cfg.map, derive_seed(cfg.seed, 0x31));
            const auto lms = citygen::place_landmarks(net, cfg.landmark_density_per_km2,
                                                      derive_seed(cfg.seed, 0x32));
            auto os = open_out(out_dir, "map.json");
            os << citygen::to_json(net, &lms).dump(2) << "\n";
        } else if (run_trial->parsed()) {
            const auto cfg = load_config(config_path, seed);
            std::ofstream trace_os;
            if (trace) trace_os = open_out(out_dir, "trace.jsonl");
            const auto rec = harness::run_trial(cfg, trace ? &trace_os : nullptr);
            auto os = open_out(out_dir, "trials.csv");
            harness::write_trials_csv(os, {rec});
            std::cout << harness::to_string(rec.outcome) << " manhattan_m="
                      << rec.manhattan_m << "\n";
        } else if (range_study->parsed()) {
            const auto cfg = load_config(config_path, seed);
            const auto table =
                harness::run_range_study(cfg, trials, resolve_parallel(parallel));
            auto os = open_out(out_dir, "study.csv");
            harness::write_study_csv(os, table);
            auto ts = open_out(out_dir, "trials.csv");
            harness::write_trials_csv(ts, flatten(table));
        } else if (landmark_study->parsed()) {
            const auto cfg = load_config(config_path, seed);
            std::vector<navigator::StrategyKind> strategies = {
                navigator::StrategyKind::StraightToGoal,
                navigator::StrategyKind::LandmarkToLandmark, navigator::StrategyKind::Hybrid};
            std::vector<double> densities = {0.25, 0.5, 1.0, 2.0, 10.0};
            std::vector<double> rates = {0.2, 0.4, 0.6, 0.8, 1.0};
            if (!config_path.empty()) {
                const auto j = load_json(config_path);
                if (j.contains("study")) {
                    const auto& s = j["study"];
                    if (s.contains("densities"))
                        densities = s["densities"].get<std::vector<double>>();
                    if (s.contains("rates")) rates = s["rates"].get<std::vector<double>>();
                    if (s.contains("strategies")) {
                        strategies.clear();
                        for (const auto& name : s["strategies"])
                            strategies.push_back(
                                harness::strategy_from_string(name.get<std::string>()));
                    }
                }
            }
            const auto table = harness::run_landmark_study(
                cfg, strategies, densities, rates, trials, resolve_parallel(parallel));
            auto os = open_out(out_dir, "study.csv");
            harness::write_study_csv(os, table);
            auto ts = open_out(out_dir, "trials.csv");
            harness::write_trials_csv(ts, flatten(table));
        } else if (scene_replay->parsed()) {
            std::ifstream fin;
            std::istream* in = &std::cin;
            if (!replay_in.empty()) {
                fin.open(replay_in);
                if (!fin) throw harness::ConfigError("cannot open " + replay_in);
                in = &fin;
            }
            auto os = open_out(out_dir, "beliefs.jsonl");
            const size_t n = harness::scene_replay(*in, os);
            std::cout << n << " steps replayed\n";
        } else if (summarize->parsed()) {
            std::ifstream in(summarize_in);
            if (!in) throw harness::ConfigError("cannot open " + summarize_in);
            std::string line;
            if (!std::getline(in, line))
                throw harness::ConfigError("empty trials file: " + summarize_in);
            std::vector<harness::TrialRecord> recs;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::stringstream ss(line);
                std::string field;
                harness::TrialRecord r;
                std::getline(ss, field, ',');
                r.seed = std::stoull(field);
                std::getline(ss, field, ',');
                r.outcome = harness::outcome_from_string(field);
                std::getline(ss, field, ',');
                r.manhattan_m = std::stod(field);
                std::getline(ss, field, ',');
                r.euclidean_m = std::stod(field);
                std::getline(ss, field, ',');
                r.final_axis_m = std::stod(field);
                std::getline(ss, field, ',');
                r.landmark_updates = std::stol(field);
                std::getline(ss, field, ',');
                r.decisions = std::stol(field);
                recs.push_back(r);
            }
            const auto s = harness::summarize(recs);
            nlohmann::json j;
            j["n"] = s.n;
            j["reached"] = s.reached;
            j["lost"] = s.lost;
            j["timeout"] = s.timeout;
            if (s.n) {
                j["success_rate"] = s.success_rate;
                j["mean_manhattan_m"] = s.mean_manhattan_m;
                j["mean_euclidean_m"] = s.mean_euclidean_m;
                j["mean_final_axis_m"] = s.mean_final_axis_m;
            }
            j["range80_m"] = s.range80_m;
            std::cout << j.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
