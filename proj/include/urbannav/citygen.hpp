#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "urbannav/geometry.hpp"
#include "urbannav/rng.hpp"

namespace unav::citygen {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EdgeDir { TwoWay, OneWayForward, OneWayReverse };

inline std::string to_string(EdgeDir d) {
    switch (d) {
        case EdgeDir::TwoWay: return "two_way";
        case EdgeDir::OneWayForward: return "one_way_forward";
        default: return "one_way_reverse";
    }
}

inline EdgeDir edge_dir_from_string(const std::string& s) {
    if (s == "two_way") return EdgeDir::TwoWay;
    if (s == "one_way_forward") return EdgeDir::OneWayForward;
    if (s == "one_way_reverse") return EdgeDir::OneWayReverse;
    throw ConfigError("unknown edge direction: " + s);
}

struct Intersection {
    int id = 0;
    Vec2 pos;
};

struct Segment {
    int a = 0;
    int b = 0;
    double length_m = 0.0;
    EdgeDir dir = EdgeDir::TwoWay;
};

struct Rect {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
    double diagonal() const { return std::hypot(width(), height()); }
};

struct MapParams {
    double area_km2 = 25.0;
    double block_min_m = 50.0;
    double block_max_m = 300.0;
    double dead_end_fraction = 0.05;
    double one_way_fraction = 0.05;
};

// Planar grid road graph. Node ids are indices into `nodes`; adjacency holds
// edge indices per node.
struct RoadNetwork {
    std::vector<Intersection> nodes;
    std::vector<Segment> edges;
    Rect bounds;
    double block_min_m = 0.0;
    double block_max_m = 0.0;
    double area_km2 = 0.0;
    std::vector<std::vector<int>> adjacency;

    void rebuild_adjacency() {
        adjacency.assign(nodes.size(), {});
        for (int e = 0; e < (int)edges.size(); ++e) {
            adjacency[edges[e].a].push_back(e);
            adjacency[edges[e].b].push_back(e);
        }
    }

    int other_end(int edge, int node) const {
        const Segment& s = edges[edge];
        return s.a == node ? s.b : s.a;
    }

    // True if the edge may be driven leaving `from_node`.
    bool traversable_from(int edge, int from_node) const {
        const Segment& s = edges[edge];
        if (s.dir == EdgeDir::TwoWay) return true;
        if (s.dir == EdgeDir::OneWayForward) return from_node == s.a;
        return from_node == s.b;
    }

    int arity(int node) const { return (int)adjacency[node].size(); }

    double total_road_length() const {
        double t = 0.0;
        for (const auto& e : edges) t += e.length_m;
        return t;
    }
};

struct Landmark {
    int id = 0;
    Vec2 pos;
};

struct LandmarkSet {
    std::vector<Landmark> entries;
    double density_per_km2 = 0.0;
};

struct ScenarioEndpoints {
    int start_node = -1;
    int goal_node = -1;
    Vec2 start;
    Vec2 goal;
    double start_heading_rad = 0.0;
};

// Directed reachability via breadth-first search.
inline bool reachable(const RoadNetwork& net, int from, int to) {
    if (from == to) return true;
    std::vector<char> seen(net.nodes.size(), 0);
    std::queue<int> q;
    q.push(from);
    seen[from] = 1;
    while (!q.empty()) {
        const int n = q.front();
        q.pop();
        for (int e : net.adjacency[n]) {
            if (!net.traversable_from(e, n)) continue;
            const int m = net.other_end(e, n);
            if (seen[m]) continue;
            if (m == to) return true;
            seen[m] = 1;
            q.push(m);
        }
    }
    return false;
}

namespace detail {

inline bool connected_without_edge(const RoadNetwork& net, int skip_edge) {
    if (net.nodes.empty()) return true;
    std::vector<char> seen(net.nodes.size(), 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    size_t count = 1;
    while (!q.empty()) {
        const int n = q.front();
        q.pop();
        for (int e : net.adjacency[n]) {
            if (e == skip_edge) continue;
            const int m = net.other_end(e, n);
            if (!seen[m]) {
                seen[m] = 1;
                ++count;
                q.push(m);
            }
        }
    }
    return count == net.nodes.size();
}

inline std::vector<double> sample_grid_lines(Rng& rng, double side, double bmin, double bmax) {
    std::vector<double> xs{0.0};
    for (;;) {
        const double sp = (bmin == bmax) ? bmin : rng.uniform(bmin, bmax);
        if (xs.back() + sp > side + 1e-9) break;
        xs.push_back(xs.back() + sp);
    }
    return xs;
}

}  // namespace detail

inline RoadNetwork generate_map(const MapParams& p, uint64_t seed) {
    if (p.area_km2 < 1.0 || p.area_km2 > 100.0)
        throw ConfigError("map area must be in [1, 100] km^2");
    if (p.block_min_m < 50.0 || p.block_max_m > 300.0 || p.block_min_m > p.block_max_m)
        throw ConfigError("block range must be within [50, 300] m");
    if (p.dead_end_fraction < 0.0 || p.dead_end_fraction >= 1.0 ||
        p.one_way_fraction < 0.0 || p.one_way_fraction > 1.0)
        throw ConfigError("dead-end fraction must be in [0, 1), one-way in [0, 1]");

    const double side = std::sqrt(p.area_km2) * 1000.0;
    if (side < 2.0 * p.block_min_m)
        throw ConfigError("map side too small for minimum block size");

    Rng rng(derive_seed(seed, 0xC17, 0));
    const auto xs = detail::sample_grid_lines(rng, side, p.block_min_m, p.block_max_m);
    const auto ys = detail::sample_grid_lines(rng, side, p.block_min_m, p.block_max_m);
    const int nx = (int)xs.size();
    const int ny = (int)ys.size();
    if (nx < 2 || ny < 2) throw ConfigError("grid degenerate; widen area or shrink blocks");

    RoadNetwork net;
    net.bounds = Rect{0.0, 0.0, side, side};
    net.block_min_m = p.block_min_m;
    net.block_max_m = p.block_max_m;
    net.area_km2 = p.area_km2;
    net.nodes.reserve((size_t)nx * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            net.nodes.push_back({j * nx + i, Vec2{xs[i], ys[j]}});

    auto add_edge = [&](int a, int b) {
        Segment s;
        s.a = a;
        s.b = b;
        s.length_m = distance(net.nodes[a].pos, net.nodes[b].pos);
        net.edges.push_back(s);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) add_edge(j * nx + i, j * nx + i + 1);
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i < nx; ++i) add_edge(j * nx + i, (j + 1) * nx + i);
    net.rebuild_adjacency();

    // Dead ends: remove edges while keeping the undirected graph connected.
    // Each removal leaves one endpoint at arity 1.
    const int want_dead = (int)std::lround(p.dead_end_fraction * (double)net.nodes.size());
    int made_dead = 0;
    int attempts = 0;
    const int max_attempts = 20 * std::max(1, want_dead);
    while (made_dead < want_dead && attempts < max_attempts) {
        ++attempts;
        const int e = (int)rng.uniform_index(net.edges.size());
        const Segment& s = net.edges[e];
        // keep the stub end at arity 1, the other end at >= 2
        if (net.arity(s.a) < 2 || net.arity(s.b) < 3) continue;
        if (!detail::connected_without_edge(net, e)) continue;
        net.edges.erase(net.edges.begin() + e);
        net.rebuild_adjacency();
        ++made_dead;
    }

    for (auto& e : net.edges) {
        if (rng.bernoulli(p.one_way_fraction))
            e.dir = rng.bernoulli(0.5) ? EdgeDir::OneWayForward : EdgeDir::OneWayReverse;
    }
    return net;
}

// Landmark positions are drawn from a density-independent stream: the set for
// a lower density is a prefix of the set for a higher density at the same seed,
// which keeps Monte Carlo cells comparable across densities.
inline LandmarkSet place_landmarks(const RoadNetwork& net, double density_per_km2,
                                   uint64_t seed) {
    if (density_per_km2 < 0.0) throw ConfigError("landmark density must be >= 0");
    LandmarkSet out;
    out.density_per_km2 = density_per_km2;
    const int count = (int)std::lround(density_per_km2 * net.area_km2);
    if (count == 0 || net.edges.empty()) return out;

    std::vector<double> cum(net.edges.size());
    double total = 0.0;
    for (size_t i = 0; i < net.edges.size(); ++i) {
        total += net.edges[i].length_m;
        cum[i] = total;
    }
    Rng rng(derive_seed(seed, 0x1A2D, 0));
    for (int k = 0; k < count; ++k) {
        const double r = rng.uniform() * total;
        const size_t e = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
        const Segment& s = net.edges[std::min(e, net.edges.size() - 1)];
        const double t = rng.uniform();
        const Vec2 a = net.nodes[s.a].pos;
        const Vec2 b = net.nodes[s.b].pos;
        out.entries.push_back({k, a + (b - a) * t});
    }
    return out;
}

// Samples a start node (with heading along an outgoing edge) and a goal node,
// rejecting pairs closer than min_separation or unreachable under one-way
// constraints.
inline ScenarioEndpoints sample_endpoints(const RoadNetwork& net, uint64_t seed,
                                          double min_separation_m = -1.0,
                                          int max_rejections = 1000) {
    if (min_separation_m < 0.0) min_separation_m = 0.25 * net.bounds.diagonal();
    Rng rng(derive_seed(seed, 0xE9D, 0));
    for (int attempt = 0; attempt < max_rejections; ++attempt) {
        const int s = (int)rng.uniform_index(net.nodes.size());
        const int g = (int)rng.uniform_index(net.nodes.size());
        if (s == g) continue;
        if (distance(net.nodes[s].pos, net.nodes[g].pos) < min_separation_m) continue;
        std::vector<int> outgoing;
        for (int e : net.adjacency[s])
            if (net.traversable_from(e, s)) outgoing.push_back(e);
        if (outgoing.empty()) continue;
        if (!reachable(net, s, g)) continue;
        const int e = outgoing[rng.uniform_index(outgoing.size())];
        ScenarioEndpoints ep;
        ep.start_node = s;
        ep.goal_node = g;
        ep.start = net.nodes[s].pos;
        ep.goal = net.nodes[g].pos;
        ep.start_heading_rad =
            bearing(net.nodes[s].pos, net.nodes[net.other_end(e, s)].pos);
        return ep;
    }
    throw SamplingError("endpoint sampling exhausted: no reachable pair at separation");
}

inline nlohmann::json to_json(const RoadNetwork& net, const LandmarkSet* lms = nullptr) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : net.nodes)
        j["nodes"].push_back({{"id", n.id}, {"x_m", n.pos.x}, {"y_m", n.pos.y}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : net.edges)
        j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"dir", to_string(e.dir)}});
    j["bounds"] = {{"min_x", net.bounds.min_x},
                   {"min_y", net.bounds.min_y},
                   {"max_x", net.bounds.max_x},
                   {"max_y", net.bounds.max_y}};
    j["block_range_m"] = {net.block_min_m, net.block_max_m};
    j["area_km2"] = net.area_km2;
    j["landmarks"] = nlohmann::json::array();
    if (lms) {
        for (const auto& lm : lms->entries)
            j["landmarks"].push_back({{"id", lm.id}, {"x_m", lm.pos.x}, {"y_m", lm.pos.y}});
        j["landmark_density_per_km2"] = lms->density_per_km2;
    }
    return j;
}

inline std::pair<RoadNetwork, LandmarkSet> from_json(const nlohmann::json& j) {
    RoadNetwork net;
    for (const auto& n : j.at("nodes"))
        net.nodes.push_back({n.at("id").get<int>(),
                             Vec2{n.at("x_m").get<double>(), n.at("y_m").get<double>()}});
    for (const auto& e : j.at("edges")) {
        Segment s;
        s.a = e.at("a").get<int>();
        s.b = e.at("b").get<int>();
        s.dir = edge_dir_from_string(e.at("dir").get<std::string>());
        s.length_m = distance(net.nodes[s.a].pos, net.nodes[s.b].pos);
        net.edges.push_back(s);
    }
    const auto& b = j.at("bounds");
    net.bounds = Rect{b.at("min_x").get<double>(), b.at("min_y").get<double>(),
                      b.at("max_x").get<double>(), b.at("max_y").get<double>()};
    if (j.contains("block_range_m")) {
        net.block_min_m = j["block_range_m"][0].get<double>();
        net.block_max_m = j["block_range_m"][1].get<double>();
    }
    if (j.contains("area_km2")) net.area_km2 = j["area_km2"].get<double>();
    net.rebuild_adjacency();
    LandmarkSet lms;
    if (j.contains("landmarks"))
        for (const auto& lm : j["landmarks"])
            lms.entries.push_back({lm.at("id").get<int>(),
                                   Vec2{lm.at("x_m").get<double>(), lm.at("y_m").get<double>()}});
    if (j.contains("landmark_density_per_km2"))
        lms.density_per_km2 = j["landmark_density_per_km2"].get<double>();
    return {std::move(net), std::move(lms)};
}

}  // namespace unav::citygen
