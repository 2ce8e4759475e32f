#include "callosum/metagraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "callosum/sha256.hpp"

namespace callosum {

namespace {

int ceil_log2(int n) {
    int k = 0;
    while ((1 << k) < n) ++k;
    return k;
}

} // namespace

PageRankScores pagerank(const std::vector<std::uint8_t>& adjacency, int n, double damping,
                        double tol) {
    if (n <= 0) throw std::invalid_argument("pagerank: empty node set");
    if (!(damping > 0.0 && damping < 1.0))
        throw std::invalid_argument("pagerank: damping must lie in (0,1)");
    if (tol <= 0.0) throw std::invalid_argument("pagerank: tol must be positive");

    std::vector<int> outdeg(n, 0);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (u != v && adjacency[std::size_t(u) * n + v]) ++outdeg[u];

    PageRankScores out;
    out.damping = damping;
    out.scores.assign(n, 1.0 / n);
    std::vector<double> next(n);

    const int max_iters = 100000;
    for (int it = 0; it < max_iters; ++it) {
        double dangling = 0.0;
        for (int u = 0; u < n; ++u)
            if (outdeg[u] == 0) dangling += out.scores[u];
        double base = (1.0 - damping) / n + damping * dangling / n;
        std::fill(next.begin(), next.end(), base);
        for (int u = 0; u < n; ++u) {
            if (outdeg[u] == 0) continue;
            double share = damping * out.scores[u] / outdeg[u];
            for (int v = 0; v < n; ++v)
                if (u != v && adjacency[std::size_t(u) * n + v]) next[v] += share;
        }
        double change = 0.0;
        for (int i = 0; i < n; ++i) change += std::fabs(next[i] - out.scores[i]);
        out.scores.swap(next);
        out.iterations = it + 1;
        if (change < tol) break;
    }
    return out;
}

std::vector<int> select_key_nodes(const Subgraph& sub, const PageRankScores& scores) {
    const int real = int(sub.nodes.size());
    if (int(scores.scores.size()) < real)
        throw std::invalid_argument("select_key_nodes: scores do not cover the subgraph");
    int k = std::max(1, ceil_log2(real));

    std::vector<int> order(real);
    for (int i = 0; i < real; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.scores[a] != scores.scores[b]) return scores.scores[a] > scores.scores[b];
        return sub.nodes[a] < sub.nodes[b];
    });

    std::vector<int> out;
    for (int i = 0; i < k && i < real; ++i) out.push_back(sub.nodes[order[i]]);
    return out;
}

int MetaGraph::vertex_of_node(int node) const {
    for (int i = 0; i < int(vertices.size()); ++i)
        if (vertices[i].kind == MetaVertex::Kind::real && vertices[i].node == node) return i;
    return -1;
}

int MetaGraph::vertex_of_slot(int subgraph_id) const {
    for (int i = 0; i < int(vertices.size()); ++i)
        if (vertices[i].kind == MetaVertex::Kind::slot && vertices[i].subgraph == subgraph_id)
            return i;
    return -1;
}

int MetaGraph::vertex_of_ganglion(int g) const {
    for (int i = 0; i < int(vertices.size()); ++i)
        if (vertices[i].kind == MetaVertex::Kind::ganglion && vertices[i].ganglion == g) return i;
    return -1;
}

std::vector<std::vector<int>> MetaGraph::neighbor_lists() const {
    std::vector<std::vector<int>> nb(vertices.size());
    for (const auto& e : edges) {
        nb[e.a].push_back(e.b);
        nb[e.b].push_back(e.a);
    }
    for (auto& v : nb) std::sort(v.begin(), v.end());
    return nb;
}

MetaGraph build_meta_graph(const Partition& partition,
                           const std::map<int, std::vector<int>>& key_sets,
                           const CorrelationMap& corr, int ganglion_count, double budget_c) {
    if (ganglion_count < 1) throw std::invalid_argument("build_meta_graph: need >= 1 ganglion");

    MetaGraph meta;
    meta.key_nodes = key_sets;
    meta.ganglion_count = ganglion_count;

    std::set<int> boundary;
    for (const auto& [u, v] : partition.cut_edges) {
        boundary.insert(u);
        boundary.insert(v);
    }
    meta.boundary_nodes.assign(boundary.begin(), boundary.end());

    std::set<int> keys;
    for (const auto& [id, nodes] : key_sets) keys.insert(nodes.begin(), nodes.end());

    std::set<int> real;
    real.insert(keys.begin(), keys.end());
    real.insert(boundary.begin(), boundary.end());

    for (int node : real) {
        MetaVertex v;
        v.kind = MetaVertex::Kind::real;
        v.node = node;
        v.subgraph = partition.assignment[node];
        v.is_key = keys.count(node) > 0;
        v.is_boundary = boundary.count(node) > 0;
        meta.vertices.push_back(v);
    }
    for (const auto& s : partition.subgraphs) {
        MetaVertex v;
        v.kind = MetaVertex::Kind::slot;
        v.subgraph = s.id;
        meta.vertices.push_back(v);
    }
    for (int g = 0; g < ganglion_count; ++g) {
        MetaVertex v;
        v.kind = MetaVertex::Kind::ganglion;
        v.ganglion = g;
        meta.vertices.push_back(v);
    }

    // candidate edges keyed by unordered vertex pair; later inserts override
    // so cut pairs can replace the default unit weight
    std::map<std::pair<int, int>, double> cand;
    auto put = [&](int a, int b, double w, bool override_existing) {
        if (a == b) return;
        auto key = std::minmax(a, b);
        auto it = cand.find({key.first, key.second});
        if (it == cand.end()) cand[{key.first, key.second}] = w;
        else if (override_existing) it->second = w;
    };

    // aggregation: each real vertex to its subgraph's summary slot
    for (int i = 0; i < int(meta.vertices.size()); ++i) {
        const auto& v = meta.vertices[i];
        if (v.kind != MetaVertex::Kind::real) continue;
        put(i, meta.vertex_of_slot(v.subgraph), 1.0, false);
    }
    // ganglion star over key/boundary vertices
    for (int g = 0; g < ganglion_count; ++g) {
        int gv = meta.vertex_of_ganglion(g);
        for (int i = 0; i < int(meta.vertices.size()); ++i)
            if (meta.vertices[i].kind == MetaVertex::Kind::real) put(i, gv, 1.0, false);
    }
    // key-key edges between adjacent subgraphs
    std::set<std::pair<int, int>> adjacent;
    for (const auto& [u, v] : partition.cut_edges) {
        auto pr = std::minmax(partition.assignment[u], partition.assignment[v]);
        adjacent.insert({pr.first, pr.second});
    }
    for (const auto& [i, j] : adjacent) {
        auto ki = key_sets.find(i);
        auto kj = key_sets.find(j);
        if (ki == key_sets.end() || kj == key_sets.end()) continue;
        for (int a : ki->second)
            for (int b : kj->second)
                put(meta.vertex_of_node(a), meta.vertex_of_node(b), 1.0, false);
    }
    // the severed pairs themselves, weighted by their correlation
    for (const auto& [u, v] : partition.cut_edges) {
        double w = std::max(0.0, corr.rho(u, v));
        put(meta.vertex_of_node(u), meta.vertex_of_node(v), w, true);
    }

    for (const auto& [key, w] : cand) meta.edges.push_back(MetaEdge{key.first, key.second, w});

    // sparsify: budget ceil(c * M * log2 M), with log2 floored at 1 so the
    // single-subgraph case keeps a usable cap
    const int m = partition.m;
    double log_term = std::max(std::log2(double(m)), 1.0);
    meta.budget = int(std::ceil(budget_c * m * log_term));

    std::vector<int> degree(meta.vertices.size(), 0);
    for (const auto& e : meta.edges) {
        ++degree[e.a];
        ++degree[e.b];
    }
    std::vector<int> drop_order(meta.edges.size());
    for (int i = 0; i < int(meta.edges.size()); ++i) drop_order[i] = i;
    std::sort(drop_order.begin(), drop_order.end(), [&](int x, int y) {
        const auto& ex = meta.edges[x];
        const auto& ey = meta.edges[y];
        if (ex.weight != ey.weight) return ex.weight < ey.weight;
        if (ex.a != ey.a) return ex.a < ey.a;
        return ex.b < ey.b;
    });
    std::vector<std::uint8_t> dropped(meta.edges.size(), 0);
    int remaining = int(meta.edges.size());
    for (int idx : drop_order) {
        if (remaining <= meta.budget) break;
        const auto& e = meta.edges[idx];
        if (degree[e.a] <= 1 || degree[e.b] <= 1) continue;  // last edge of a vertex
        dropped[idx] = 1;
        --degree[e.a];
        --degree[e.b];
        --remaining;
    }
    if (remaining > meta.budget)
        throw std::runtime_error("meta-graph budget infeasible: " +
                                 std::to_string(remaining - meta.budget) +
                                 " edges over the cap after keeping every vertex connected");
    std::vector<MetaEdge> kept;
    for (int i = 0; i < int(meta.edges.size()); ++i)
        if (!dropped[i]) kept.push_back(meta.edges[i]);
    meta.edges = std::move(kept);

    meta.partition_digest = sha256_hex(partition_to_json(partition));
    return meta;
}

MetaGraph build_meta_from_partition(const Partition& partition, const CorrelationMap& corr,
                                    int ganglion_count, double budget_c, double damping,
                                    double tol) {
    std::map<int, std::vector<int>> key_sets;
    for (const auto& s : partition.subgraphs) {
        PageRankScores pr = pagerank(s.local_adjacency, s.local_count(), damping, tol);
        key_sets[s.id] = select_key_nodes(s, pr);
    }
    return build_meta_graph(partition, key_sets, corr, ganglion_count, budget_c);
}

std::string metagraph_to_json(const MetaGraph& m) {
    nlohmann::json j;
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : m.vertices) {
        nlohmann::json jv;
        switch (v.kind) {
            case MetaVertex::Kind::real: jv["kind"] = "real"; break;
            case MetaVertex::Kind::slot: jv["kind"] = "slot"; break;
            case MetaVertex::Kind::ganglion: jv["kind"] = "ganglion"; break;
        }
        jv["node"] = v.node;
        jv["subgraph"] = v.subgraph;
        jv["ganglion"] = v.ganglion;
        jv["is_key"] = v.is_key;
        jv["is_boundary"] = v.is_boundary;
        verts.push_back(jv);
    }
    j["vertices"] = verts;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : m.edges) edges.push_back({e.a, e.b, e.weight});
    j["edges"] = edges;
    nlohmann::json keysets;
    for (const auto& [id, nodes] : m.key_nodes) keysets[std::to_string(id)] = nodes;
    j["key_nodes"] = keysets;
    j["boundary_nodes"] = m.boundary_nodes;
    j["ganglion_count"] = m.ganglion_count;
    j["budget"] = m.budget;
    j["partition_digest"] = m.partition_digest;
    return j.dump(2) + "\n";
}

} // namespace callosum
