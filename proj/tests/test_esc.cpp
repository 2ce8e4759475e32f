#include <doctest.h>

#include <cmath>

#include "callosum/correlation.hpp"
#include "callosum/jsonio.hpp"
#include "callosum/partition.hpp"
#include "callosum/rng.hpp"
#include "callosum/synthetic.hpp"

#include "oracle.hpp"

using namespace callosum;

namespace {

// F = 1 graph with explicit features and edges
PrunedGraph make_graph(int n, int t, const std::vector<std::pair<int, int>>& edges,
                       std::uint64_t feature_seed) {
    STGraph g;
    g.node_count = n;
    g.timesteps = t;
    g.feature_dim = 1;
    g.adjacency.assign(std::size_t(n) * n, 0);
    g.node_ids.resize(n);
    for (int i = 0; i < n; ++i) g.node_ids[i] = "v" + std::to_string(i);
    for (auto [u, v] : edges) g.set_edge(u, v, true);
    g.features.resize(std::size_t(t) * n);
    Rng rng(feature_seed);
    for (int step = 0; step < t; ++step)
        for (int v = 0; v < n; ++v) g.feature(step, v, 0) = rng.normal();
    return PrunedGraph::from(std::move(g));
}

// correlation map with chosen values on chosen directed edges
CorrelationMap fixed_corr(const std::vector<std::tuple<int, int, double>>& entries, int w = 4) {
    CorrelationMap c;
    c.window = w;
    for (auto [u, v, r] : entries) c.set(u, v, r);
    return c;
}

} // namespace

TEST_CASE("correlation_map: perfect lag-1 coupling gives rho 1") {
    PrunedGraph g = make_graph(2, 20, {{0, 1}}, 1);
    // node 1 equals node 0 shifted by one step
    for (int t = 0; t + 1 < 20; ++t)
        g.graph.feature(t + 1, 1, 0) = g.graph.feature(t, 0, 0);
    CorrelationMap corr = correlation_map(g, 6);
    CHECK(corr.rho(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("correlation_map: constant series maps to zero") {
    PrunedGraph g = make_graph(3, 16, {{0, 1}, {0, 2}}, 2);
    for (int t = 0; t < 16; ++t) g.graph.feature(t, 0, 0) = 2.5;
    CorrelationMap corr = correlation_map(g, 5);
    CHECK(corr.rho(0, 1) == 0.0);
    CHECK(corr.rho(0, 2) == 0.0);
}

TEST_CASE("correlation_map: matches the direct Pearson oracle on a path graph") {
    PrunedGraph g = make_graph(3, 12, {{0, 1}, {1, 2}}, 33);
    CorrelationMap corr = correlation_map(g, 4);
    CHECK(corr.rho(0, 1) ==
          doctest::Approx(oracle::ref_edge_rho(g.graph, 0, 1, 4)).epsilon(1e-12));
    CHECK(corr.rho(1, 2) ==
          doctest::Approx(oracle::ref_edge_rho(g.graph, 1, 2, 4)).epsilon(1e-12));
}

TEST_CASE("correlation_map: window bounds enforced") {
    PrunedGraph g = make_graph(2, 10, {{0, 1}}, 3);
    CHECK_THROWS_AS(correlation_map(g, 0), std::invalid_argument);
    CHECK_THROWS_AS(correlation_map(g, 10), std::invalid_argument);
}

TEST_CASE("correlation_map: pair evaluations scale linearly with edge count") {
    PrunedGraph g1 = make_graph(20, 64, {}, 4);
    PrunedGraph g2 = make_graph(20, 64, {}, 4);
    for (int i = 0; i + 1 < 20; ++i) g1.graph.set_edge(i, i + 1, true);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
            if (i != j && (i + j) % 2 == 0) g2.graph.set_edge(i, j, true);
    correlation_map(g1, 8);
    std::size_t ops1 = correlation_pair_evaluations();
    std::size_t edges1 = g1.edge_list().size();
    correlation_map(g2, 8);
    std::size_t ops2 = correlation_pair_evaluations();
    std::size_t edges2 = g2.edge_list().size();
    CHECK(ops1 == edges1 * (64 - 8));
    CHECK(ops2 == edges2 * (64 - 8));
}

TEST_CASE("extract_backbone: directed chain follows the unique maximal path") {
    PrunedGraph g = make_graph(3, 16, {{0, 1}, {1, 2}}, 5);
    auto corr = fixed_corr({{0, 1, 1.0}, {1, 2, 1.0}});
    CHECK(extract_backbone(g, corr) == std::vector<int>{0, 1, 2});
}

TEST_CASE("extract_backbone: ties break toward smaller node index") {
    // complete digraph, identical rho everywhere
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v)
            if (u != v) edges.push_back({u, v});
    PrunedGraph g = make_graph(4, 16, edges, 6);
    std::vector<std::tuple<int, int, double>> entries;
    for (auto [u, v] : edges) entries.push_back({u, v, 0.5});
    auto corr = fixed_corr(entries);
    CHECK(extract_backbone(g, corr) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("extract_backbone: greedy reaches the (1-1/e) bound on small graphs") {
    // seeded synthetic graphs small enough to enumerate every ordering
    for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u, 16u}) {
        SyntheticData data = generate_synthetic(6, 80, seed, 0.3);
        PrunedGraph g = PrunedGraph::from(data.graph);
        CorrelationMap corr = correlation_map(g, 8);
        auto order = extract_backbone(g, corr);
        double got = oracle::ordering_score(order, g, corr);
        double best = oracle::best_ordering_score(g, corr);
        CHECK(got >= (1.0 - 1.0 / std::exp(1.0)) * best - 1e-12);
    }
}

TEST_CASE("segment: even split") {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < 8; ++i) edges.push_back({i, i + 1});
    PrunedGraph g = make_graph(8, 16, edges, 7);
    CorrelationMap corr = correlation_map(g, 4);
    std::vector<int> backbone{0, 1, 2, 3, 4, 5, 6, 7};
    Partition p = segment(backbone, 4, g, corr, 1.0);
    REQUIRE(p.subgraphs.size() == 4);
    for (const auto& s : p.subgraphs) CHECK(s.nodes.size() == 2);
}

TEST_CASE("segment: M=1 degenerates to one subgraph with empty cut") {
    SyntheticData data = generate_synthetic(10, 64, 21, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 6);
    auto backbone = extract_backbone(g, corr);
    Partition p = segment(backbone, 1, g, corr, 1.0);
    CHECK(p.subgraphs.size() == 1);
    CHECK(p.cut_edges.empty());
    CHECK(p.delta_cut == 0.0);
}

TEST_CASE("segment: floor formula sizes for N'=10, M=4") {
    SyntheticData data = generate_synthetic(10, 64, 22, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 6);
    auto backbone = extract_backbone(g, corr);
    Partition p = segment(backbone, 4, g, corr, 1.0);
    std::vector<std::size_t> sizes;
    for (const auto& s : p.subgraphs) sizes.push_back(s.nodes.size());
    // floor(i*10/4) boundaries: 0,2,5,7,10
    CHECK(sizes == std::vector<std::size_t>{2, 3, 2, 3});
    // direct evaluation of the index bounds
    for (int i = 0; i < 4; ++i) {
        long lo = (long(i) * 10) / 4, hi = (long(i + 1) * 10) / 4;
        CHECK(long(p.subgraphs[i].nodes.size()) == hi - lo);
    }
}

TEST_CASE("segment: every edge lands in exactly one subgraph or the cut") {
    SyntheticData data = generate_synthetic(24, 128, 23, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 8);
    auto backbone = extract_backbone(g, corr);
    Partition p = segment(backbone, 4, g, corr, 1.0);
    std::size_t intra = 0;
    for (const auto& s : p.subgraphs) intra += s.intra_edges.size();
    CHECK(intra + p.cut_edges.size() == g.edge_list().size());
    // disjoint cover
    std::vector<int> seen(g.graph.node_count, 0);
    for (const auto& s : p.subgraphs)
        for (int v : s.nodes) seen[v] += 1;
    for (int v : g.alive_nodes()) CHECK(seen[v] == 1);
}

TEST_CASE("select_m: zero-cut split wins") {
    // two disconnected halves: 0-1-2 and 3-4-5
    PrunedGraph g =
        make_graph(6, 40, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {3, 4}, {4, 3}, {4, 5}, {5, 4}}, 8);
    CorrelationMap corr = correlation_map(g, 6);
    int m = select_m(g, corr, 1.0, {2, 4});
    CHECK(m == 2);
}

TEST_CASE("select_m: matches the brute-force objective sweep") {
    SyntheticData data = generate_synthetic(12, 128, 24, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 8);
    std::vector<int> candidates{2, 3, 4, 6};
    int got = select_m(g, corr, 0.5, candidates);

    auto backbone = extract_backbone(g, corr);
    int best = -1;
    double best_obj = 0;
    for (int m : candidates) {
        Partition p = segment(backbone, m, g, corr, 0.5);
        double obj = p.delta_cut + 0.5 * std::log(double(m));
        if (best < 0 || obj < best_obj) {
            best_obj = obj;
            best = m;
        }
    }
    CHECK(got == best);
}

TEST_CASE("select_m: empty candidate set rejected") {
    SyntheticData data = generate_synthetic(6, 64, 25, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 6);
    CHECK_THROWS_AS(select_m(g, corr, 1.0, {}), std::invalid_argument);
}

TEST_CASE("repair_subgraph: isolated node reconnects to two backbone-nearest peers") {
    // 5 nodes, node 0 isolated inside its subgraph {0,1,2}
    PrunedGraph g = make_graph(5, 16, {{1, 2}, {2, 1}, {3, 4}, {4, 3}}, 9);
    CorrelationMap corr = correlation_map(g, 4);
    Partition p = segment({0, 1, 2, 3, 4}, 2, g, corr, 1.0);
    // subgraph 0 holds {0,1} (floor split 5/2 -> 2+3); rebuild with a chosen
    // grouping instead so subgraph 0 = {0,1,2}
    Partition custom = assemble_partition({{0, {0, 1, 2}}, {1, {3, 4}}}, {0, 1, 2, 3, 4},
                                          {0, 1, 2, 3, 4}, g, corr, 1.0, 5, 2);
    Subgraph repaired = repair_subgraph(custom.by_id(0), custom, 0);
    int l0 = repaired.local_index(0);
    CHECK(repaired.degree(l0) > 0);
    bool to1 = false, to2 = false;
    for (const auto& ve : repaired.virtual_edges) {
        if (ve.tag != VirtualEdgeTag::reconnection) continue;
        int other = ve.a == l0 ? ve.b : (ve.b == l0 ? ve.a : -1);
        if (other == repaired.local_index(1)) to1 = true;
        if (other == repaired.local_index(2)) to2 = true;
    }
    CHECK(to1);
    CHECK(to2);
}

TEST_CASE("repair_subgraph: no isolated nodes, no incident cuts, k=0 is a no-op") {
    PrunedGraph g = make_graph(6, 16, {{0, 1}, {1, 0}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}}, 10);
    CorrelationMap corr = correlation_map(g, 4);
    Partition p = assemble_partition({{0, {0, 1, 2}}, {1, {3, 4, 5}}}, {0, 1, 2, 3, 4, 5},
                                     {0, 1, 2, 3, 4, 5}, g, corr, 1.0, 6, 2);
    CHECK(p.cut_edges.empty());
    Subgraph repaired = repair_subgraph(p.by_id(0), p, 0);
    CHECK(repaired == p.by_id(0));
}

TEST_CASE("repair_subgraph: stub edges stay inside and non-stub degree >= 1") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        SyntheticData data = generate_synthetic(16, 64, seed, 0.3);
        PrunedGraph g = PrunedGraph::from(data.graph);
        CorrelationMap corr = correlation_map(g, 6);
        auto backbone = extract_backbone(g, corr);
        Partition p = segment(backbone, 4, g, corr, 1.0);
        repair_all(p, 2);
        for (const auto& s : p.subgraphs) {
            for (int li = 0; li < int(s.nodes.size()); ++li) CHECK(s.degree(li) >= 1);
            for (const auto& ve : s.virtual_edges) {
                CHECK(ve.a < s.local_count());
                CHECK(ve.b < s.local_count());
            }
            CHECK(s.stub_count <= 1);
        }
    }
}

TEST_CASE("repair: K-Ring densifies around boundary nodes within k positions") {
    // chain 0-1-2-3-4-5 cut at the middle: boundary nodes 2 and 3
    PrunedGraph g = make_graph(
        6, 16, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}, {3, 4}, {4, 3}, {4, 5}, {5, 4}},
        11);
    CorrelationMap corr = correlation_map(g, 4);
    Partition p = segment({0, 1, 2, 3, 4, 5}, 2, g, corr, 1.0);
    Subgraph left = repair_subgraph(p.by_id(0), p, 2);
    // node 2 is boundary; positions 0,1,2: nodes within 2 positions are 0 and 1;
    // edge 2-1 exists already so the k-ring adds 2-0
    bool added = false;
    for (const auto& ve : left.virtual_edges)
        if (ve.tag == VirtualEdgeTag::k_ring) {
            int a = left.nodes[ve.a], b = left.nodes[ve.b];
            if ((a == 2 && b == 0) || (a == 0 && b == 2)) added = true;
        }
    CHECK(added);
}

TEST_CASE("info_retention: identity holds exactly across random partitions") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        SyntheticData data = generate_synthetic(20, 64, seed, 0.3);
        PrunedGraph g = PrunedGraph::from(data.graph);
        CorrelationMap corr = correlation_map(g, 6);
        auto backbone = extract_backbone(g, corr);
        int m = 2 + int(seed % 5);
        Partition p = segment(backbone, m, g, corr, 1.0);
        auto [info, total] = info_retention(p, corr);

        // recompute all three sums straight from the graph
        double ref_total = 0, ref_cut = 0;
        for (auto [u, v] : g.edge_list()) {
            ref_total += corr.rho(u, v);
            if (p.assignment[u] != p.assignment[v]) ref_cut += corr.rho(u, v);
        }
        CHECK(std::fabs(total - ref_total) < 1e-12);
        CHECK(std::fabs(p.delta_cut - ref_cut) < 1e-12);
        CHECK(std::fabs(info + p.delta_cut - total) < 1e-12);
    }
}

TEST_CASE("info_retention: M=1 retains everything") {
    SyntheticData data = generate_synthetic(10, 64, 31, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 6);
    Partition p = segment(extract_backbone(g, corr), 1, g, corr, 1.0);
    auto [info, total] = info_retention(p, corr);
    CHECK(info == total);
}

TEST_CASE("partition JSON is byte-stable and round-trips") {
    SyntheticData data = generate_synthetic(12, 64, 41, 0.3);
    PrunedGraph g = PrunedGraph::from(data.graph);
    CorrelationMap corr = correlation_map(g, 6);
    Partition p = segment(extract_backbone(g, corr), 3, g, corr, 1.0);
    repair_all(p, 2);
    std::string j1 = partition_to_json(p);
    std::string j2 = partition_to_json(p);
    CHECK(j1 == j2);
    Partition q = partition_from_json(j1);
    CHECK(partition_to_json(q) == j1);
}
