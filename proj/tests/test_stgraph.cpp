#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "callosum/csv.hpp"
#include "callosum/jsonio.hpp"
#include "callosum/metrics.hpp"
#include "callosum/rng.hpp"
#include "callosum/synthetic.hpp"

#include "oracle.hpp"

using namespace callosum;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("callosum_test_" + name)).string();
}

void write(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

} // namespace

TEST_CASE("ingest: minimal two-node graph") {
    write(tmp_path("f.csv"),
          "node_id,timestep,f_0\n"
          "a,0,1.0\na,1,2.0\na,2,3.0\n"
          "b,0,4.0\nb,1,5.0\nb,2,6.0\n");
    write(tmp_path("e.csv"), "src_id,dst_id\na,b\n");
    STGraph g = ingest_csv(tmp_path("f.csv"), tmp_path("e.csv"));
    CHECK(g.node_count == 2);
    CHECK(g.timesteps == 3);
    CHECK(g.feature_dim == 1);
    CHECK(g.edge(0, 1));
    CHECK(!g.edge(1, 0));
    CHECK(g.feature(2, 1, 0) == 6.0);
}

TEST_CASE("ingest: dangling edge endpoint names the offender") {
    write(tmp_path("f.csv"), "node_id,timestep,f_0\na,0,1\na,1,2\n");
    write(tmp_path("e.csv"), "src_id,dst_id\na,n9\n");
    CHECK_THROWS_WITH_AS(ingest_csv(tmp_path("f.csv"), tmp_path("e.csv")),
                         doctest::Contains("n9"), std::invalid_argument);
}

TEST_CASE("ingest: missing timestep names the node") {
    write(tmp_path("f.csv"), "node_id,timestep,f_0\na,0,1\na,2,2\nb,0,1\nb,1,2\nb,2,3\n");
    write(tmp_path("e.csv"), "src_id,dst_id\n");
    CHECK_THROWS_WITH_AS(ingest_csv(tmp_path("f.csv"), tmp_path("e.csv")),
                         doctest::Contains("a"), std::invalid_argument);
}

TEST_CASE("ingest: non-numeric feature rejected") {
    write(tmp_path("f.csv"), "node_id,timestep,f_0\na,0,abc\na,1,2\n");
    write(tmp_path("e.csv"), "src_id,dst_id\n");
    CHECK_THROWS_AS(ingest_csv(tmp_path("f.csv"), tmp_path("e.csv")), std::invalid_argument);
}

TEST_CASE("ingest: PeMS08-format export with 170 nodes") {
    std::string f = "node_id,timestep,f_0,f_1,f_2\n";
    Rng rng(99);
    for (int v = 0; v < 170; ++v)
        for (int t = 0; t < 4; ++t) {
            f += "s" + std::to_string(v) + "," + std::to_string(t);
            for (int k = 0; k < 3; ++k) f += "," + std::to_string(rng.uniform());
            f += "\n";
        }
    std::string e = "src_id,dst_id\n";
    for (int v = 0; v + 1 < 170; ++v)
        e += "s" + std::to_string(v) + ",s" + std::to_string(v + 1) + "\n";
    write(tmp_path("pems_f.csv"), f);
    write(tmp_path("pems_e.csv"), e);
    STGraph g = ingest_csv(tmp_path("pems_f.csv"), tmp_path("pems_e.csv"));
    CHECK(g.node_count == 170);
    CHECK(g.feature_dim == 3);
}

TEST_CASE("ingest/export round-trip is bit-identical") {
    SyntheticData data = generate_synthetic(8, 70, 3, 0.25);
    export_csv(data.graph, tmp_path("rt_f.csv"), tmp_path("rt_e.csv"));
    STGraph g1 = ingest_csv(tmp_path("rt_f.csv"), tmp_path("rt_e.csv"));
    export_csv(g1, tmp_path("rt_f2.csv"), tmp_path("rt_e2.csv"));
    STGraph g2 = ingest_csv(tmp_path("rt_f2.csv"), tmp_path("rt_e2.csv"));
    CHECK(g1.features == g2.features);
    CHECK(g1.adjacency == g2.adjacency);
    CHECK(g1.node_ids == g2.node_ids);
    // and the round-trip preserves the generator's exact bytes
    CHECK(g1.features == data.graph.features);
    CHECK(g1.adjacency == data.graph.adjacency);
}

TEST_CASE("generate_synthetic is a pure function of its arguments") {
    SyntheticData a = generate_synthetic(40, 2000, 7, 0.3);
    SyntheticData b = generate_synthetic(40, 2000, 7, 0.3);
    CHECK(a.graph.features == b.graph.features);
    CHECK(a.graph.adjacency == b.graph.adjacency);
    CHECK(a.held_out.data == b.held_out.data);

    SyntheticData c = generate_synthetic(40, 2000, 8, 0.3);
    CHECK(a.graph.features != c.graph.features);
}

TEST_CASE("generate_synthetic rejects undersized requests") {
    CHECK_THROWS_AS(generate_synthetic(3, 2000, 7, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic(40, 63, 7, 0.3), std::invalid_argument);
}

TEST_CASE("generate_synthetic: rate 0 decouples the series") {
    SyntheticData data = generate_synthetic(12, 600, 11, 0.0);
    const STGraph& g = data.graph;
    // the series are independent random walks at rate 0, so the differenced
    // series must be uncorrelated along edges
    double worst = 0.0;
    for (int u = 0; u < g.node_count; ++u) {
        for (int v = 0; v < g.node_count; ++v) {
            if (u == v || !g.edge(u, v)) continue;
            std::vector<double> a(g.timesteps - 2), b(g.timesteps - 2);
            for (int t = 0; t + 2 < g.timesteps; ++t) {
                a[t] = g.feature(t + 1, u, 0) - g.feature(t, u, 0);
                b[t] = g.feature(t + 2, v, 0) - g.feature(t + 1, v, 0);
            }
            worst = std::max(worst, std::fabs(oracle::ref_pearson(a, b)));
        }
    }
    CHECK(worst < 0.15);
}

TEST_CASE("generate_synthetic: edge correlations dominate non-edges") {
    SyntheticData data = generate_synthetic(40, 2000, 7, 0.3);
    const STGraph& g = data.graph;
    double edge_sum = 0, non_sum = 0;
    int edge_n = 0, non_n = 0;
    for (int u = 0; u < g.node_count; ++u) {
        for (int v = 0; v < g.node_count; ++v) {
            if (u == v) continue;
            std::vector<double> a(g.timesteps - 1), b(g.timesteps - 1);
            for (int t = 0; t + 1 < g.timesteps; ++t) {
                a[t] = g.feature(t, u, 0);
                b[t] = g.feature(t + 1, v, 0);
            }
            double r = oracle::ref_pearson(a, b);
            if (g.edge(u, v)) {
                edge_sum += r;
                ++edge_n;
            } else {
                non_sum += r;
                ++non_n;
            }
        }
    }
    CHECK(edge_sum / edge_n > non_sum / non_n);
}

TEST_CASE("compute_metrics: hand arithmetic") {
    Matrix pred(2, 1), targ(2, 1);
    pred(0, 0) = 1;
    pred(1, 0) = 2;
    targ(0, 0) = 1;
    targ(1, 0) = 4;
    MetricsReport m = compute_metrics(pred, targ);
    CHECK(m.mae == doctest::Approx(1.0));
    CHECK(m.mse == doctest::Approx(2.0));
}

TEST_CASE("compute_metrics: identity predictions") {
    Rng rng(5);
    Matrix y(6, 3);
    for (auto& x : y.data) x = rng.normal();
    MetricsReport m = compute_metrics(y, y);
    CHECK(m.mae == 0.0);
    CHECK(m.mse == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.r2 == doctest::Approx(1.0));
    CHECK(m.trend_f1 == doctest::Approx(1.0));
}

TEST_CASE("compute_metrics: random pair matches the reference implementation") {
    Rng rng(17);
    Matrix pred(10, 3), targ(10, 3);
    for (auto& x : pred.data) x = rng.normal();
    for (auto& x : targ.data) x = rng.normal();
    MetricsReport m = compute_metrics(pred, targ);
    auto ref = oracle::reference_metrics(pred, targ);
    CHECK(m.mae == doctest::Approx(ref.mae).epsilon(1e-12));
    CHECK(m.mse == doctest::Approx(ref.mse).epsilon(1e-12));
    CHECK(m.rmse == doctest::Approx(ref.rmse).epsilon(1e-12));
    CHECK(m.r2 == doctest::Approx(ref.r2).epsilon(1e-12));
    CHECK(m.trend_f1 == doctest::Approx(ref.trend_f1).epsilon(1e-12));
    CHECK(std::fabs(m.rmse - std::sqrt(m.mse)) <= 1e-9 * std::max(1.0, m.rmse));
}

TEST_CASE("compute_metrics: constant targets give an undefined-r2 sentinel") {
    Matrix pred(3, 2, 0.5), targ(3, 2, 1.0);
    MetricsReport m = compute_metrics(pred, targ);
    CHECK(!m.r2_defined);
    CHECK(m.mae == doctest::Approx(0.5));
}

TEST_CASE("compute_metrics: shape mismatch rejected") {
    Matrix a(2, 2), b(2, 3);
    CHECK_THROWS_AS(compute_metrics(a, b), std::invalid_argument);
}

TEST_CASE("deletion request file parsing, validation, digests") {
    SyntheticData data = generate_synthetic(8, 70, 3, 0.25);
    std::string text = "# nodes to forget\nn1\nn3\n";
    for (int u = 0; u < 8; ++u) {
        bool done = false;
        for (int v = 0; v < 8 && !done; ++v)
            if (data.graph.edge(u, v)) {
                text += "edge," + data.graph.node_ids[u] + "," + data.graph.node_ids[v] + "\n";
                done = true;
            }
        if (done) break;
    }
    write(tmp_path("req.txt"), text);
    DeletionRequest req = load_request_file(data.graph, tmp_path("req.txt"));
    CHECK(req.nodes.count(1) == 1);
    CHECK(req.nodes.count(3) == 1);
    CHECK(req.edges.size() == 1);
    CHECK(req.digest().size() == 64);

    write(tmp_path("req_bad.txt"), "nope\n");
    CHECK_THROWS_WITH_AS(load_request_file(data.graph, tmp_path("req_bad.txt")),
                         doctest::Contains("nope"), std::invalid_argument);
}

TEST_CASE("purge removes nodes, edges and feature bytes") {
    SyntheticData data = generate_synthetic(8, 70, 3, 0.25);
    PrunedGraph base = PrunedGraph::from(data.graph);
    DeletionRequest req;
    req.nodes.insert(2);
    PrunedGraph purged = purge(base, req);
    CHECK(purged.alive_count() == 7);
    for (int v = 0; v < 8; ++v) {
        CHECK(!purged.edge(2, v));
        CHECK(!purged.edge(v, 2));
    }
    for (int t = 0; t < purged.graph.timesteps; ++t) CHECK(purged.graph.feature(t, 2, 0) == 0.0);
    CHECK(base.alive_count() == 8);
}

TEST_CASE("data view records reads and refuses dead nodes") {
    SyntheticData data = generate_synthetic(8, 70, 3, 0.25);
    PrunedGraph base = PrunedGraph::from(data.graph);
    auto ledger = std::make_shared<ReadLedger>();
    DataView view(base, ledger, "stage-a");
    view.at(0, 1, 0);
    view.at(1, 1, 0);
    view.at(0, 2, 0);
    CHECK(ledger->size() == 2);  // deduplicated per (stage, node)

    DeletionRequest req;
    req.nodes.insert(2);
    PrunedGraph purged = purge(base, req);
    DataView dead(purged, ledger, "stage-b");
    CHECK_THROWS_AS(dead.at(0, 2, 0), std::logic_error);
}

TEST_CASE("graph JSON round-trip") {
    SyntheticData data = generate_synthetic(6, 64, 9, 0.2);
    std::string j = graph_to_json(data.graph);
    STGraph g = graph_from_json(j);
    CHECK(g.features == data.graph.features);
    CHECK(g.adjacency == data.graph.adjacency);
    CHECK(graph_to_json(g) == j);
}
