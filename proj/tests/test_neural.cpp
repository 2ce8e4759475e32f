#include <doctest.h>

#include <cmath>

#include "callosum/global_layer.hpp"
#include "callosum/pipeline.hpp"
#include "callosum/rng.hpp"
#include "callosum/submodel.hpp"
#include "callosum/synthetic.hpp"

#include "oracle.hpp"

using namespace callosum;

namespace {

struct SubFixture {
    PrunedGraph graph;
    Subgraph sub;
    Matrix ahat;
    std::vector<std::vector<Matrix>> inputs;
    std::vector<Matrix> targets;
    std::vector<int> loss_nodes;
    ForecastTask task{2, 5};

    explicit SubFixture(std::uint64_t seed) {
        SyntheticData data = generate_synthetic(6, 70, seed, 0.3);
        graph = PrunedGraph::from(data.graph);
        sub.id = 0;
        sub.nodes = graph.alive_nodes();
        int n = int(sub.nodes.size());
        sub.local_adjacency = graph.graph.adjacency;
        ahat = normalized_adjacency(sub);
        DataView view(graph, nullptr, "fixture");
        std::set<int> none;
        for (int t_end : {10, 20}) {
            inputs.push_back(window_inputs(sub, view, task, t_end, none));
            targets.push_back(window_targets(sub, view, task, t_end, none));
        }
        for (int i = 0; i < n; ++i) loss_nodes.push_back(i);
    }
};

GlobalDims small_dims(const Partition& p, const std::map<int, int>& widths) {
    GlobalDims d;
    d.token_dim = 8;
    d.heads = 2;
    d.layers = 2;
    d.horizon = 1;
    d.sub_widths = widths;
    (void)p;
    return d;
}

struct GlobalFixture {
    ForecastTask task{1, 6};
    PrunedGraph graph;
    CorrelationMap corr;
    Partition partition;
    std::vector<SubModel> models;
    MetaGraph meta;
    GlobalWiring wiring;
    std::vector<GlobalInputs> batch;
    std::vector<Matrix> targets;
    GlobalLayer layer;

    explicit GlobalFixture(std::uint64_t seed, double l1 = 0.01, double l2 = 0.001)
        : layer(make(seed, l1, l2)) {}

    GlobalLayer make(std::uint64_t seed, double l1, double l2) {
        SyntheticData data = generate_synthetic(10, 70, seed, 0.3);
        graph = PrunedGraph::from(data.graph);
        corr = correlation_map(graph, task.window);
        partition = segment(extract_backbone(graph, corr), 2, graph, corr, 1.0);
        repair_all(partition, 1);
        std::map<int, int> widths;
        TrainConfig quick;
        quick.epochs = 1;
        for (const auto& s : partition.subgraphs) {
            SubTrainResult r =
                train_submodel(s, graph, task, quick, {}, 1e-4, 4, seed + s.id, nullptr);
            models.push_back(std::move(r.model));
            widths[s.id] = 4;
        }
        meta = build_meta_from_partition(partition, corr, 2, 8.0);
        wiring = GlobalWiring::build(meta);
        for (int t_end : {12, 24}) {
            batch.push_back(assemble_global_inputs(partition, models, graph, task, t_end,
                                                   nullptr, "fixture"));
            std::vector<int> alive = graph.alive_nodes();
            Matrix y(alive.size(), task.horizon);
            DataView view(graph, nullptr, "fixture");
            for (std::size_t vi = 0; vi < alive.size(); ++vi)
                for (int k = 0; k < task.horizon; ++k)
                    y(vi, k) = view.at(t_end + 1 + k, alive[vi], 0);
            targets.push_back(std::move(y));
        }
        GlobalDims dims = small_dims(partition, widths);
        GlobalHyper hyper{l1, l2, 0.5};
        return GlobalLayer::init(meta, dims, hyper, seed * 13 + 1);
    }
};

} // namespace

TEST_CASE("submodel: analytic gradient matches central differences") {
    SubFixture f(101);
    for (std::uint64_t point = 0; point < 3; ++point) {
        SubModel model = SubModel::init(0, {int(f.sub.nodes.size()), 1, f.task.window, 5,
                                            f.task.horizon},
                                        900 + point);
        // random evaluation point away from the seeded init
        Rng rng(300 + point);
        for (auto& p : model.mutable_params()) p += 0.3 * rng.normal();

        auto loss = [&]() {
            return submodel_loss(model, f.ahat, f.inputs, f.targets, f.loss_nodes, 1e-3,
                                 nullptr);
        };
        auto analytic = [&](std::vector<double>& grad) {
            submodel_loss(model, f.ahat, f.inputs, f.targets, f.loss_nodes, 1e-3, &grad);
        };
        auto st = oracle::check_gradient_span(loss, analytic, model.mutable_params(), 0,
                                              model.param_count());
        CHECK(st.ok);
        CHECK(st.max_rel < 1e-4);
    }
}

TEST_CASE("global layer: analytic gradient matches central differences per block") {
    GlobalFixture f(202);
    Rng rng(404);
    for (auto& p : f.layer.mutable_params()) p += 0.2 * rng.normal();
    // keep alpha interior so the clip never binds during the check
    f.layer.mutable_params()[f.layer.off_alpha()] = 0.37;

    auto loss = [&]() {
        return global_loss(f.layer, f.wiring, f.partition, f.batch, f.targets, nullptr);
    };
    auto analytic = [&](std::vector<double>& grad) {
        global_loss(f.layer, f.wiring, f.partition, f.batch, f.targets, &grad);
    };
    for (const auto& [name, span] : f.layer.blocks()) {
        auto st = oracle::check_gradient_span(loss, analytic, f.layer.mutable_params(),
                                              span.first, span.second);
        INFO("block ", name, " max rel ", st.max_rel);
        CHECK(st.ok);
    }
}

TEST_CASE("submodel: training is bit-deterministic") {
    SubFixture f(103);
    TrainConfig cfg;
    cfg.epochs = 3;
    auto a = train_submodel(f.sub, f.graph, f.task, cfg, {}, 1e-4, 5, 42, nullptr);
    auto b = train_submodel(f.sub, f.graph, f.task, cfg, {}, 1e-4, 5, 42, nullptr);
    CHECK(a.model.params() == b.model.params());
    CHECK(a.model.data_digest() == b.model.data_digest());
    auto c = train_submodel(f.sub, f.graph, f.task, cfg, {}, 1e-4, 5, 43, nullptr);
    CHECK(a.model.params() != c.model.params());
}

TEST_CASE("submodel: constant-zero features leave only the regularizer") {
    SubFixture f(104);
    for (auto& x : f.graph.graph.features) x = 0.0;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 1024;  // single batch per epoch
    auto res = train_submodel(f.sub, f.graph, f.task, cfg, {}, 1e-3, 5, 42, nullptr);
    // data term vanishes: first epoch loss equals lambda * ||theta_init||^2
    SubModel init = SubModel::init(0, res.model.dims(), 42);
    double reg = 0.0;
    for (double p : init.params()) reg += p * p;
    CHECK(res.epoch_losses.front() == doctest::Approx(1e-3 * reg).epsilon(1e-12));

    Matrix ahat = normalized_adjacency(f.sub);
    DataView view(f.graph, nullptr, "x");
    std::set<int> none;
    auto xs = window_inputs(f.sub, view, f.task, 10, none);
    SubForward fwd = submodel_forward(res.model, ahat, xs);
    for (double y : fwd.preds.data) CHECK(std::fabs(y) < 1e-6);
}

TEST_CASE("submodel: frozen parameters are immutable") {
    SubModel m = SubModel::init(0, {4, 1, 3, 4, 1}, 7);
    m.mutable_params()[0] = 1.0;
    m.freeze();
    CHECK_THROWS_AS(m.mutable_params(), std::logic_error);
}

TEST_CASE("submodel: excluded nodes never reach the digest or the loss") {
    SubFixture f(105);
    TrainConfig cfg;
    cfg.epochs = 1;
    std::set<int> exclude{f.sub.nodes[0]};
    auto with = train_submodel(f.sub, f.graph, f.task, cfg, exclude, 1e-4, 4, 42, nullptr);
    // perturbing the excluded node's bytes changes nothing
    PrunedGraph poked = f.graph;
    for (int t = 0; t < poked.graph.timesteps; ++t)
        poked.graph.feature(t, f.sub.nodes[0], 0) *= 1e6;
    auto poked_run = train_submodel(f.sub, poked, f.task, cfg, exclude, 1e-4, 4, 42, nullptr);
    CHECK(with.model.params() == poked_run.model.params());
    CHECK(with.model.data_digest() == poked_run.model.data_digest());
}

TEST_CASE("encode: requires a frozen model and is reproducible") {
    SubFixture f(106);
    SubModel raw = SubModel::init(0, {int(f.sub.nodes.size()), 1, f.task.window, 4,
                                      f.task.horizon},
                                  11);
    CHECK_THROWS_AS(encode(raw, f.sub, f.graph, f.task, 10, nullptr, "x"), std::logic_error);
    raw.freeze();
    Matrix e1 = encode(raw, f.sub, f.graph, f.task, 10, nullptr, "x");
    Matrix e2 = encode(raw, f.sub, f.graph, f.task, 10, nullptr, "x");
    CHECK(e1 == e2);
    for (double x : e1.data) CHECK(std::isfinite(x));
}

TEST_CASE("encode: zero inputs with zero biases give zero embeddings") {
    SubFixture f(107);
    for (auto& x : f.graph.graph.features) x = 0.0;
    SubModel raw = SubModel::init(0, {int(f.sub.nodes.size()), 1, f.task.window, 4,
                                      f.task.horizon},
                                  11);
    raw.freeze();
    Matrix e = encode(raw, f.sub, f.graph, f.task, 10, nullptr, "x");
    for (double x : e.data) CHECK(x == 0.0);
}

TEST_CASE("fuse: convexity of token and ganglion streams") {
    std::vector<double> tok{2, 0}, gang{0, 2};
    CHECK(fuse(tok, gang, 0.5) == std::vector<double>{1, 1});
    CHECK(fuse(tok, gang, 1.0) == tok);
    CHECK(fuse(tok, gang, 0.0) == gang);
    CHECK_THROWS_AS(fuse(tok, {1.0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(fuse(tok, gang, 1.5), std::invalid_argument);
}

TEST_CASE("global forward: attention weights are a softmax over meta neighbors") {
    GlobalFixture f(203);
    GlobalForward fw = global_forward(f.layer, f.wiring, f.partition, f.batch[0]);
    const int n = int(f.meta.vertices.size());
    for (int l = 0; l < f.layer.dims().layers; ++l) {
        for (int h = 0; h < f.layer.dims().heads; ++h) {
            for (int i = 0; i < n; ++i) {
                double sum = 0.0;
                for (int j = 0; j < n; ++j) {
                    double a = fw.attn[l][h](i, j);
                    CHECK(a >= 0.0);
                    bool is_neighbor = false;
                    for (int nb : f.wiring.neighbors[i])
                        if (nb == j) is_neighbor = true;
                    if (!is_neighbor) CHECK(a == 0.0);  // mask is exact
                    sum += a;
                }
                if (!f.wiring.neighbors[i].empty())
                    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("global forward: isolated ganglion contributes no gradient to its MLP") {
    GlobalFixture f(204, 0.0, 0.0);  // no regularizers in play
    // cut ganglion 1 out of the meta graph entirely
    std::vector<MetaEdge> kept;
    int gv = f.meta.vertex_of_ganglion(1);
    for (const auto& e : f.meta.edges)
        if (e.a != gv && e.b != gv) kept.push_back(e);
    f.meta.edges = std::move(kept);
    f.wiring = GlobalWiring::build(f.meta);

    GlobalLayer layer = GlobalLayer::init(f.meta, f.layer.dims(), GlobalHyper{0.0, 0.0, 0.5},
                                          999);
    Rng rng(55);
    for (auto& p : layer.mutable_params()) p += 0.2 * rng.normal();

    std::vector<double> grad(layer.param_count(), 0.0);
    global_loss(layer, f.wiring, f.partition, f.batch, f.targets, &grad);
    const std::size_t D = layer.dims().token_dim;
    std::size_t off = layer.off_mlp(1);
    std::size_t len = 2 * D * D + 2 * D;
    for (std::size_t i = off; i < off + len; ++i) CHECK(grad[i] == 0.0);

    // and predictions stay bit-identical when its parameters change
    GlobalForward before = global_forward(layer, f.wiring, f.partition, f.batch[0]);
    for (std::size_t i = off; i < off + len; ++i) layer.mutable_params()[i] += 3.0;
    GlobalForward after = global_forward(layer, f.wiring, f.partition, f.batch[0]);
    CHECK(before.predictions == after.predictions);
}

TEST_CASE("global training: alpha stays clipped, loss non-increasing at tiny rate") {
    GlobalFixture f(205);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.epochs = 5;
    cfg.batch = 1024;  // full batch
    GlobalTrainResult res =
        train_global(f.layer, f.wiring, f.partition, f.batch, f.targets, cfg, 7);
    for (std::size_t i = 1; i < res.epoch_losses.size(); ++i)
        CHECK(res.epoch_losses[i] <= res.epoch_losses[i - 1] + 1e-12);
    CHECK(f.layer.alpha() >= 0.0);
    CHECK(f.layer.alpha() <= 1.0);
}

TEST_CASE("global training: stop_loss halts early") {
    GlobalFixture f(206);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.stop_loss = 1e9;  // everything is below this
    GlobalTrainResult res =
        train_global(f.layer, f.wiring, f.partition, f.batch, f.targets, cfg, 7);
    CHECK(res.epochs_run == 1);
}

TEST_CASE("fresh global layer is an exact passthrough of sub-model predictions") {
    GlobalFixture f(207);
    GlobalForward fw = global_forward(f.layer, f.wiring, f.partition, f.batch[0]);
    for (int node : f.batch[0].real_nodes)
        CHECK(fw.predictions[node] == f.batch[0].base[node]);
}

TEST_CASE("frozen sub-model bytes survive any amount of global training") {
    GlobalFixture f(209);
    std::vector<std::string> before;
    for (const auto& m : f.models) before.push_back(m.checkpoint_json());
    TrainConfig cfg;
    cfg.epochs = 4;
    train_global(f.layer, f.wiring, f.partition, f.batch, f.targets, cfg, 7);
    train_global(f.layer, f.wiring, f.partition, f.batch, f.targets, cfg, 8);
    for (std::size_t i = 0; i < f.models.size(); ++i)
        CHECK(f.models[i].checkpoint_json() == before[i]);
}

TEST_CASE("global checkpoint round-trips bit-exactly") {
    GlobalFixture f(208);
    Rng rng(66);
    for (auto& p : f.layer.mutable_params()) p += rng.normal();
    std::string j = f.layer.checkpoint_json();
    GlobalLayer back = GlobalLayer::from_checkpoint_json(j);
    CHECK(back.params() == f.layer.params());
    CHECK(back.checkpoint_json() == j);
}

TEST_CASE("submodel checkpoint round-trips bit-exactly") {
    SubModel m = SubModel::init(3, {5, 2, 4, 6, 2}, 77);
    m.set_data_digest(std::string(64, 'a'));
    m.freeze();
    std::string j = m.checkpoint_json();
    SubModel back = SubModel::from_checkpoint_json(j);
    CHECK(back.params() == m.params());
    CHECK(back.subgraph_id() == 3);
    CHECK(back.frozen());
    CHECK(back.checkpoint_json() == j);
}
