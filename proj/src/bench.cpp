#include "callosum/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "callosum/csv.hpp"
#include "callosum/jsonio.hpp"
#include "callosum/rng.hpp"
#include "callosum/synthetic.hpp"

namespace callosum {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct BaselineModel {
    Subgraph sub;
    SubModel model;
};

Subgraph induced_subgraph(int id, std::vector<int> nodes, const PrunedGraph& data) {
    Subgraph s;
    s.id = id;
    s.nodes = std::move(nodes);
    std::sort(s.nodes.begin(), s.nodes.end());
    const int n = int(s.nodes.size());
    s.local_adjacency.assign(std::size_t(n) * n, 0);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a != b && data.edge(s.nodes[a], s.nodes[b])) {
                s.set_local_edge(a, b, true);
                s.intra_edges.push_back({s.nodes[a], s.nodes[b]});
            }
        }
    }
    return s;
}

BaselineModel train_full_graph(const PrunedGraph& data, const PipelineConfig& cfg,
                               std::uint64_t seed, int n_at_build, LedgerPtr ledger) {
    BaselineModel out;
    out.sub = induced_subgraph(0, data.alive_nodes(), data);
    int width = submodel_width(int(out.sub.nodes.size()), n_at_build, cfg.m, cfg.base_width);
    SubTrainResult res = train_submodel(out.sub, data, cfg.task, cfg.train, {}, cfg.lambda_reg,
                                        width, seed, ledger);
    out.model = std::move(res.model);
    return out;
}

// columns follow data.alive_nodes(); every node must belong to exactly one
// model's subgraph
Matrix predict_baseline(const std::vector<BaselineModel>& models, const PrunedGraph& data,
                        const ForecastTask& task, const std::vector<int>& ends,
                        LedgerPtr ledger, const std::string& stage) {
    std::vector<int> alive = data.alive_nodes();
    std::vector<int> column_of(data.graph.node_count, -1);
    for (std::size_t i = 0; i < alive.size(); ++i) column_of[alive[i]] = int(i);

    Matrix out(ends.size(), alive.size() * task.horizon, 0.0);
    DataView view(data, ledger, stage);
    std::set<int> none;
    for (const auto& bm : models) {
        Matrix ahat = normalized_adjacency(bm.sub);
        for (std::size_t w = 0; w < ends.size(); ++w) {
            auto xs = window_inputs(bm.sub, view, task, ends[w], none);
            SubForward fwd = submodel_forward(bm.model, ahat, xs);
            for (std::size_t r = 0; r < bm.sub.nodes.size(); ++r) {
                int col = column_of[bm.sub.nodes[r]];
                if (col < 0) continue;
                for (int k = 0; k < task.horizon; ++k)
                    out(w, std::size_t(col) * task.horizon + k) = fwd.preds(int(r), k);
            }
        }
    }
    return out;
}

std::vector<int> test_window_ends(const PrunedGraph& data, const ForecastTask& task) {
    TemporalSplit split = temporal_split(data.graph.timesteps);
    return window_ends(task, split.val_end, data.graph.timesteps);
}

MetricsReport evaluate_predictions(const Matrix& preds, const PrunedGraph& data,
                                   const ForecastTask& task, LedgerPtr ledger) {
    Matrix targets = targets_for_windows(data, task, test_window_ends(data, task),
                                         data.alive_nodes(), ledger);
    return compute_metrics(preds, targets);
}

std::vector<std::vector<int>> sisa_shards(const PrunedGraph& data, int m, std::uint64_t seed) {
    std::vector<int> nodes = data.alive_nodes();
    Rng rng(seed);
    rng.shuffle(nodes);
    std::vector<std::vector<int>> shards(m);
    const int n = int(nodes.size());
    for (int i = 0; i < m; ++i) {
        long lo = (long(i) * n) / m;
        long hi = (long(i + 1) * n) / m;
        for (long k = lo; k < hi; ++k) shards[i].push_back(nodes[k]);
    }
    return shards;
}

nlohmann::json metrics_json(const MetricsReport& m) {
    nlohmann::json j;
    j["mae"] = m.mae;
    j["mse"] = m.mse;
    j["rmse"] = m.rmse;
    j["r2"] = m.r2;
    j["r2_defined"] = m.r2_defined;
    j["trend_f1"] = m.trend_f1;
    return j;
}

nlohmann::json bounds_json(const BoundReport& b) {
    nlohmann::json j;
    j["eq9_rhs"] = b.eq9_rhs;
    j["eq9_empirical"] = b.eq9_empirical;
    j["eq9_holds"] = b.eq9_holds;
    j["eq10_rhs"] = b.eq10_rhs;
    j["eq10_empirical"] = b.eq10_empirical;
    j["eq10_holds"] = b.eq10_holds;
    j["info_intra"] = b.info_intra;
    j["total_corr"] = b.total_corr;
    j["epsilon_is_assumed_one"] = b.epsilon_is_assumed_one;
    j["regime_note"] = b.regime_note;
    return j;
}

} // namespace

void ExperimentConfig::validate() const {
    if (method != "callosum" && method != "scratch" && method != "sisa")
        throw std::invalid_argument("unknown method: " + method);
    if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
    if (unlearn_rate < 0.0 || unlearn_rate >= 1.0)
        throw std::invalid_argument("unlearn_rate must lie in [0,1)");
    pipeline.validate();
}

DeletionRequest sample_deletion(const PrunedGraph& data, double rate, std::uint64_t seed) {
    std::vector<int> alive = data.alive_nodes();
    int count = int(rate * double(alive.size()));
    if (count < 1)
        throw std::invalid_argument("unlearn rate selects no nodes on this graph");
    Rng rng(seed);
    rng.shuffle(alive);
    DeletionRequest req;
    for (int i = 0; i < count; ++i) req.nodes.insert(alive[i]);
    return req;
}

BoundReport bound_report(const TrainedEnsemble& ens, const Matrix& reference_preds,
                         const Matrix& ensemble_preds, const Matrix& pre_unlearn_preds,
                         const Matrix& post_unlearn_preds, int n_prime_before,
                         std::size_t request_size) {
    const PipelineConfig& cfg = ens.cfg;
    BoundReport b;
    double capacity = double(cfg.heads) * cfg.layers * cfg.token_dim;
    b.eq9_rhs = ens.partition.delta_cut * std::sqrt(double(ens.partition.m)) / capacity;

    if (!reference_preds.same_shape(ensemble_preds))
        throw std::invalid_argument("bound_report: reference and ensemble shapes differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < reference_preds.data.size(); ++i) {
        double d = reference_preds.data[i] - ensemble_preds.data[i];
        sq += d * d;
    }
    b.eq9_empirical = std::sqrt(sq);
    b.eq9_holds = b.eq9_empirical <= b.eq9_rhs;

    if (request_size > 0) {
        double denom = double(n_prime_before - int(request_size)) * capacity;
        b.eq10_rhs = ens.partition.delta_cut * double(request_size) / denom;
        if (!pre_unlearn_preds.same_shape(post_unlearn_preds))
            throw std::invalid_argument("bound_report: unlearn prediction shapes differ");
        double shift = 0.0;
        for (std::size_t i = 0; i < pre_unlearn_preds.data.size(); ++i) {
            double d = pre_unlearn_preds.data[i] - post_unlearn_preds.data[i];
            shift += d * d;
        }
        b.eq10_empirical =
            pre_unlearn_preds.data.empty() ? 0.0 : shift / double(pre_unlearn_preds.data.size());
        b.eq10_holds = b.eq10_empirical <= b.eq10_rhs;
    } else {
        b.eq10_rhs = 0.0;
        b.eq10_empirical = 0.0;
        b.eq10_holds = true;
    }

    auto [info, total] = info_retention(ens.partition, ens.corr);
    b.info_intra = info;
    b.total_corr = total;
    std::ostringstream note;
    note << "eq9 regime " << (ens.partition.m <= 16 && n_prime_before <= 10000 ? "holds" : "violated")
         << " (M=" << ens.partition.m << ", N'=" << n_prime_before << ")";
    b.regime_note = note.str();
    return b;
}

ExperimentResults run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    PrunedGraph base;
    if (!cfg.feature_csv.empty()) {
        base = PrunedGraph::from(ingest_csv(cfg.feature_csv, cfg.edge_csv));
    } else {
        base = PrunedGraph::from(
            generate_synthetic(cfg.synth_n, cfg.synth_t, cfg.synth_seed, cfg.synth_rate).graph);
    }
    const int n0 = base.alive_count();
    const ForecastTask task = cfg.pipeline.task;

    ExperimentResults results;
    results.config = cfg;

    for (std::uint64_t seed : cfg.seeds) {
        SeedResult res;
        res.seed = seed;
        LedgerPtr ledger = std::make_shared<ReadLedger>();

        DeletionRequest request;
        PrunedGraph purged = base;
        if (cfg.unlearn_rate > 0.0) {
            request = sample_deletion(base, cfg.unlearn_rate, derive_seed(seed, "deletion"));
            purged = purge(base, request);
            for (int n : request.nodes) res.deleted_node_ids.push_back(base.graph.node_ids[n]);
            std::sort(res.deleted_node_ids.begin(), res.deleted_node_ids.end());
        }

        // gold columns: scratch on the full data, and on the purged data when
        // a deletion phase runs
        double t0 = now_seconds();
        BaselineModel gold_full =
            train_full_graph(base, cfg.pipeline, derive_seed(seed, "scratch"), n0, ledger);
        res.wall_clock["gold_full_train"] = now_seconds() - t0;
        Matrix gold_full_preds = predict_baseline({gold_full}, base, task,
                                                  test_window_ends(base, task), ledger, "evaluate");
        res.metrics["gold_full"] = evaluate_predictions(gold_full_preds, base, task, ledger);

        Matrix gold_purged_preds;
        if (cfg.unlearn_rate > 0.0) {
            t0 = now_seconds();
            BaselineModel gold_purged = train_full_graph(
                purged, cfg.pipeline, derive_seed(seed, "scratch", request.digest()), n0, ledger);
            res.wall_clock["gold_purged_retrain"] = now_seconds() - t0;
            gold_purged_preds = predict_baseline({gold_purged}, purged, task,
                                                 test_window_ends(purged, task), ledger,
                                                 "evaluate");
            res.metrics["gold_purged"] =
                evaluate_predictions(gold_purged_preds, purged, task, ledger);
        }

        if (cfg.method == "scratch") {
            res.metrics["train"] = res.metrics["gold_full"];
            if (cfg.unlearn_rate > 0.0) {
                res.metrics["unlearn"] = res.metrics["gold_purged"];
                res.wall_clock["unlearn"] = res.wall_clock["gold_purged_retrain"];
            }
        } else if (cfg.method == "callosum") {
            t0 = now_seconds();
            TrainedEnsemble ens = train_pipeline(base, cfg.pipeline, seed, ledger);
            res.wall_clock["train"] = now_seconds() - t0;
            for (const auto& [stage, s] : ens.timings.seconds) res.wall_clock[stage] = s;
            res.metrics["train"] = evaluate_ensemble(ens);
            res.metrics["train"].wall_clock_seconds = ens.timings.seconds;

            if (cfg.unlearn_rate > 0.0) {
                Matrix pre_preds_all = predict_ensemble(ens, test_window_ends(base, task));

                UnlearnOptions opts;
                opts.run_certificate = cfg.certify_unlearn;
                t0 = now_seconds();
                UnlearnOutcome outcome = execute_unlearn(ens, request, opts);
                res.wall_clock["unlearn_total"] =
                    now_seconds() - t0;  // includes certification when enabled
                double unlearn_only = 0.0;
                for (const auto& [stage, s] : outcome.ensemble.timings.seconds) {
                    res.wall_clock[stage] = s;
                    unlearn_only += s;
                }
                res.wall_clock["unlearn"] = unlearn_only;
                res.metrics["unlearn"] = evaluate_ensemble(outcome.ensemble);
                res.metrics["unlearn"].wall_clock_seconds = outcome.ensemble.timings.seconds;
                res.ledger_clean = outcome.certificate.ledger_clean;
                if (cfg.certify_unlearn) res.certificate = outcome.certificate;

                // restrict pre-unlearn predictions to retained node columns
                std::vector<int> alive_before = base.alive_nodes();
                std::vector<int> alive_after = purged.alive_nodes();
                Matrix pre_preds(pre_preds_all.rows, alive_after.size() * task.horizon);
                std::size_t col = 0;
                for (std::size_t i = 0; i < alive_before.size(); ++i) {
                    if (!purged.alive[alive_before[i]]) continue;
                    for (std::size_t w = 0; w < pre_preds_all.rows; ++w)
                        for (int k = 0; k < task.horizon; ++k)
                            pre_preds(w, col * task.horizon + k) =
                                pre_preds_all(w, i * task.horizon + k);
                    ++col;
                }
                Matrix post_preds =
                    predict_ensemble(outcome.ensemble, test_window_ends(purged, task));
                Matrix ens_preds = predict_ensemble(ens, test_window_ends(base, task));
                res.bounds = bound_report(outcome.ensemble, gold_full_preds, ens_preds,
                                          pre_preds, post_preds, n0, request.nodes.size());
            } else {
                Matrix ens_preds = predict_ensemble(ens, test_window_ends(base, task));
                res.bounds = bound_report(ens, gold_full_preds, ens_preds, Matrix(), Matrix(),
                                          n0, 0);
            }
        } else {  // sisa
            auto shards = sisa_shards(base, cfg.pipeline.m, derive_seed(seed, "sisa-shards"));
            std::vector<BaselineModel> models(shards.size());
            t0 = now_seconds();
            for (std::size_t i = 0; i < shards.size(); ++i) {
                models[i].sub = induced_subgraph(int(i), shards[i], base);
                int width = submodel_width(int(models[i].sub.nodes.size()), n0, cfg.pipeline.m,
                                           cfg.pipeline.base_width);
                models[i].model = train_submodel(models[i].sub, base, task, cfg.pipeline.train,
                                                 {}, cfg.pipeline.lambda_reg, width,
                                                 derive_seed(seed, "sisa:" + std::to_string(i)),
                                                 ledger)
                                      .model;
            }
            res.wall_clock["train"] = now_seconds() - t0;
            Matrix preds = predict_baseline(models, base, task, test_window_ends(base, task),
                                            ledger, "evaluate");
            res.metrics["train"] = evaluate_predictions(preds, base, task, ledger);

            if (cfg.unlearn_rate > 0.0) {
                std::uint64_t purge_mark = ledger->mark("purge:" + request.digest());
                t0 = now_seconds();
                std::vector<BaselineModel> post(models.size());
                for (std::size_t i = 0; i < models.size(); ++i) {
                    bool affected = false;
                    std::vector<int> kept;
                    for (int v : models[i].sub.nodes) {
                        if (request.nodes.count(v)) affected = true;
                        else kept.push_back(v);
                    }
                    for (const auto& [u, v] : request.edges)
                        if (models[i].sub.local_index(u) >= 0 && models[i].sub.local_index(v) >= 0)
                            affected = true;
                    if (!affected) {
                        post[i] = models[i];
                        continue;
                    }
                    post[i].sub = induced_subgraph(int(i), kept, purged);
                    int width = submodel_width(int(kept.size()), n0, cfg.pipeline.m,
                                               cfg.pipeline.base_width);
                    post[i].model =
                        train_submodel(post[i].sub, purged, task, cfg.pipeline.train, {},
                                       cfg.pipeline.lambda_reg, width,
                                       derive_seed(seed, "sisa:" + std::to_string(i),
                                                   request.digest()),
                                       ledger)
                            .model;
                }
                res.wall_clock["unlearn"] = now_seconds() - t0;
                Matrix post_preds = predict_baseline(post, purged, task,
                                                     test_window_ends(purged, task), ledger,
                                                     "evaluate");
                res.metrics["unlearn"] = evaluate_predictions(post_preds, purged, task, ledger);
                std::set<int> deleted(request.nodes.begin(), request.nodes.end());
                res.ledger_clean = ledger->clean_after(purge_mark, deleted);
            }
        }
        results.seeds.push_back(std::move(res));
    }
    return results;
}

std::string ExperimentConfig::to_json_text() const {
    nlohmann::json j;
    j["feature_csv"] = feature_csv;
    j["edge_csv"] = edge_csv;
    j["synth_n"] = synth_n;
    j["synth_t"] = synth_t;
    j["synth_seed"] = synth_seed;
    j["synth_rate"] = synth_rate;
    j["method"] = method;
    j["unlearn_rate"] = unlearn_rate;
    j["seeds"] = seeds;
    j["certify_unlearn"] = certify_unlearn;
    nlohmann::json p;
    p["m"] = pipeline.m;
    p["gamma"] = pipeline.gamma;
    p["k_ring"] = pipeline.k_ring;
    p["budget_c"] = pipeline.budget_c;
    p["ganglion_count"] = pipeline.ganglion_count;
    p["heads"] = pipeline.heads;
    p["layers"] = pipeline.layers;
    p["token_dim"] = pipeline.token_dim;
    p["lambda1"] = pipeline.lambda1;
    p["lambda2"] = pipeline.lambda2;
    p["lambda_reg"] = pipeline.lambda_reg;
    p["alpha_init"] = pipeline.alpha_init;
    p["base_width"] = pipeline.base_width;
    p["horizon"] = pipeline.task.horizon;
    p["window"] = pipeline.task.window;
    p["learning_rate"] = pipeline.train.learning_rate;
    p["epochs"] = pipeline.train.epochs;
    p["batch"] = pipeline.train.batch;
    p["grad_clip"] = pipeline.train.grad_clip;
    p["stop_loss"] = pipeline.train.stop_loss;
    p["global_learning_rate"] = pipeline.global_learning_rate;
    p["global_epochs"] = pipeline.global_epochs;
    p["unlearn_global_epochs"] = pipeline.unlearn_global_epochs;
    p["global_stop_loss"] = pipeline.global_stop_loss;
    p["global_stride"] = pipeline.global_stride;
    p["pagerank_damping"] = pipeline.pagerank_damping;
    p["pagerank_tol"] = pipeline.pagerank_tol;
    p["threads"] = pipeline.threads;
    j["pipeline"] = p;
    return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig c;
    auto get = [&](const char* key, auto& slot) {
        using T = std::decay_t<decltype(slot)>;
        if (j.contains(key)) slot = j.at(key).get<T>();
    };
    get("feature_csv", c.feature_csv);
    get("edge_csv", c.edge_csv);
    get("synth_n", c.synth_n);
    get("synth_t", c.synth_t);
    get("synth_seed", c.synth_seed);
    get("synth_rate", c.synth_rate);
    get("method", c.method);
    get("unlearn_rate", c.unlearn_rate);
    get("seeds", c.seeds);
    get("certify_unlearn", c.certify_unlearn);
    if (j.contains("pipeline")) {
        const auto& p = j.at("pipeline");
        auto getp = [&](const char* key, auto& slot) {
            using T = std::decay_t<decltype(slot)>;
            if (p.contains(key)) slot = p.at(key).get<T>();
        };
        getp("m", c.pipeline.m);
        getp("gamma", c.pipeline.gamma);
        getp("k_ring", c.pipeline.k_ring);
        getp("budget_c", c.pipeline.budget_c);
        getp("ganglion_count", c.pipeline.ganglion_count);
        getp("heads", c.pipeline.heads);
        getp("layers", c.pipeline.layers);
        getp("token_dim", c.pipeline.token_dim);
        getp("lambda1", c.pipeline.lambda1);
        getp("lambda2", c.pipeline.lambda2);
        getp("lambda_reg", c.pipeline.lambda_reg);
        getp("alpha_init", c.pipeline.alpha_init);
        getp("base_width", c.pipeline.base_width);
        getp("horizon", c.pipeline.task.horizon);
        getp("window", c.pipeline.task.window);
        getp("learning_rate", c.pipeline.train.learning_rate);
        getp("epochs", c.pipeline.train.epochs);
        getp("batch", c.pipeline.train.batch);
        getp("grad_clip", c.pipeline.train.grad_clip);
        getp("stop_loss", c.pipeline.train.stop_loss);
        getp("global_learning_rate", c.pipeline.global_learning_rate);
        getp("global_epochs", c.pipeline.global_epochs);
        getp("unlearn_global_epochs", c.pipeline.unlearn_global_epochs);
        getp("global_stop_loss", c.pipeline.global_stop_loss);
        getp("global_stride", c.pipeline.global_stride);
        getp("pagerank_damping", c.pipeline.pagerank_damping);
        getp("pagerank_tol", c.pipeline.pagerank_tol);
        getp("threads", c.pipeline.threads);
    }
    return c;
}

namespace {

std::string fmt(double v, int width = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%*.6g", width, v);
    return buf;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    sd = 0.0;
    if (xs.size() > 1) {
        for (double x : xs) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / double(xs.size() - 1));
    }
}

} // namespace

std::string results_table_text(const ExperimentResults& results) {
    std::ostringstream out;
    out << "method " << results.config.method << ", unlearn_rate "
        << results.config.unlearn_rate << "\n";
    out << "seed         phase        mae          mse          rmse         r2           trend_f1\n";
    std::map<std::string, std::vector<double>> mae_by_phase;
    for (const auto& res : results.seeds) {
        for (const auto& [phase, m] : res.metrics) {
            out << fmt(double(res.seed), 6) << "  " << phase;
            for (std::size_t i = phase.size(); i < 11; ++i) out << ' ';
            out << fmt(m.mae) << " " << fmt(m.mse) << " " << fmt(m.rmse) << " "
                << (m.r2_defined ? fmt(m.r2) : std::string("   undefined")) << " "
                << fmt(m.trend_f1) << "\n";
            mae_by_phase[phase].push_back(m.mae);
        }
    }
    out << "\nper-phase MAE mean +/- sd over " << results.seeds.size() << " seeds\n";
    for (const auto& [phase, xs] : mae_by_phase) {
        double mean, sd;
        mean_std(xs, mean, sd);
        out << "  " << phase;
        for (std::size_t i = phase.size(); i < 12; ++i) out << ' ';
        out << fmt(mean) << " +/- " << fmt(sd, 10) << "\n";
    }
    for (const auto& res : results.seeds) {
        if (res.bounds.has_value()) {
            const auto& b = *res.bounds;
            out << "\nseed " << res.seed << " bound report (epsilon assumed 1): "
                << "eq9 rhs " << fmt(b.eq9_rhs, 10) << " empirical " << fmt(b.eq9_empirical, 10)
                << (b.eq9_holds ? " [<= rhs]" : " [exceeds rhs]") << "; eq10 rhs "
                << fmt(b.eq10_rhs, 10) << " empirical " << fmt(b.eq10_empirical, 10)
                << (b.eq10_holds ? " [<= rhs]" : " [exceeds rhs]") << "; retention "
                << fmt(b.info_intra, 10) << " of " << fmt(b.total_corr, 10) << "; "
                << b.regime_note << "\n";
        }
        if (res.certificate.has_value()) {
            out << "seed " << res.seed << " certificate: "
                << (res.certificate->valid() ? "valid" : "INVALID") << "\n";
        }
    }
    return out.str();
}

std::string timing_table_text(const ExperimentResults& results) {
    std::ostringstream out;
    out << "wall-clock seconds per seed (stage-1 reported as per-sub-model max and sum)\n";
    for (const auto& res : results.seeds) {
        out << "seed " << res.seed << "\n";
        for (const auto& [stage, s] : res.wall_clock)
            out << "  " << stage << ": " << fmt(s, 10) << "\n";
        auto unlearn = res.wall_clock.find("unlearn");
        auto scratch = res.wall_clock.find("gold_purged_retrain");
        if (unlearn != res.wall_clock.end() && scratch != res.wall_clock.end() &&
            scratch->second > 0.0)
            out << "  unlearn/scratch_retrain ratio: "
                << fmt(unlearn->second / scratch->second, 10) << "\n";
    }
    return out.str();
}

void write_results_bundle(const ExperimentResults& results, const std::string& dir) {
    fs::create_directories(dir);

    nlohmann::json j;
    j["config"] = nlohmann::json::parse(results.config.to_json_text());
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& res : results.seeds) {
        nlohmann::json sj;
        sj["seed"] = res.seed;
        nlohmann::json ms;
        for (const auto& [phase, m] : res.metrics) ms[phase] = metrics_json(m);
        sj["metrics"] = ms;
        if (res.bounds.has_value()) sj["bounds"] = bounds_json(*res.bounds);
        if (res.certificate.has_value())
            sj["certificate"] = nlohmann::json::parse(res.certificate->to_json(false));
        sj["deleted_node_ids"] = res.deleted_node_ids;
        sj["ledger_clean"] = res.ledger_clean;
        seeds.push_back(sj);
    }
    j["seeds"] = seeds;
    write_text_file(dir + "/results.json", j.dump(2) + "\n");

    nlohmann::json jt = nlohmann::json::array();
    for (const auto& res : results.seeds) {
        nlohmann::json sj;
        sj["seed"] = res.seed;
        for (const auto& [stage, s] : res.wall_clock) sj[stage] = s;
        if (res.certificate.has_value())
            for (const auto& [stage, s] : res.certificate->timings) sj["cert_" + stage] = s;
        jt.push_back(sj);
    }
    write_text_file(dir + "/timings.json", jt.dump(2) + "\n");

    write_text_file(dir + "/tables.txt", results_table_text(results));
    write_text_file(dir + "/timing_tables.txt", timing_table_text(results));

    std::ostringstream csv;
    csv << "seed,phase,metric,value\n";
    for (const auto& res : results.seeds) {
        for (const auto& [phase, m] : res.metrics) {
            char buf[64];
            auto row = [&](const char* name, double v) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                csv << res.seed << ',' << phase << ',' << name << ',' << buf << "\n";
            };
            row("mae", m.mae);
            row("mse", m.mse);
            row("rmse", m.rmse);
            if (m.r2_defined) row("r2", m.r2);
            row("trend_f1", m.trend_f1);
        }
    }
    write_text_file(dir + "/results.csv", csv.str());
}

} // namespace callosum
