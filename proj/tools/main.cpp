#include <iostream>

#include <CLI11.hpp>

#include "callosum/bench.hpp"
#include "callosum/csv.hpp"
#include "callosum/jsonio.hpp"
#include "callosum/metrics.hpp"
#include "callosum/synthetic.hpp"
#include "callosum/unlearn.hpp"

using namespace callosum;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidCertificate = 2;
constexpr int kExitConfigError = 3;

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& p) {
    cmd->add_option("--m", p.m, "number of subgraphs");
    cmd->add_option("--gamma", p.gamma, "partition-count balance term");
    cmd->add_option("--k-ring", p.k_ring, "boundary densification radius");
    cmd->add_option("--budget-c", p.budget_c, "meta-edge budget constant");
    cmd->add_option("--ganglion-count", p.ganglion_count, "ganglion vertices (0: one per subgraph)");
    cmd->add_option("--heads", p.heads, "attention heads");
    cmd->add_option("--layers", p.layers, "attention layers");
    cmd->add_option("--token-dim", p.token_dim, "token / ganglion width");
    cmd->add_option("--lambda1", p.lambda1, "L1 weight on the meta-adjacency");
    cmd->add_option("--lambda2", p.lambda2, "L2 weight on ganglion embeddings");
    cmd->add_option("--lambda-reg", p.lambda_reg, "sub-model weight decay");
    cmd->add_option("--alpha-init", p.alpha_init, "fusion scalar init");
    cmd->add_option("--base-width", p.base_width, "base hidden width");
    cmd->add_option("--window", p.task.window, "history / correlation window W");
    cmd->add_option("--horizon", p.task.horizon, "forecast steps P");
    cmd->add_option("--lr", p.train.learning_rate, "learning rate");
    cmd->add_option("--epochs", p.train.epochs, "sub-model epochs");
    cmd->add_option("--batch", p.train.batch, "batch size (windows)");
    cmd->add_option("--grad-clip", p.train.grad_clip, "gradient norm cap");
    cmd->add_option("--global-lr", p.global_learning_rate, "stage-2 learning rate (0: reuse --lr)");
    cmd->add_option("--global-epochs", p.global_epochs, "stage-2 epochs");
    cmd->add_option("--unlearn-global-epochs", p.unlearn_global_epochs,
                    "stage-2 epochs after an unlearn (cap 3)");
    cmd->add_option("--global-stride", p.global_stride, "stage-2 window stride");
    cmd->add_option("--threads", p.threads, "sub-model training threads (0: auto)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"divide-and-conquer spatio-temporal graph training with exact unlearning"};
    app.require_subcommand(1);

    // ingest
    std::string features_path, edges_path, out_path;
    std::string reexport_features, reexport_edges;
    auto* ingest = app.add_subcommand("ingest", "load long-format CSVs into a graph file");
    ingest->add_option("--features", features_path, "feature CSV (node_id,timestep,f_0[,...])")
        ->required();
    ingest->add_option("--edges", edges_path, "edge CSV (src_id,dst_id)")->required();
    ingest->add_option("--out", out_path, "output graph JSON")->required();
    ingest->add_option("--reexport-features", reexport_features, "write canonical feature CSV");
    ingest->add_option("--reexport-edges", reexport_edges, "write canonical edge CSV");

    // synth
    int synth_n = 40, synth_t = 2000;
    std::uint64_t synth_seed = 7;
    double synth_rate = 0.3;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate the synthetic diffusion benchmark");
    synth->add_option("--n", synth_n, "nodes");
    synth->add_option("--t", synth_t, "timesteps");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--rate", synth_rate, "diffusion rate in [0,1)");
    synth->add_option("--out", synth_out, "output graph JSON")->required();

    // train
    std::string train_graph, train_dir;
    std::uint64_t train_seed = 1;
    PipelineConfig train_cfg;
    auto* train = app.add_subcommand("train", "train the full pipeline on a graph");
    train->add_option("--graph", train_graph, "graph JSON from ingest/synth")->required();
    train->add_option("--out-dir", train_dir, "ensemble output directory")->required();
    train->add_option("--seed", train_seed, "pipeline seed");
    add_pipeline_flags(train, train_cfg);

    // unlearn
    std::string unlearn_dir, unlearn_request, unlearn_out;
    bool no_certify = false;
    double probe_factor = 1e6;
    auto* unlearn = app.add_subcommand("unlearn", "apply a deletion request to an ensemble");
    unlearn->add_option("--ensemble", unlearn_dir, "trained ensemble directory")->required();
    unlearn->add_option("--request", unlearn_request, "deletion request file")->required();
    unlearn->add_option("--out-dir", unlearn_out, "post-unlearn ensemble directory")->required();
    unlearn->add_flag("--no-certify", no_certify, "skip the certificate (ledger check only)");
    unlearn->add_option("--probe-factor", probe_factor, "perturbation factor for the probe");

    // certify
    std::string cert_pre, cert_post, cert_request, cert_out;
    double cert_probe = 1e6;
    auto* certify_cmd = app.add_subcommand("certify", "check a (pre, post) ensemble pair");
    certify_cmd->add_option("--pre", cert_pre, "pre-unlearn ensemble directory")->required();
    certify_cmd->add_option("--post", cert_post, "post-unlearn ensemble directory")->required();
    certify_cmd->add_option("--request", cert_request, "deletion request file")->required();
    certify_cmd->add_option("--out", cert_out, "certificate JSON output");
    certify_cmd->add_option("--probe-factor", cert_probe, "perturbation factor for the probe");

    // bench
    std::string bench_config, bench_dir, bench_method;
    double bench_rate = -1.0;
    auto* bench = app.add_subcommand("bench", "run an experiment config");
    bench->add_option("--config", bench_config, "experiment JSON config")->required();
    bench->add_option("--out-dir", bench_dir, "results bundle directory")->required();
    bench->add_option("--method", bench_method, "override: callosum|scratch|sisa");
    bench->add_option("--unlearn-rate", bench_rate, "override unlearn rate");

    // report
    std::string report_dir;
    auto* report = app.add_subcommand("report", "print the tables of a results bundle");
    report->add_option("--bundle", report_dir, "results bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (*ingest) {
            STGraph g = ingest_csv(features_path, edges_path);
            write_text_file(out_path, graph_to_json(g));
            if (!reexport_features.empty() && !reexport_edges.empty())
                export_csv(g, reexport_features, reexport_edges);
            std::cout << "ingested " << g.node_count << " nodes, " << g.timesteps
                      << " timesteps, " << g.feature_dim << " features\n";
        } else if (*synth) {
            SyntheticData data = generate_synthetic(synth_n, synth_t, synth_seed, synth_rate);
            write_text_file(synth_out, graph_to_json(data.graph));
            std::cout << "generated " << data.graph.node_count << " nodes over "
                      << data.graph.timesteps << " steps\n";
        } else if (*train) {
            PrunedGraph data = PrunedGraph::from(graph_from_json(read_text_file(train_graph)));
            TrainedEnsemble ens = train_pipeline(data, train_cfg, train_seed, nullptr);
            ens.save(train_dir);
            MetricsReport m = evaluate_ensemble(ens);
            std::cout << "test mae " << m.mae << ", rmse " << m.rmse << ", r2 "
                      << (m.r2_defined ? std::to_string(m.r2) : "undefined") << "\n";
        } else if (*unlearn) {
            TrainedEnsemble ens = TrainedEnsemble::load(unlearn_dir);
            DeletionRequest req = load_request_file(ens.data.graph, unlearn_request);
            UnlearnOptions opts;
            opts.run_certificate = !no_certify;
            opts.probe_factor = probe_factor;
            UnlearnOutcome outcome = execute_unlearn(ens, req, opts);
            outcome.ensemble.save(unlearn_out);
            write_text_file(unlearn_out + "/certificate.json", outcome.certificate.to_json());
            MetricsReport m = evaluate_ensemble(outcome.ensemble);
            std::cout << "post-unlearn test mae " << m.mae << "\n";
            std::cout << "certificate: " << (outcome.certificate.valid() ? "valid" : "INVALID");
            for (const auto& f : outcome.certificate.failed_checks) std::cout << " " << f;
            std::cout << "\n";
            if (!no_certify && !outcome.certificate.valid()) return kExitInvalidCertificate;
        } else if (*certify_cmd) {
            TrainedEnsemble pre = TrainedEnsemble::load(cert_pre);
            TrainedEnsemble post = TrainedEnsemble::load(cert_post);
            DeletionRequest req = load_request_file(pre.data.graph, cert_request);
            // a reloaded post ensemble has a fresh ledger; replay the purge
            // mark so the cleanliness window starts now
            post.purge_mark_seq = post.ledger->mark("purge:" + req.digest());
            UnlearnCertificate cert = certify(pre, post, req);
            std::string text = cert.to_json();
            if (!cert_out.empty()) write_text_file(cert_out, text);
            std::cout << text;
            if (!cert.valid()) return kExitInvalidCertificate;
        } else if (*bench) {
            ExperimentConfig cfg = ExperimentConfig::from_json_text(read_text_file(bench_config));
            if (!bench_method.empty()) cfg.method = bench_method;
            if (bench_rate >= 0.0) cfg.unlearn_rate = bench_rate;
            ExperimentResults results = run_experiment(cfg);
            write_results_bundle(results, bench_dir);
            std::cout << results_table_text(results);
            for (const auto& res : results.seeds)
                if (res.certificate.has_value() && !res.certificate->valid())
                    return kExitInvalidCertificate;
        } else if (*report) {
            std::cout << read_text_file(report_dir + "/tables.txt");
            std::cout << read_text_file(report_dir + "/timing_tables.txt");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitOk;
}
