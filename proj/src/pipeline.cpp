#include "callosum/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <nlohmann/json.hpp>

#include "callosum/jsonio.hpp"
#include "callosum/sha256.hpp"

namespace callosum {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

} // namespace

void PipelineConfig::validate() const {
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (k_ring < 0) throw std::invalid_argument("k_ring must be >= 0");
    if (budget_c <= 0.0) throw std::invalid_argument("budget_c must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda_reg < 0.0)
        throw std::invalid_argument("regularizer weights must be non-negative");
    if (!(alpha_init >= 0.0 && alpha_init <= 1.0))
        throw std::invalid_argument("alpha_init must lie in [0,1]");
    if (base_width < 1) throw std::invalid_argument("base_width must be >= 1");
    if (global_stride < 1) throw std::invalid_argument("global_stride must be >= 1");
    if (token_dim % heads != 0)
        throw std::invalid_argument("token_dim must be divisible by heads");
    train.validate();
}

int submodel_width(int member_count, int n_at_build, int m_at_build, int base_width) {
    long num = long(member_count) * m_at_build;
    int scale = int((num + n_at_build - 1) / n_at_build);
    return base_width * std::max(1, scale);
}

std::uint64_t derive_seed(std::uint64_t pipeline_seed, const std::string& role,
                          const std::string& request_digest) {
    Sha256 h;
    h.update_u64(pipeline_seed);
    h.update_string(role);
    h.update_string(request_digest);
    return h.finish_u64();
}

const SubModel& TrainedEnsemble::model_of(int subgraph_id) const {
    for (const auto& m : sub_models)
        if (m.subgraph_id() == subgraph_id) return m;
    throw std::out_of_range("no sub-model for subgraph " + std::to_string(subgraph_id));
}

Partition build_partition(const PrunedGraph& data, const CorrelationMap& corr,
                          const PipelineConfig& cfg) {
    std::vector<int> backbone = extract_backbone(data, corr);
    Partition p = segment(backbone, cfg.m, data, corr, cfg.gamma);
    repair_all(p, cfg.k_ring);
    return p;
}

void parallel_for_each_index(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = int(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (threads == 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int workers = std::min(threads, count);
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (;;) {
                    int i = next.fetch_add(1);
                    if (i >= count) break;
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

TrainedEnsemble train_pipeline(const PrunedGraph& data, const PipelineConfig& cfg,
                               std::uint64_t pipeline_seed, LedgerPtr ledger,
                               std::optional<Partition> partition,
                               const std::map<int, std::uint64_t>* seed_overrides,
                               const std::string& global_seed_salt) {
    cfg.validate();
    cfg.task.validate(data.graph.timesteps);

    TrainedEnsemble ens;
    ens.data = data;
    ens.cfg = cfg;
    ens.pipeline_seed = pipeline_seed;
    ens.ledger = ledger ? ledger : std::make_shared<ReadLedger>();

    double t0 = now_seconds();
    ens.corr = correlation_map(ens.data, cfg.task.window, ens.ledger, "correlation");
    ens.timings.add("correlation", now_seconds() - t0);

    t0 = now_seconds();
    if (partition.has_value()) {
        ens.partition = std::move(*partition);
    } else {
        ens.partition = build_partition(ens.data, ens.corr, cfg);
    }
    ens.timings.add("partition", now_seconds() - t0);

    // stage 1: independent sub-model jobs, deterministic regardless of thread
    // interleaving
    t0 = now_seconds();
    const int count = int(ens.partition.subgraphs.size());
    ens.sub_models.resize(count);
    std::vector<double> job_seconds(count, 0.0);
    parallel_for_each_index(count, cfg.threads, [&](int i) {
        double j0 = now_seconds();
        const Subgraph& sub = ens.partition.subgraphs[i];
        std::uint64_t seed;
        if (seed_overrides && seed_overrides->count(sub.id)) {
            seed = seed_overrides->at(sub.id);
        } else {
            seed = derive_seed(pipeline_seed, "submodel:" + std::to_string(sub.id));
        }
        int width = submodel_width(int(sub.nodes.size()), ens.partition.n_at_build,
                                   ens.partition.m_at_build, cfg.base_width);
        SubTrainResult res = train_submodel(sub, ens.data, cfg.task, cfg.train, {},
                                            cfg.lambda_reg, width, seed, ens.ledger);
        ens.sub_models[i] = std::move(res.model);
        job_seconds[i] = now_seconds() - j0;
    });
    ens.timings.add("stage1_submodels", now_seconds() - t0);
    double sub_max = 0.0, sub_sum = 0.0;
    for (double s : job_seconds) {
        sub_max = std::max(sub_max, s);
        sub_sum += s;
    }
    ens.timings.add("stage1_sub_max", sub_max);
    ens.timings.add("stage1_sub_sum", sub_sum);

    // stage 2: meta-graph and the global layer
    t0 = now_seconds();
    int gang = cfg.ganglion_count > 0 ? cfg.ganglion_count : ens.partition.m;
    ens.meta = build_meta_from_partition(ens.partition, ens.corr, gang, cfg.budget_c,
                                         cfg.pagerank_damping, cfg.pagerank_tol);
    ens.timings.add("metagraph", now_seconds() - t0);

    t0 = now_seconds();
    GlobalDims gdims;
    gdims.token_dim = cfg.token_dim;
    gdims.heads = cfg.heads;
    gdims.layers = cfg.layers;
    gdims.horizon = cfg.task.horizon;
    for (const auto& s : ens.partition.subgraphs)
        gdims.sub_widths[s.id] = ens.model_of(s.id).dims().width;
    GlobalHyper hyper{cfg.lambda1, cfg.lambda2, cfg.alpha_init};
    std::uint64_t gseed = derive_seed(pipeline_seed, "global", global_seed_salt);
    GlobalLayer layer = GlobalLayer::init(ens.meta, gdims, hyper, gseed);
    GlobalWiring wiring = GlobalWiring::build(ens.meta);

    TemporalSplit split = temporal_split(data.graph.timesteps);
    std::vector<int> all_ends = window_ends(cfg.task, 0, split.train_end);
    std::vector<int> ends;
    for (std::size_t i = 0; i < all_ends.size(); i += cfg.global_stride)
        ends.push_back(all_ends[i]);
    if (ends.empty()) throw std::invalid_argument("train_pipeline: no stage-2 windows");

    std::vector<GlobalInputs> windows;
    std::vector<Matrix> targets;
    std::vector<int> alive = ens.data.alive_nodes();
    DataView target_view(ens.data, ens.ledger, "global:train");
    for (int t_end : ends) {
        windows.push_back(assemble_global_inputs(ens.partition, ens.sub_models, ens.data,
                                                 cfg.task, t_end, ens.ledger, "global:train"));
        Matrix y(alive.size(), cfg.task.horizon);
        for (std::size_t vi = 0; vi < alive.size(); ++vi)
            for (int k = 0; k < cfg.task.horizon; ++k)
                y(vi, k) = target_view.at(t_end + 1 + k, alive[vi], 0);
        targets.push_back(std::move(y));
    }

    TrainConfig gcfg = cfg.train;
    if (cfg.global_learning_rate > 0.0) gcfg.learning_rate = cfg.global_learning_rate;
    gcfg.epochs = cfg.global_epochs;
    gcfg.stop_loss = cfg.global_stop_loss;
    train_global(layer, wiring, ens.partition, windows, targets, gcfg,
                 derive_seed(gseed, "order"));
    ens.global_layer = std::move(layer);
    ens.timings.add("stage2_global", now_seconds() - t0);
    return ens;
}

GlobalInputs assemble_global_inputs(const Partition& partition,
                                    const std::vector<SubModel>& models,
                                    const PrunedGraph& data, const ForecastTask& task,
                                    int t_end, LedgerPtr ledger, const std::string& stage) {
    GlobalInputs in;
    in.real_nodes = data.alive_nodes();
    in.base.assign(std::size_t(data.graph.node_count) * task.horizon, 0.0);

    DataView view(data, ledger, stage);
    std::set<int> none;
    for (const auto& sub : partition.subgraphs) {
        const SubModel* model = nullptr;
        for (const auto& m : models)
            if (m.subgraph_id() == sub.id) model = &m;
        if (!model) throw std::logic_error("missing sub-model for subgraph");

        auto xs = window_inputs(sub, view, task, t_end, none);
        Matrix ahat = normalized_adjacency(sub);
        SubForward fwd = submodel_forward(*model, ahat, xs);

        Matrix emb(sub.nodes.size(), model->dims().width);
        for (std::size_t r = 0; r < sub.nodes.size(); ++r)
            for (int c = 0; c < model->dims().width; ++c) emb(r, c) = fwd.embeddings(r, c);
        in.embeddings[sub.id] = std::move(emb);
        in.members[sub.id] = sub.nodes;
        for (std::size_t r = 0; r < sub.nodes.size(); ++r)
            for (int k = 0; k < task.horizon; ++k)
                in.base[std::size_t(sub.nodes[r]) * task.horizon + k] = fwd.preds(int(r), k);
    }
    return in;
}

Matrix predict_ensemble(const TrainedEnsemble& ens, const std::vector<int>& window_ends_list,
                        const std::string& stage) {
    if (!ens.global_layer.has_value())
        throw std::logic_error("predict_ensemble: ensemble lacks a trained global layer");
    const int P = ens.cfg.task.horizon;
    std::vector<int> alive = ens.data.alive_nodes();
    GlobalWiring wiring = GlobalWiring::build(ens.meta);

    Matrix out(window_ends_list.size(), alive.size() * P);
    for (std::size_t w = 0; w < window_ends_list.size(); ++w) {
        GlobalInputs in = assemble_global_inputs(ens.partition, ens.sub_models, ens.data,
                                                 ens.cfg.task, window_ends_list[w], ens.ledger,
                                                 stage);
        GlobalForward fw = global_forward(*ens.global_layer, wiring, ens.partition, in);
        for (std::size_t vi = 0; vi < alive.size(); ++vi)
            for (int k = 0; k < P; ++k)
                out(w, vi * P + k) = fw.predictions[std::size_t(alive[vi]) * P + k];
    }
    return out;
}

Matrix targets_for_windows(const PrunedGraph& data, const ForecastTask& task,
                           const std::vector<int>& window_ends_list,
                           const std::vector<int>& nodes, LedgerPtr ledger,
                           const std::string& stage) {
    DataView view(data, ledger, stage);
    Matrix out(window_ends_list.size(), nodes.size() * task.horizon);
    for (std::size_t w = 0; w < window_ends_list.size(); ++w)
        for (std::size_t vi = 0; vi < nodes.size(); ++vi)
            for (int k = 0; k < task.horizon; ++k)
                out(w, vi * task.horizon + k) =
                    view.at(window_ends_list[w] + 1 + k, nodes[vi], 0);
    return out;
}

MetricsReport evaluate_ensemble(const TrainedEnsemble& ens) {
    TemporalSplit split = temporal_split(ens.data.graph.timesteps);
    std::vector<int> ends =
        window_ends(ens.cfg.task, split.val_end, ens.data.graph.timesteps);
    Matrix preds = predict_ensemble(ens, ends);
    Matrix targets = targets_for_windows(ens.data, ens.cfg.task, ends, ens.data.alive_nodes(),
                                         ens.ledger);
    return compute_metrics(preds, targets);
}

void TrainedEnsemble::save(const std::string& dir) const {
    fs::create_directories(dir);
    write_file(dir + "/partition.json", partition_to_json(partition));
    write_file(dir + "/meta.json", metagraph_to_json(meta));
    for (const auto& m : sub_models)
        write_file(dir + "/submodel_" + std::to_string(m.subgraph_id()) + ".json",
                   m.checkpoint_json());
    if (global_layer.has_value()) write_file(dir + "/global.json", global_layer->checkpoint_json());

    nlohmann::json manifest;
    manifest["pipeline_seed"] = pipeline_seed;
    manifest["subgraphs"] = nlohmann::json::array();
    for (const auto& s : partition.subgraphs) manifest["subgraphs"].push_back(s.id);
    nlohmann::json jc;
    jc["m"] = cfg.m;
    jc["gamma"] = cfg.gamma;
    jc["k_ring"] = cfg.k_ring;
    jc["budget_c"] = cfg.budget_c;
    jc["ganglion_count"] = cfg.ganglion_count;
    jc["heads"] = cfg.heads;
    jc["layers"] = cfg.layers;
    jc["token_dim"] = cfg.token_dim;
    jc["lambda1"] = cfg.lambda1;
    jc["lambda2"] = cfg.lambda2;
    jc["lambda_reg"] = cfg.lambda_reg;
    jc["alpha_init"] = cfg.alpha_init;
    jc["base_width"] = cfg.base_width;
    jc["horizon"] = cfg.task.horizon;
    jc["window"] = cfg.task.window;
    jc["learning_rate"] = cfg.train.learning_rate;
    jc["epochs"] = cfg.train.epochs;
    jc["batch"] = cfg.train.batch;
    jc["grad_clip"] = cfg.train.grad_clip;
    jc["stop_loss"] = cfg.train.stop_loss;
    jc["global_learning_rate"] = cfg.global_learning_rate;
    jc["global_epochs"] = cfg.global_epochs;
    jc["unlearn_global_epochs"] = cfg.unlearn_global_epochs;
    jc["global_stop_loss"] = cfg.global_stop_loss;
    jc["global_stride"] = cfg.global_stride;
    jc["pagerank_damping"] = cfg.pagerank_damping;
    jc["pagerank_tol"] = cfg.pagerank_tol;
    jc["threads"] = cfg.threads;
    manifest["config"] = jc;
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    write_file(dir + "/data.json", pruned_to_json(data));

    nlohmann::json jt;
    for (const auto& [stage, s] : timings.seconds) jt[stage] = s;
    write_file(dir + "/timings.json", jt.dump(2) + "\n");
}

PipelineConfig config_from_json(const nlohmann::json& jc) {
    PipelineConfig cfg;
    cfg.m = jc.at("m").get<int>();
    cfg.gamma = jc.at("gamma").get<double>();
    cfg.k_ring = jc.at("k_ring").get<int>();
    cfg.budget_c = jc.at("budget_c").get<double>();
    cfg.ganglion_count = jc.at("ganglion_count").get<int>();
    cfg.heads = jc.at("heads").get<int>();
    cfg.layers = jc.at("layers").get<int>();
    cfg.token_dim = jc.at("token_dim").get<int>();
    cfg.lambda1 = jc.at("lambda1").get<double>();
    cfg.lambda2 = jc.at("lambda2").get<double>();
    cfg.lambda_reg = jc.at("lambda_reg").get<double>();
    cfg.alpha_init = jc.at("alpha_init").get<double>();
    cfg.base_width = jc.at("base_width").get<int>();
    cfg.task.horizon = jc.at("horizon").get<int>();
    cfg.task.window = jc.at("window").get<int>();
    cfg.train.learning_rate = jc.at("learning_rate").get<double>();
    cfg.train.epochs = jc.at("epochs").get<int>();
    cfg.train.batch = jc.at("batch").get<int>();
    cfg.train.grad_clip = jc.at("grad_clip").get<double>();
    cfg.train.stop_loss = jc.at("stop_loss").get<double>();
    cfg.global_learning_rate = jc.at("global_learning_rate").get<double>();
    cfg.global_epochs = jc.at("global_epochs").get<int>();
    cfg.unlearn_global_epochs = jc.at("unlearn_global_epochs").get<int>();
    cfg.global_stop_loss = jc.at("global_stop_loss").get<double>();
    cfg.global_stride = jc.at("global_stride").get<int>();
    cfg.pagerank_damping = jc.at("pagerank_damping").get<double>();
    cfg.pagerank_tol = jc.at("pagerank_tol").get<double>();
    cfg.threads = jc.at("threads").get<int>();
    return cfg;
}

TrainedEnsemble TrainedEnsemble::load(const std::string& dir) {
    TrainedEnsemble ens;
    nlohmann::json manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
    ens.cfg = config_from_json(manifest.at("config"));
    ens.pipeline_seed = manifest.at("pipeline_seed").get<std::uint64_t>();
    ens.data = pruned_from_json(read_file(dir + "/data.json"));
    ens.partition = partition_from_json(read_file(dir + "/partition.json"));
    ens.meta = metagraph_from_json(read_file(dir + "/meta.json"));
    for (int id : manifest.at("subgraphs").get<std::vector<int>>())
        ens.sub_models.push_back(
            SubModel::from_checkpoint_json(read_file(dir + "/submodel_" + std::to_string(id) + ".json")));
    if (fs::exists(dir + "/global.json"))
        ens.global_layer = GlobalLayer::from_checkpoint_json(read_file(dir + "/global.json"));
    ens.ledger = std::make_shared<ReadLedger>();
    ens.corr = correlation_map(ens.data, ens.cfg.task.window, ens.ledger, "correlation:reload");
    return ens;
}

} // namespace callosum
