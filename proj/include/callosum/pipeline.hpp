#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "callosum/global_layer.hpp"
#include "callosum/metagraph.hpp"
#include "callosum/metrics.hpp"
#include "callosum/partition.hpp"
#include "callosum/stgraph.hpp"
#include "callosum/submodel.hpp"

namespace callosum {

struct PipelineConfig {
    int m = 4;
    double gamma = 1.0;
    int k_ring = 2;
    double budget_c = 8.0;
    int ganglion_count = 0;  // 0: one per subgraph
    int heads = 2;
    int layers = 2;
    int token_dim = 16;  // D_g
    double lambda1 = 0.01;
    double lambda2 = 0.001;
    double lambda_reg = 1e-4;
    double alpha_init = 0.5;
    int base_width = 8;
    ForecastTask task;
    TrainConfig train;                 // sub-model stage
    double global_learning_rate = 0.0;  // 0: reuse the sub-model rate
    int global_epochs = 4;             // stage-2 epochs at initial training
    int unlearn_global_epochs = 3;     // Alg. 1 cap; warn when raised
    double global_stop_loss = 0.01;
    int global_stride = 4;             // stage-2 window subsampling
    double pagerank_damping = 0.85;
    double pagerank_tol = 1e-12;
    int threads = 0;                   // 0: hardware concurrency

    void validate() const;
};

// d_i = base_width * ceil(|V_i| / (N/M)), with N and M pinned at first build.
int submodel_width(int member_count, int n_at_build, int m_at_build, int base_width);

std::uint64_t derive_seed(std::uint64_t pipeline_seed, const std::string& role,
                          const std::string& request_digest = "");

struct StageTimings {
    std::map<std::string, double> seconds;
    void add(const std::string& stage, double s) { seconds[stage] += s; }
};

// Fully trained state: partition, frozen sub-models, meta-graph, global layer
// plus the provenance ledger shared across stages.
struct TrainedEnsemble {
    PrunedGraph data;
    CorrelationMap corr;
    Partition partition;
    std::vector<SubModel> sub_models;  // aligned with partition.subgraphs
    MetaGraph meta;
    std::optional<GlobalLayer> global_layer;
    PipelineConfig cfg;
    std::uint64_t pipeline_seed = 0;
    LedgerPtr ledger;
    StageTimings timings;
    std::uint64_t purge_mark_seq = 0;  // ledger position of the last purge

    const SubModel& model_of(int subgraph_id) const;

    void save(const std::string& dir) const;
    static TrainedEnsemble load(const std::string& dir);
};

// ESC stage: correlation map, greedy backbone, segmentation, repair.
Partition build_partition(const PrunedGraph& data, const CorrelationMap& corr,
                          const PipelineConfig& cfg);

// Trains every subgraph's model (seeds derived per subgraph id), then the
// meta-graph and the global layer. `partition` lets callers pin structure;
// pass std::nullopt to derive it from the data.
TrainedEnsemble train_pipeline(const PrunedGraph& data, const PipelineConfig& cfg,
                               std::uint64_t pipeline_seed, LedgerPtr ledger,
                               std::optional<Partition> partition = std::nullopt,
                               const std::map<int, std::uint64_t>* seed_overrides = nullptr,
                               const std::string& global_seed_salt = "");

// Sub-model embeddings, summary inputs and base predictions for one window.
GlobalInputs assemble_global_inputs(const Partition& partition,
                                    const std::vector<SubModel>& models,
                                    const PrunedGraph& data, const ForecastTask& task,
                                    int t_end, LedgerPtr ledger, const std::string& stage);

// Predictions over the given windows for all alive real nodes
// (rows = windows, cols = node-major P blocks). Column order follows
// alive_nodes() of the ensemble's data.
Matrix predict_ensemble(const TrainedEnsemble& ens, const std::vector<int>& window_ends_list,
                        const std::string& stage = "evaluate");

Matrix targets_for_windows(const PrunedGraph& data, const ForecastTask& task,
                           const std::vector<int>& window_ends_list,
                           const std::vector<int>& nodes, LedgerPtr ledger,
                           const std::string& stage = "evaluate");

// Test-split evaluation of an ensemble.
MetricsReport evaluate_ensemble(const TrainedEnsemble& ens);

// Runs one job per subgraph over a small thread pool; results keep the input
// order so concurrency never changes bytes.
void parallel_for_each_index(int count, int threads, const std::function<void(int)>& fn);

} // namespace callosum
