#pragma once

#include <optional>
#include <string>
#include <vector>

#include "callosum/metrics.hpp"
#include "callosum/pipeline.hpp"
#include "callosum/unlearn.hpp"

namespace callosum {

struct ExperimentConfig {
    // dataset: CSV paths, or the synthetic benchmark when feature_csv is empty
    std::string feature_csv;
    std::string edge_csv;
    int synth_n = 40;
    int synth_t = 2000;
    std::uint64_t synth_seed = 7;
    double synth_rate = 0.3;

    std::string method = "callosum";  // callosum | scratch | sisa
    double unlearn_rate = 0.0;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    bool certify_unlearn = true;
    PipelineConfig pipeline;

    void validate() const;
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct BoundReport {
    double eq9_rhs = 0.0;        // delta_cut * sqrt(M) / (H * L * D_g), epsilon treated as 1
    double eq9_empirical = 0.0;  // || y_full - y_fused ||_2 on held-out windows
    double eq10_rhs = 0.0;       // delta_cut * |U| / ((N' - |U|) * H * L * D_g)
    double eq10_empirical = 0.0; // mean squared prediction shift on retained nodes
    double info_intra = 0.0;
    double total_corr = 0.0;
    bool eq9_holds = false;
    bool eq10_holds = false;
    bool epsilon_is_assumed_one = true;
    std::string regime_note;
};

struct SeedResult {
    std::uint64_t seed = 0;
    // phase -> metrics; phases: "train", "unlearn", "gold_full", "gold_purged"
    std::map<std::string, MetricsReport> metrics;
    std::optional<BoundReport> bounds;
    std::optional<UnlearnCertificate> certificate;
    std::map<std::string, double> wall_clock;
    std::vector<std::string> deleted_node_ids;
    bool ledger_clean = true;  // no post-purge read of deleted bytes (any method)
};

struct ExperimentResults {
    ExperimentConfig config;
    std::vector<SeedResult> seeds;
};

// Full protocol for one config: per seed, train the chosen method, optionally
// run its deletion path on a seed-derived random node sample, evaluate on the
// temporal test split, and attach gold (scratch) columns plus the theoretical
// bound report.
ExperimentResults run_experiment(const ExperimentConfig& cfg);

BoundReport bound_report(const TrainedEnsemble& ens, const Matrix& reference_preds,
                         const Matrix& ensemble_preds, const Matrix& pre_unlearn_preds,
                         const Matrix& post_unlearn_preds, int n_prime_before,
                         std::size_t request_size);

// Deterministic artifacts (results.json, tables, CSV) plus timings.json kept
// apart so bundles stay byte-comparable across runs.
void write_results_bundle(const ExperimentResults& results, const std::string& dir);

std::string results_table_text(const ExperimentResults& results);
std::string timing_table_text(const ExperimentResults& results);

// Uniform seed-derived sample of alive nodes at the configured rate.
DeletionRequest sample_deletion(const PrunedGraph& data, double rate, std::uint64_t seed);

} // namespace callosum
