#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "callosum/dense.hpp"
#include "callosum/partition.hpp"
#include "callosum/stgraph.hpp"

namespace callosum {

struct TrainConfig {
    double learning_rate = 0.02;
    int epochs = 24;
    int batch = 32;
    double grad_clip = 1.0;   // global gradient norm cap
    double stop_loss = 0.0;   // early stop when an epoch's mean loss drops below

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
        if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    }
};

struct SubModelDims {
    int local_nodes = 0;  // including the stub slot
    int feature_dim = 0;
    int window = 0;
    int width = 0;    // hidden width d_i
    int horizon = 0;  // P

    bool operator==(const SubModelDims&) const = default;
};

// Per-subgraph forecaster: one graph convolution (row-normalized adjacency
// with self-loops) over each window step, one full-window temporal
// convolution, linear readout to P steps. Parameters live in a single flat
// vector so training, checkpointing and bit-comparison all see the same
// bytes.
class SubModel {
public:
    static SubModel init(int subgraph_id, const SubModelDims& dims, std::uint64_t seed);

    int subgraph_id() const { return subgraph_id_; }
    const SubModelDims& dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& data_digest() const { return data_digest_; }
    void set_data_digest(std::string d) { data_digest_ = std::move(d); }

    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    const std::vector<double>& params() const { return params_; }
    std::vector<double>& mutable_params() {
        if (frozen_) throw std::logic_error("sub-model is frozen; parameters are immutable");
        return params_;
    }

    // flat-vector block offsets
    std::size_t off_wg() const { return 0; }
    std::size_t off_bg() const { return std::size_t(dims_.feature_dim) * dims_.width; }
    std::size_t off_wt() const { return off_bg() + dims_.width; }
    std::size_t off_bt() const {
        return off_wt() + std::size_t(dims_.window) * dims_.width * dims_.width;
    }
    std::size_t off_wr() const { return off_bt() + dims_.width; }
    std::size_t off_br() const { return off_wr() + std::size_t(dims_.width) * dims_.horizon; }
    std::size_t param_count() const { return off_br() + dims_.horizon; }

    std::string checkpoint_json() const;
    static SubModel from_checkpoint_json(const std::string& text);

private:
    int subgraph_id_ = 0;
    SubModelDims dims_;
    std::uint64_t seed_ = 0;
    std::string data_digest_;
    std::vector<double> params_;
    bool frozen_ = false;
};

struct SubForward {
    Matrix embeddings;  // local_nodes x width (post temporal activation)
    Matrix preds;       // local_nodes x horizon
    // caches for the backward pass
    std::vector<Matrix> gconv_in;   // per step: A_hat * X[t], local_nodes x F
    std::vector<Matrix> gconv_pre;  // per step: pre-activation, local_nodes x width
    Matrix temporal_pre;            // local_nodes x width
};

// Row-normalized (A + I) over a subgraph's local adjacency.
Matrix normalized_adjacency(const Subgraph& sub);

SubForward submodel_forward(const SubModel& model, const Matrix& ahat,
                            const std::vector<Matrix>& window_inputs);

// Accumulates parameter gradients for dL/dpreds into grad (same layout as
// params). window_inputs must match the forward call.
void submodel_backward(const SubModel& model, const Matrix& ahat, const SubForward& fwd,
                       const Matrix& dpreds, std::vector<double>& grad);

// Mini-batch L2 loss over the masked local nodes plus lambda_reg * ||theta||^2.
// Returns the batch loss; fills grad when non-null.
double submodel_loss(const SubModel& model, const Matrix& ahat,
                     const std::vector<std::vector<Matrix>>& batch_inputs,
                     const std::vector<Matrix>& batch_targets,
                     const std::vector<int>& loss_nodes, double lambda_reg,
                     std::vector<double>* grad);

struct SubTrainResult {
    SubModel model;
    std::vector<double> epoch_losses;
};

// Seeded mini-batch gradient descent on the windows of the train split,
// reading only member-node rows (excluded nodes contribute zero input and no
// loss). Returns the frozen model with its data digest set.
SubTrainResult train_submodel(const Subgraph& sub, const PrunedGraph& graph,
                              const ForecastTask& task, const TrainConfig& cfg,
                              const std::set<int>& exclude, double lambda_reg, int width,
                              std::uint64_t seed, LedgerPtr ledger);

// Embeddings for one window ending at t_end from a frozen model.
Matrix encode(const SubModel& model, const Subgraph& sub, const PrunedGraph& graph,
              const ForecastTask& task, int t_end, LedgerPtr ledger,
              const std::string& stage);

// Assembles the W x (local x F) input matrices for a window ending at t_end.
// Rows of excluded or stub slots stay zero.
std::vector<Matrix> window_inputs(const Subgraph& sub, DataView& data,
                                  const ForecastTask& task, int t_end,
                                  const std::set<int>& exclude);

Matrix window_targets(const Subgraph& sub, DataView& data, const ForecastTask& task, int t_end,
                      const std::set<int>& exclude);

} // namespace callosum
