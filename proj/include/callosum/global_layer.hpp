#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "callosum/dense.hpp"
#include "callosum/metagraph.hpp"
#include "callosum/submodel.hpp"

namespace callosum {

struct GlobalDims {
    int token_dim = 16;       // D_g; also the ganglion MLP hidden width
    int heads = 2;            // H
    int layers = 2;           // L
    int horizon = 1;          // P
    std::map<int, int> sub_widths;  // subgraph id -> d_i

    int head_dim() const { return token_dim / heads; }
    void validate() const {
        if (token_dim % heads != 0)
            throw std::invalid_argument("token dim must be divisible by head count");
        if (heads < 1 || layers < 1) throw std::invalid_argument("need H >= 1 and L >= 1");
    }
};

struct GlobalHyper {
    double lambda1 = 0.01;   // L1 on the trainable meta-adjacency
    double lambda2 = 0.001;  // L2 on ganglion embeddings
    double alpha_init = 0.5;
};

// Everything the refinement stage owns: per-subgraph input projections,
// per-ganglion two-layer rectifier MLPs, L layers of H-head cross-attention
// masked to the meta-graph, the trainable meta-edge biases, the token/ganglion
// fusion scalar alpha, and a zero-initialized correction readout. A freshly
// initialized (or reset) layer is therefore an exact passthrough of the
// sub-model predictions.
class GlobalLayer {
public:
    static GlobalLayer init(const MetaGraph& meta, const GlobalDims& dims,
                            const GlobalHyper& hyper, std::uint64_t seed);

    const GlobalDims& dims() const { return dims_; }
    const GlobalHyper& hyper() const { return hyper_; }
    std::uint64_t seed() const { return seed_; }
    int edge_count() const { return edge_count_; }

    const std::vector<double>& params() const { return params_; }
    std::vector<double>& mutable_params() { return params_; }

    double alpha() const { return params_[off_alpha()]; }
    void clip_alpha() {
        double& a = params_[off_alpha()];
        if (a < 0.0) a = 0.0;
        if (a > 1.0) a = 1.0;
    }

    // flat layout: [proj per subgraph][mlp per ganglion][attention per layer]
    // [edge biases][alpha][readout]
    std::size_t off_proj(int subgraph_id) const;
    std::size_t off_proj_bias(int subgraph_id) const;
    std::size_t off_mlp(int g) const;  // W1, b1, W2, b2 packed
    std::size_t off_attn(int layer, int head) const;  // Wq, Wk, Wv packed
    std::size_t off_attn_out(int layer) const;        // Wo
    std::size_t off_edge_bias() const;
    std::size_t off_alpha() const;
    std::size_t off_readout() const;  // R then r0
    std::size_t param_count() const;

    std::string checkpoint_json() const;
    static GlobalLayer from_checkpoint_json(const std::string& text);

    // named blocks for the gradient audit
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> blocks() const;

private:
    GlobalDims dims_;
    GlobalHyper hyper_;
    std::uint64_t seed_ = 0;
    int edge_count_ = 0;
    int ganglion_count_ = 0;
    std::vector<int> proj_order_;  // subgraph ids in layout order
    std::vector<double> params_;

    std::size_t proj_block_size(int subgraph_id) const;
    std::size_t proj_end() const;
    std::size_t mlp_end() const;
    std::size_t attn_per_layer() const;
};

// Static wiring shared by forward/backward: vertex roles, neighbor lists and
// the edge index lookup for attention masking.
struct GlobalWiring {
    const MetaGraph* meta = nullptr;
    std::vector<std::vector<int>> neighbors;           // symmetric, sorted
    std::map<std::pair<int, int>, int> edge_index;     // unordered pair -> edge id
    std::vector<int> ganglion_vertices;
    std::vector<int> fused_vertices;  // real + slot vertices, layout order

    static GlobalWiring build(const MetaGraph& meta);
    int edge_id(int a, int b) const;
};

// One window's inputs to the refinement stage.
struct GlobalInputs {
    // per subgraph id: embeddings for member real nodes (rows follow
    // Subgraph::nodes order) and the member list itself
    std::map<int, Matrix> embeddings;
    std::map<int, std::vector<int>> members;
    std::vector<double> base;     // node -> P base predictions (flattened)
    std::vector<int> real_nodes;  // alive real nodes, ascending
};

struct GlobalForward {
    Matrix tokens0;                    // pre-attention tokens, n_meta x D
    std::vector<Matrix> layer_in;      // Z_l per layer, plus final as layer_in[L]
    // per layer, per head caches
    std::vector<std::vector<Matrix>> q, k, v;       // n x head_dim
    std::vector<std::vector<Matrix>> attn;          // n x n (masked softmax)
    std::vector<Matrix> concat;                     // n x D pre-Wo
    std::vector<std::vector<double>> gang_agg;      // per ganglion: D
    std::vector<std::vector<double>> gang_hidden;   // pre-relu hidden
    std::vector<std::vector<double>> gang_embed;    // h_g, D
    std::map<int, std::vector<double>> fused;       // vertex -> fused D-vector
    std::map<int, std::vector<double>> gang_mean;   // vertex -> mean ganglion stream
    std::vector<double> predictions;                // node*P, only real alive nodes valid
};

// alpha * token + (1 - alpha) * ganglion, elementwise.
std::vector<double> fuse(const std::vector<double>& h_token, const std::vector<double>& h_ganglion,
                         double alpha);

GlobalForward global_forward(const GlobalLayer& layer, const GlobalWiring& wiring,
                             const Partition& partition, const GlobalInputs& in);

// Squared-error-plus-regularizer loss over a batch of windows; gradient is
// accumulated into grad when non-null. Targets align with in[i].real_nodes.
double global_loss(const GlobalLayer& layer, const GlobalWiring& wiring,
                   const Partition& partition, const std::vector<GlobalInputs>& batch,
                   const std::vector<Matrix>& targets, std::vector<double>* grad);

struct GlobalTrainResult {
    std::vector<double> epoch_losses;
    int epochs_run = 0;
};

GlobalTrainResult train_global(GlobalLayer& layer, const GlobalWiring& wiring,
                               const Partition& partition,
                               const std::vector<GlobalInputs>& windows,
                               const std::vector<Matrix>& targets, const TrainConfig& cfg,
                               std::uint64_t order_seed);

} // namespace callosum
