#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "callosum/ledger.hpp"

namespace callosum {

// Full spatio-temporal graph: static directed adjacency plus a T x N x F
// feature tensor and stable external node identifiers.
struct STGraph {
    int node_count = 0;   // N
    int timesteps = 0;    // T
    int feature_dim = 0;  // F
    std::vector<std::uint8_t> adjacency;  // N*N row-major, entries {0,1}, zero diagonal
    std::vector<double> features;         // timestep-major: T*N*F
    std::vector<std::string> node_ids;

    bool edge(int u, int v) const { return adjacency[std::size_t(u) * node_count + v] != 0; }
    void set_edge(int u, int v, bool on) {
        adjacency[std::size_t(u) * node_count + v] = on ? 1 : 0;
    }

    double feature(int t, int v, int f) const {
        return features[(std::size_t(t) * node_count + v) * feature_dim + f];
    }
    double& feature(int t, int v, int f) {
        return features[(std::size_t(t) * node_count + v) * feature_dim + f];
    }

    int index_of(const std::string& id) const;  // -1 when unknown

    // Throws std::invalid_argument when any structural invariant is violated.
    void validate() const;
};

// Deletion request resolved against a graph: node indices plus directed edge
// index pairs. Construction validates every reference.
struct DeletionRequest {
    std::set<int> nodes;
    std::set<std::pair<int, int>> edges;

    bool empty() const { return nodes.empty() && edges.empty(); }

    // Canonical content digest; also used for deriving retrain seeds.
    std::string digest() const;
};

DeletionRequest resolve_request(const STGraph& graph,
                                const std::vector<std::string>& node_ids,
                                const std::vector<std::pair<std::string, std::string>>& edge_ids);

// Parses the request file format: one node_id per line, edges as
// "edge,src_id,dst_id" lines. '#' comments and blank lines are skipped.
DeletionRequest load_request_file(const STGraph& graph, const std::string& path);

struct ForecastTask {
    int horizon = 1;  // P: output steps
    int window = 12;  // W: correlation / history window

    void validate(int timesteps) const {
        if (horizon < 1) throw std::invalid_argument("forecast horizon must be >= 1");
        if (window < 1 || window > timesteps - 1)
            throw std::invalid_argument("window must satisfy 1 <= W <= T-1");
    }
};

// The working view the pipeline actually trains on: a base graph plus the
// effect of zero or more purges. Nodes are never reindexed; removed nodes
// stay as dead slots so partitions and checkpoints keep stable indices.
struct PrunedGraph {
    STGraph graph;                     // adjacency already has purged rows/cols zeroed
    std::vector<std::uint8_t> alive;   // per node

    static PrunedGraph from(STGraph g) {
        PrunedGraph p;
        p.alive.assign(g.node_count, 1);
        p.graph = std::move(g);
        return p;
    }

    int alive_count() const {
        int c = 0;
        for (auto a : alive) c += a;
        return c;
    }

    std::vector<int> alive_nodes() const {
        std::vector<int> v;
        for (int i = 0; i < graph.node_count; ++i)
            if (alive[i]) v.push_back(i);
        return v;
    }

    bool edge(int u, int v) const { return graph.edge(u, v); }

    std::vector<std::pair<int, int>> edge_list() const;
};

// Removes requested nodes entirely (features zeroed, incident edges dropped)
// and requested edges; returns the new view. The base graph is copied, so the
// caller's original bytes are untouched.
PrunedGraph purge(const PrunedGraph& in, const DeletionRequest& request);

// Feature access path used by every training/evaluation stage. Reads are
// recorded to the ledger; reads of dead nodes throw.
class DataView {
public:
    DataView(const PrunedGraph& pg, LedgerPtr ledger, std::string stage)
        : pg_(&pg), reader_(std::move(ledger), std::move(stage)) {}

    double at(int t, int v, int f) {
        if (!pg_->alive[v]) throw std::logic_error("read of purged node " + std::to_string(v));
        reader_.touch(v);
        return pg_->graph.feature(t, v, f);
    }

    const PrunedGraph& pruned() const { return *pg_; }
    int timesteps() const { return pg_->graph.timesteps; }
    int feature_dim() const { return pg_->graph.feature_dim; }

private:
    const PrunedGraph* pg_;
    StageReader reader_;
};

// Temporal 70/15/15 split boundaries over [0, T).
struct TemporalSplit {
    int train_end;  // train steps: [0, train_end)
    int val_end;    // val steps: [train_end, val_end), test: [val_end, T)
};

TemporalSplit temporal_split(int timesteps);

// Window end-times t such that the input [t-W+1, t] and target [t+1, t+P]
// both fall inside [lo, hi).
std::vector<int> window_ends(const ForecastTask& task, int lo, int hi);

} // namespace callosum
