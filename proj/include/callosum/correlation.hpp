#pragma once

#include <cstdint>
#include <unordered_map>

#include "callosum/stgraph.hpp"

namespace callosum {

// Lag-1 temporal correlation per directed edge of the pruned graph, averaged
// over a W-step window. For F >= 2 each term correlates the feature vectors
// at (t, t+1); for F = 1 it correlates length-W sliding windows starting at t
// and t+1. Zero-variance operands contribute 0.
class CorrelationMap {
public:
    int window = 0;

    double rho(int u, int v) const {
        auto it = rho_.find(key(u, v));
        return it == rho_.end() ? 0.0 : it->second;
    }

    bool has(int u, int v) const { return rho_.find(key(u, v)) != rho_.end(); }

    void set(int u, int v, double value) { rho_[key(u, v)] = value; }

    std::size_t size() const { return rho_.size(); }

    // Total outgoing correlation of a node, over edges present in the map.
    double total_outgoing(int u, int node_count) const {
        double s = 0.0;
        for (int v = 0; v < node_count; ++v) {
            auto it = rho_.find(key(u, v));
            if (it != rho_.end()) s += it->second;
        }
        return s;
    }

private:
    static std::uint64_t key(int u, int v) {
        return (std::uint64_t(std::uint32_t(u)) << 32) | std::uint32_t(v);
    }
    std::unordered_map<std::uint64_t, double> rho_;
};

// Number of pairwise correlation evaluations the last call performed; the
// complexity audit checks this grows linearly with edge count.
std::size_t correlation_pair_evaluations();

CorrelationMap correlation_map(const PrunedGraph& graph, int w, LedgerPtr ledger = nullptr,
                               const std::string& stage = "correlation");

// Pearson correlation of two equal-length series; 0 when either has zero
// variance.
double pearson(const double* a, const double* b, int n);

} // namespace callosum
