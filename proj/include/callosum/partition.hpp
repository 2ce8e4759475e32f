#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "callosum/correlation.hpp"
#include "callosum/stgraph.hpp"

namespace callosum {

enum class VirtualEdgeTag { reconnection, ganglion_stub, k_ring };

struct VirtualEdge {
    int a;  // local indices; the stub, when present, sits at slot node_count
    int b;
    VirtualEdgeTag tag;

    bool operator==(const VirtualEdge&) const = default;
};

// One closed subgraph: member nodes, the local message-passing topology
// (original intra edges plus repair edges), and an optional zero-feature
// ganglion stub. No entry ever references a node outside the member set.
struct Subgraph {
    int id = 0;                    // stable across purges and merges
    std::vector<int> nodes;        // original indices, ascending
    int stub_count = 0;            // 0 or 1
    std::vector<std::uint8_t> local_adjacency;  // (n+stub)^2 row-major, symmetric virtuals
    std::vector<std::pair<int, int>> intra_edges;  // original directed edges, both ends inside
    std::vector<VirtualEdge> virtual_edges;
    std::vector<int> boundary_nodes;  // original indices incident to cut edges

    int local_count() const { return int(nodes.size()) + stub_count; }

    int local_index(int original) const;  // -1 when not a member

    bool local_edge(int a, int b) const {
        return local_adjacency[std::size_t(a) * local_count() + b] != 0;
    }
    void set_local_edge(int a, int b, bool on) {
        local_adjacency[std::size_t(a) * local_count() + b] = on ? 1 : 0;
    }

    // in+out degree of a local slot
    int degree(int local) const;

    bool operator==(const Subgraph&) const = default;
};

struct Partition {
    std::vector<int> backbone;   // alive nodes in greedy order
    std::vector<int> position;   // node -> backbone position at build time, -1 if dead
    std::vector<int> assignment; // node -> subgraph id, -1 if dead
    std::vector<Subgraph> subgraphs;  // ascending by id
    std::vector<std::pair<int, int>> cut_edges;  // lexicographic
    double delta_cut = 0.0;
    int m = 0;
    double gamma = 0.0;
    // N' and M of the original build; sub-model widths key off these so that
    // untouched models keep identical shapes across purges.
    int n_at_build = 0;
    int m_at_build = 0;

    const Subgraph& by_id(int id) const;
    Subgraph& by_id(int id);
    bool has_id(int id) const;
};

// Greedy ordering maximizing summed correlation along consecutive pairs:
// start at the node with the largest total outgoing rho, follow the maximal
// unvisited out-neighbor, jump to the best unvisited node when stuck. Ties
// break toward smaller node index.
std::vector<int> extract_backbone(const PrunedGraph& graph, const CorrelationMap& corr);

// Contiguous backbone segmentation into m subgraphs (position p goes to
// segment i iff floor(i*N'/m) <= p < floor((i+1)*N'/m)), intra edges kept
// local, the remainder forming the cut set.
Partition segment(const std::vector<int>& backbone, int m, const PrunedGraph& graph,
                  const CorrelationMap& corr, double gamma);

// argmin over candidates of delta_cut(M) + gamma * ln M, ties toward smaller M.
int select_m(const PrunedGraph& graph, const CorrelationMap& corr, double gamma,
             const std::vector<int>& candidates);

// Isolated-node reconnection, one ganglion stub wired to every interior
// endpoint of an incident cut edge, and K-Ring densification around boundary
// nodes. Added edges are symmetric and tagged; nothing crosses the boundary.
Subgraph repair_subgraph(const Subgraph& sub, const Partition& partition, int k_ring);

void repair_all(Partition& partition, int k_ring);

// (Info_intra, TotalCorr) with Info_intra = TotalCorr - delta_cut.
std::pair<double, double> info_retention(const Partition& partition, const CorrelationMap& corr);

// Rebuilds subgraph edge structure, cut set and delta_cut for the given
// (id, node set) groups against a (possibly purged) graph. Shared by
// segmentation, purge and merge so every path derives structure identically.
Partition assemble_partition(const std::vector<std::pair<int, std::vector<int>>>& groups,
                             std::vector<int> backbone, std::vector<int> position,
                             const PrunedGraph& graph, const CorrelationMap& corr,
                             double gamma, int n_at_build, int m_at_build);

std::string partition_to_json(const Partition& p);

} // namespace callosum
