#pragma once

#include <map>
#include <string>
#include <vector>

#include "callosum/partition.hpp"

namespace callosum {

struct PageRankScores {
    std::vector<double> scores;  // sums to 1 across the local node set
    double damping = 0.85;
    int iterations = 0;
};

// Power iteration on the column-normalized adjacency with uniform teleport;
// dangling nodes redistribute uniformly. Stops when the L1 change drops
// below tol.
PageRankScores pagerank(const std::vector<std::uint8_t>& adjacency, int n, double damping,
                        double tol);

// Top ceil(log2 |V_i|) non-stub members by score (minimum 1), ties toward the
// smaller node index. Returned in descending score order.
std::vector<int> select_key_nodes(const Subgraph& sub, const PageRankScores& scores);

struct MetaVertex {
    enum class Kind { real, slot, ganglion };
    Kind kind;
    int node = -1;      // original index for real vertices
    int subgraph = -1;  // owner for real/slot vertices
    int ganglion = -1;  // ganglion id
    bool is_key = false;
    bool is_boundary = false;
};

struct MetaEdge {
    int a;  // vertex indices, a < b
    int b;
    double weight;
};

struct MetaGraph {
    std::vector<MetaVertex> vertices;  // reals by node, then slots, then ganglions
    std::vector<MetaEdge> edges;
    std::map<int, std::vector<int>> key_nodes;  // subgraph id -> original node indices
    std::vector<int> boundary_nodes;            // original node indices, ascending
    int ganglion_count = 0;
    int budget = 0;  // edge cap applied during sparsification
    std::string partition_digest;

    int vertex_of_node(int node) const;        // -1 when the node is not promoted
    int vertex_of_slot(int subgraph_id) const;
    int vertex_of_ganglion(int g) const;

    std::vector<std::vector<int>> neighbor_lists() const;  // symmetric
};

// Assembles key/boundary/ganglion/summary-slot vertices and the edge set:
// aggregation edges into each subgraph's slot, ganglion star edges, key-key
// edges between adjacent subgraphs, and the severed cut pairs themselves
// (weighted by their correlation, clamped at zero). Then drops lowest-weight
// edges until the ceil(c * M * log2 M) budget holds, never isolating a
// vertex. Throws when the budget is infeasible, naming the deficit.
MetaGraph build_meta_graph(const Partition& partition,
                           const std::map<int, std::vector<int>>& key_sets,
                           const CorrelationMap& corr, int ganglion_count, double budget_c);

// Convenience: per-subgraph PageRank + key selection + assembly.
MetaGraph build_meta_from_partition(const Partition& partition, const CorrelationMap& corr,
                                    int ganglion_count, double budget_c, double damping = 0.85,
                                    double tol = 1e-12);

std::string metagraph_to_json(const MetaGraph& m);

} // namespace callosum
