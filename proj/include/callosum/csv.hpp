#pragma once

#include <string>

#include "callosum/stgraph.hpp"

namespace callosum {

// Long-format ingestion. Feature file header: node_id,timestep,f_0[,f_1,...];
// edge file header: src_id,dst_id. Node indices follow first appearance in
// the feature file, timesteps must be dense 0..T-1 per node.
STGraph ingest_csv(const std::string& feature_path, const std::string& edge_path);

// Canonical re-export of the same two files; ingest(export(g)) == g.
void export_csv(const STGraph& graph, const std::string& feature_path,
                const std::string& edge_path);

} // namespace callosum
