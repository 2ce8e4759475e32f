#pragma once

#include <string>

#include "callosum/metagraph.hpp"
#include "callosum/partition.hpp"
#include "callosum/stgraph.hpp"

namespace callosum {

std::string graph_to_json(const STGraph& g);
STGraph graph_from_json(const std::string& text);

std::string pruned_to_json(const PrunedGraph& g);
PrunedGraph pruned_from_json(const std::string& text);

Partition partition_from_json(const std::string& text);
MetaGraph metagraph_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace callosum
