#include "callosum/stgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "callosum/sha256.hpp"

namespace callosum {

int STGraph::index_of(const std::string& id) const {
    for (int i = 0; i < node_count; ++i)
        if (node_ids[i] == id) return i;
    return -1;
}

void STGraph::validate() const {
    if (node_count <= 0) throw std::invalid_argument("graph must have at least one node");
    if (timesteps < 2) throw std::invalid_argument("feature tensor needs T >= 2");
    if (feature_dim < 1) throw std::invalid_argument("feature dimension must be >= 1");
    if (adjacency.size() != std::size_t(node_count) * node_count)
        throw std::invalid_argument("adjacency shape mismatch");
    if (features.size() != std::size_t(timesteps) * node_count * feature_dim)
        throw std::invalid_argument("feature tensor shape mismatch");
    if (node_ids.size() != std::size_t(node_count))
        throw std::invalid_argument("node id count mismatch");
    for (int i = 0; i < node_count; ++i) {
        if (adjacency[std::size_t(i) * node_count + i] != 0)
            throw std::invalid_argument("adjacency diagonal must be zero");
    }
    for (auto a : adjacency)
        if (a != 0 && a != 1) throw std::invalid_argument("adjacency entries must be 0/1");
    for (double x : features)
        if (!std::isfinite(x)) throw std::invalid_argument("feature tensor has non-finite entry");
    std::unordered_set<std::string> seen;
    for (const auto& id : node_ids)
        if (!seen.insert(id).second)
            throw std::invalid_argument("duplicate node id: " + id);
}

std::string DeletionRequest::digest() const {
    Sha256 h;
    h.update_u64(nodes.size());
    for (int n : nodes) h.update_i64(n);
    h.update_u64(edges.size());
    for (const auto& e : edges) {
        h.update_i64(e.first);
        h.update_i64(e.second);
    }
    return h.finish_hex();
}

DeletionRequest resolve_request(const STGraph& graph,
                                const std::vector<std::string>& node_ids,
                                const std::vector<std::pair<std::string, std::string>>& edge_ids) {
    DeletionRequest req;
    for (const auto& id : node_ids) {
        int idx = graph.index_of(id);
        if (idx < 0) throw std::invalid_argument("deletion request references unknown node id: " + id);
        req.nodes.insert(idx);
    }
    for (const auto& [src, dst] : edge_ids) {
        int u = graph.index_of(src);
        int v = graph.index_of(dst);
        if (u < 0) throw std::invalid_argument("deletion request references unknown node id: " + src);
        if (v < 0) throw std::invalid_argument("deletion request references unknown node id: " + dst);
        if (!graph.edge(u, v))
            throw std::invalid_argument("deletion request references missing edge: " + src + "->" + dst);
        req.edges.insert({u, v});
    }
    return req;
}

DeletionRequest load_request_file(const STGraph& graph, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open request file: " + path);
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("edge,", 0) == 0) {
            std::string rest = line.substr(5);
            auto comma = rest.find(',');
            if (comma == std::string::npos)
                throw std::invalid_argument("malformed edge line in request file: " + line);
            edges.emplace_back(rest.substr(0, comma), rest.substr(comma + 1));
        } else {
            nodes.push_back(line);
        }
    }
    return resolve_request(graph, nodes, edges);
}

std::vector<std::pair<int, int>> PrunedGraph::edge_list() const {
    std::vector<std::pair<int, int>> out;
    for (int u = 0; u < graph.node_count; ++u) {
        if (!alive[u]) continue;
        for (int v = 0; v < graph.node_count; ++v) {
            if (u != v && alive[v] && graph.edge(u, v)) out.push_back({u, v});
        }
    }
    return out;
}

PrunedGraph purge(const PrunedGraph& in, const DeletionRequest& request) {
    PrunedGraph out = in;
    for (int n : request.nodes) {
        if (n < 0 || n >= out.graph.node_count)
            throw std::invalid_argument("purge: node index out of range");
        out.alive[n] = 0;
        for (int v = 0; v < out.graph.node_count; ++v) {
            out.graph.set_edge(n, v, false);
            out.graph.set_edge(v, n, false);
        }
        for (int t = 0; t < out.graph.timesteps; ++t)
            for (int f = 0; f < out.graph.feature_dim; ++f)
                out.graph.feature(t, n, f) = 0.0;
    }
    for (const auto& [u, v] : request.edges) out.graph.set_edge(u, v, false);
    return out;
}

TemporalSplit temporal_split(int timesteps) {
    TemporalSplit s;
    s.train_end = (timesteps * 70) / 100;
    s.val_end = (timesteps * 85) / 100;
    return s;
}

std::vector<int> window_ends(const ForecastTask& task, int lo, int hi) {
    std::vector<int> ends;
    for (int t = lo + task.window - 1; t + task.horizon < hi; ++t) ends.push_back(t);
    return ends;
}

} // namespace callosum
