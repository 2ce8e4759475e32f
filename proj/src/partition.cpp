#include "callosum/partition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace callosum {

int Subgraph::local_index(int original) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), original);
    if (it == nodes.end() || *it != original) return -1;
    return int(it - nodes.begin());
}

int Subgraph::degree(int local) const {
    int n = local_count();
    int d = 0;
    for (int j = 0; j < n; ++j) {
        if (j == local) continue;
        if (local_edge(local, j)) ++d;
        if (local_edge(j, local)) ++d;
    }
    return d;
}

const Subgraph& Partition::by_id(int id) const {
    for (const auto& s : subgraphs)
        if (s.id == id) return s;
    throw std::out_of_range("no subgraph with id " + std::to_string(id));
}

Subgraph& Partition::by_id(int id) {
    for (auto& s : subgraphs)
        if (s.id == id) return s;
    throw std::out_of_range("no subgraph with id " + std::to_string(id));
}

bool Partition::has_id(int id) const {
    for (const auto& s : subgraphs)
        if (s.id == id) return true;
    return false;
}

namespace {

std::vector<int> greedy_walk(int start, const PrunedGraph& graph, const CorrelationMap& corr,
                             const std::vector<int>& nodes,
                             const std::vector<double>& total_out) {
    const int N = graph.graph.node_count;
    std::vector<std::uint8_t> visited(N, 0);
    auto best_unvisited = [&]() {
        int best = -1;
        for (int u : nodes) {
            if (visited[u]) continue;
            if (best < 0 || total_out[u] > total_out[best]) best = u;
        }
        return best;
    };

    std::vector<int> order;
    order.reserve(nodes.size());
    visited[start] = 1;
    order.push_back(start);
    int current = start;
    while (order.size() < nodes.size()) {
        int next = -1;
        double best_rho = 0.0;
        for (int v = 0; v < N; ++v) {
            if (visited[v] || !graph.alive[v] || !graph.edge(current, v)) continue;
            double r = corr.rho(current, v);
            if (next < 0 || r > best_rho) {
                next = v;
                best_rho = r;
            }
        }
        // a negative-correlation step scores worse than a jump, which adds 0
        if (next < 0 || best_rho < 0.0) next = best_unvisited();
        visited[next] = 1;
        order.push_back(next);
        current = next;
    }
    return order;
}

double walk_score(const std::vector<int>& order, const PrunedGraph& graph,
                  const CorrelationMap& corr) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        if (graph.edge(order[i], order[i + 1])) s += corr.rho(order[i], order[i + 1]);
    return s;
}

} // namespace

std::vector<int> extract_backbone(const PrunedGraph& graph, const CorrelationMap& corr) {
    std::vector<int> nodes = graph.alive_nodes();
    if (nodes.empty()) throw std::invalid_argument("extract_backbone: empty graph");

    const int N = graph.graph.node_count;
    std::vector<double> total_out(N, 0.0);
    for (int u : nodes) total_out[u] = corr.total_outgoing(u, N);

    // one greedy walk per start, keep the best score; ties resolve to the
    // smaller start index
    std::vector<int> best_order;
    double best_score = 0.0;
    for (int start : nodes) {
        std::vector<int> order = greedy_walk(start, graph, corr, nodes, total_out);
        double score = walk_score(order, graph, corr);
        if (best_order.empty() || score > best_score) {
            best_order = std::move(order);
            best_score = score;
        }
    }
    return best_order;
}

Partition assemble_partition(const std::vector<std::pair<int, std::vector<int>>>& groups,
                             std::vector<int> backbone, std::vector<int> position,
                             const PrunedGraph& graph, const CorrelationMap& corr,
                             double gamma, int n_at_build, int m_at_build) {
    Partition p;
    p.backbone = std::move(backbone);
    p.position = std::move(position);
    p.gamma = gamma;
    p.m = int(groups.size());
    p.n_at_build = n_at_build;
    p.m_at_build = m_at_build;
    p.assignment.assign(graph.graph.node_count, -1);

    for (const auto& [id, members] : groups) {
        Subgraph s;
        s.id = id;
        s.nodes = members;
        std::sort(s.nodes.begin(), s.nodes.end());
        s.local_adjacency.assign(std::size_t(s.nodes.size()) * s.nodes.size(), 0);
        for (int v : s.nodes) p.assignment[v] = id;
        p.subgraphs.push_back(std::move(s));
    }
    std::sort(p.subgraphs.begin(), p.subgraphs.end(),
              [](const Subgraph& a, const Subgraph& b) { return a.id < b.id; });

    for (const auto& [u, v] : graph.edge_list()) {
        int au = p.assignment[u], av = p.assignment[v];
        if (au == av && au >= 0) {
            Subgraph& s = p.by_id(au);
            s.intra_edges.push_back({u, v});
            s.set_local_edge(s.local_index(u), s.local_index(v), true);
        } else if (au >= 0 && av >= 0) {
            p.cut_edges.push_back({u, v});
        }
    }
    // edge_list is already lexicographic, so cut_edges and delta_cut are
    // reproducible sums
    p.delta_cut = 0.0;
    for (const auto& [u, v] : p.cut_edges) p.delta_cut += corr.rho(u, v);

    for (auto& s : p.subgraphs) {
        std::vector<std::uint8_t> is_boundary(graph.graph.node_count, 0);
        for (const auto& [u, v] : p.cut_edges) {
            if (p.assignment[u] == s.id) is_boundary[u] = 1;
            if (p.assignment[v] == s.id) is_boundary[v] = 1;
        }
        for (int v : s.nodes)
            if (is_boundary[v]) s.boundary_nodes.push_back(v);
    }
    return p;
}

Partition segment(const std::vector<int >& backbone, int m, const PrunedGraph& graph,
                  const CorrelationMap& corr, double gamma) {
    const int n_prime = int(backbone.size());
    if (m < 1 || m > n_prime)
        throw std::invalid_argument("segment: m must satisfy 1 <= m <= N'");

    std::vector<int> position(graph.graph.node_count, -1);
    for (int i = 0; i < n_prime; ++i) position[backbone[i]] = i;

    std::vector<std::pair<int, std::vector<int>>> groups;
    for (int i = 0; i < m; ++i) {
        long lo = (long(i) * n_prime) / m;
        long hi = (long(i + 1) * n_prime) / m;
        std::vector<int> members;
        for (long pos = lo; pos < hi; ++pos) members.push_back(backbone[pos]);
        groups.emplace_back(i, std::move(members));
    }
    return assemble_partition(groups, backbone, position, graph, corr, gamma, n_prime, m);
}

int select_m(const PrunedGraph& graph, const CorrelationMap& corr, double gamma,
             const std::vector<int>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_m: empty candidate set");
    std::vector<int> backbone = extract_backbone(graph, corr);
    int n_prime = int(backbone.size());

    int best_m = -1;
    double best_obj = 0.0;
    for (int m : candidates) {
        if (m < 1 || m > n_prime)
            throw std::invalid_argument("select_m: candidate out of range 1..N'");
        Partition p = segment(backbone, m, graph, corr, gamma);
        double obj = p.delta_cut + gamma * std::log(double(m));
        if (best_m < 0 || obj < best_obj || (obj == best_obj && m < best_m)) {
            best_obj = obj;
            best_m = m;
        }
    }
    return best_m;
}

Subgraph repair_subgraph(const Subgraph& sub, const Partition& partition, int k_ring) {
    Subgraph s = sub;
    const int n = int(s.nodes.size());

    // isolation is judged on the incoming segment, not on partially repaired
    // state
    std::vector<int> isolated;
    for (int li = 0; li < n; ++li)
        if (sub.degree(li) == 0) isolated.push_back(li);

    // incident cut edges, interior endpoint first
    std::vector<int> interior_endpoints;
    for (const auto& [u, v] : partition.cut_edges) {
        if (partition.assignment[u] == s.id) interior_endpoints.push_back(u);
        if (partition.assignment[v] == s.id) interior_endpoints.push_back(v);
    }

    bool needs_stub = !interior_endpoints.empty();
    if (needs_stub && s.stub_count == 0) {
        s.stub_count = 1;
        // grow the local adjacency by one slot
        std::vector<std::uint8_t> grown(std::size_t(n + 1) * (n + 1), 0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                grown[std::size_t(a) * (n + 1) + b] = sub.local_adjacency[std::size_t(a) * n + b];
        s.local_adjacency = std::move(grown);
    }

    auto add_virtual = [&](int a, int b, VirtualEdgeTag tag) {
        if (a == b) return;
        if (s.local_edge(a, b) || s.local_edge(b, a)) return;
        s.set_local_edge(a, b, true);
        s.set_local_edge(b, a, true);
        s.virtual_edges.push_back(VirtualEdge{a, b, tag});
    };

    // (a) isolated members reconnect to their two nearest same-subgraph
    // neighbors in backbone order
    for (int li : isolated) {
        int self = s.nodes[li];
        std::vector<int> peers;
        for (int lj = 0; lj < n; ++lj)
            if (lj != li) peers.push_back(lj);
        std::sort(peers.begin(), peers.end(), [&](int a, int b) {
            int da = std::abs(partition.position[s.nodes[a]] - partition.position[self]);
            int db = std::abs(partition.position[s.nodes[b]] - partition.position[self]);
            if (da != db) return da < db;
            return s.nodes[a] < s.nodes[b];
        });
        for (int k = 0; k < 2 && k < int(peers.size()); ++k)
            add_virtual(li, peers[k], VirtualEdgeTag::reconnection);
    }

    // (b) one zero-feature stub per subgraph, wired to every interior cut
    // endpoint
    if (needs_stub) {
        int stub = n;
        for (int endpoint : interior_endpoints)
            add_virtual(s.local_index(endpoint), stub, VirtualEdgeTag::ganglion_stub);
    }

    // (c) K-Ring around boundary nodes
    if (k_ring > 0) {
        for (int b : s.boundary_nodes) {
            int bpos = partition.position[b];
            int lb = s.local_index(b);
            for (int lj = 0; lj < n; ++lj) {
                if (s.nodes[lj] == b) continue;
                if (std::abs(partition.position[s.nodes[lj]] - bpos) <= k_ring)
                    add_virtual(lb, lj, VirtualEdgeTag::k_ring);
            }
        }
    }
    return s;
}

void repair_all(Partition& partition, int k_ring) {
    for (auto& s : partition.subgraphs) s = repair_subgraph(s, partition, k_ring);
}

std::pair<double, double> info_retention(const Partition& partition,
                                         const CorrelationMap& corr) {
    double total = 0.0;
    for (const auto& s : partition.subgraphs)
        for (const auto& [u, v] : s.intra_edges) total += corr.rho(u, v);
    for (const auto& [u, v] : partition.cut_edges) total += corr.rho(u, v);
    return {total - partition.delta_cut, total};
}

std::string partition_to_json(const Partition& p) {
    nlohmann::json j;
    j["backbone"] = p.backbone;
    j["position"] = p.position;
    j["assignment"] = p.assignment;
    nlohmann::json cuts = nlohmann::json::array();
    for (const auto& [u, v] : p.cut_edges) cuts.push_back({u, v});
    j["cut_edges"] = cuts;
    j["delta_cut"] = p.delta_cut;
    j["m"] = p.m;
    j["gamma"] = p.gamma;
    j["n_at_build"] = p.n_at_build;
    j["m_at_build"] = p.m_at_build;
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& s : p.subgraphs) {
        nlohmann::json sj;
        sj["id"] = s.id;
        sj["nodes"] = s.nodes;
        sj["stub_count"] = s.stub_count;
        sj["local_adjacency"] = s.local_adjacency;
        nlohmann::json intra = nlohmann::json::array();
        for (const auto& [u, v] : s.intra_edges) intra.push_back({u, v});
        sj["intra_edges"] = intra;
        nlohmann::json virt = nlohmann::json::array();
        for (const auto& e : s.virtual_edges) {
            nlohmann::json ej;
            ej["a"] = e.a;
            ej["b"] = e.b;
            switch (e.tag) {
                case VirtualEdgeTag::reconnection: ej["tag"] = "reconnection"; break;
                case VirtualEdgeTag::ganglion_stub: ej["tag"] = "ganglion_stub"; break;
                case VirtualEdgeTag::k_ring: ej["tag"] = "k_ring"; break;
            }
            virt.push_back(ej);
        }
        sj["virtual_edges"] = virt;
        sj["boundary_nodes"] = s.boundary_nodes;
        subs.push_back(sj);
    }
    j["subgraphs"] = subs;
    return j.dump(2) + "\n";
}

} // namespace callosum
