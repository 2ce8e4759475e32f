#include "callosum/jsonio.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace callosum {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string graph_to_json(const STGraph& g) {
    nlohmann::json j;
    j["node_count"] = g.node_count;
    j["timesteps"] = g.timesteps;
    j["feature_dim"] = g.feature_dim;
    j["node_ids"] = g.node_ids;
    nlohmann::json edges = nlohmann::json::array();
    for (int u = 0; u < g.node_count; ++u)
        for (int v = 0; v < g.node_count; ++v)
            if (g.edge(u, v)) edges.push_back({u, v});
    j["edges"] = edges;
    j["features"] = g.features;
    return j.dump() + "\n";
}

STGraph graph_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    STGraph g;
    g.node_count = j.at("node_count").get<int>();
    g.timesteps = j.at("timesteps").get<int>();
    g.feature_dim = j.at("feature_dim").get<int>();
    g.node_ids = j.at("node_ids").get<std::vector<std::string>>();
    g.adjacency.assign(std::size_t(g.node_count) * g.node_count, 0);
    for (const auto& e : j.at("edges")) g.set_edge(e[0].get<int>(), e[1].get<int>(), true);
    g.features = j.at("features").get<std::vector<double>>();
    g.validate();
    return g;
}

std::string pruned_to_json(const PrunedGraph& g) {
    nlohmann::json j;
    j["alive"] = g.alive;
    // dead slots break STGraph validation, so the embedded graph skips it
    nlohmann::json gj;
    gj["node_count"] = g.graph.node_count;
    gj["timesteps"] = g.graph.timesteps;
    gj["feature_dim"] = g.graph.feature_dim;
    gj["node_ids"] = g.graph.node_ids;
    nlohmann::json edges = nlohmann::json::array();
    for (int u = 0; u < g.graph.node_count; ++u)
        for (int v = 0; v < g.graph.node_count; ++v)
            if (g.graph.edge(u, v)) edges.push_back({u, v});
    gj["edges"] = edges;
    gj["features"] = g.graph.features;
    j["graph"] = gj;
    return j.dump() + "\n";
}

PrunedGraph pruned_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PrunedGraph p;
    const auto& gj = j.at("graph");
    p.graph.node_count = gj.at("node_count").get<int>();
    p.graph.timesteps = gj.at("timesteps").get<int>();
    p.graph.feature_dim = gj.at("feature_dim").get<int>();
    p.graph.node_ids = gj.at("node_ids").get<std::vector<std::string>>();
    p.graph.adjacency.assign(std::size_t(p.graph.node_count) * p.graph.node_count, 0);
    for (const auto& e : gj.at("edges")) p.graph.set_edge(e[0].get<int>(), e[1].get<int>(), true);
    p.graph.features = gj.at("features").get<std::vector<double>>();
    p.alive = j.at("alive").get<std::vector<std::uint8_t>>();
    if (p.alive.size() != std::size_t(p.graph.node_count))
        throw std::invalid_argument("pruned graph alive mask shape mismatch");
    return p;
}

Partition partition_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Partition p;
    p.backbone = j.at("backbone").get<std::vector<int>>();
    p.position = j.at("position").get<std::vector<int>>();
    p.assignment = j.at("assignment").get<std::vector<int>>();
    for (const auto& e : j.at("cut_edges"))
        p.cut_edges.push_back({e[0].get<int>(), e[1].get<int>()});
    p.delta_cut = j.at("delta_cut").get<double>();
    p.m = j.at("m").get<int>();
    p.gamma = j.at("gamma").get<double>();
    p.n_at_build = j.at("n_at_build").get<int>();
    p.m_at_build = j.at("m_at_build").get<int>();
    for (const auto& sj : j.at("subgraphs")) {
        Subgraph s;
        s.id = sj.at("id").get<int>();
        s.nodes = sj.at("nodes").get<std::vector<int>>();
        s.stub_count = sj.at("stub_count").get<int>();
        s.local_adjacency = sj.at("local_adjacency").get<std::vector<std::uint8_t>>();
        for (const auto& e : sj.at("intra_edges"))
            s.intra_edges.push_back({e[0].get<int>(), e[1].get<int>()});
        for (const auto& e : sj.at("virtual_edges")) {
            VirtualEdge ve;
            ve.a = e.at("a").get<int>();
            ve.b = e.at("b").get<int>();
            std::string tag = e.at("tag").get<std::string>();
            if (tag == "reconnection") ve.tag = VirtualEdgeTag::reconnection;
            else if (tag == "ganglion_stub") ve.tag = VirtualEdgeTag::ganglion_stub;
            else if (tag == "k_ring") ve.tag = VirtualEdgeTag::k_ring;
            else throw std::invalid_argument("unknown virtual edge tag " + tag);
            s.virtual_edges.push_back(ve);
        }
        s.boundary_nodes = sj.at("boundary_nodes").get<std::vector<int>>();
        p.subgraphs.push_back(std::move(s));
    }
    return p;
}

MetaGraph metagraph_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MetaGraph m;
    for (const auto& vj : j.at("vertices")) {
        MetaVertex v;
        std::string kind = vj.at("kind").get<std::string>();
        if (kind == "real") v.kind = MetaVertex::Kind::real;
        else if (kind == "slot") v.kind = MetaVertex::Kind::slot;
        else if (kind == "ganglion") v.kind = MetaVertex::Kind::ganglion;
        else throw std::invalid_argument("unknown meta vertex kind " + kind);
        v.node = vj.at("node").get<int>();
        v.subgraph = vj.at("subgraph").get<int>();
        v.ganglion = vj.at("ganglion").get<int>();
        v.is_key = vj.at("is_key").get<bool>();
        v.is_boundary = vj.at("is_boundary").get<bool>();
        m.vertices.push_back(v);
    }
    for (const auto& e : j.at("edges"))
        m.edges.push_back(MetaEdge{e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
    for (const auto& [key, val] : j.at("key_nodes").items())
        m.key_nodes[std::stoi(key)] = val.get<std::vector<int>>();
    m.boundary_nodes = j.at("boundary_nodes").get<std::vector<int>>();
    m.ganglion_count = j.at("ganglion_count").get<int>();
    m.budget = j.at("budget").get<int>();
    m.partition_digest = j.at("partition_digest").get<std::string>();
    return m;
}

} // namespace callosum
