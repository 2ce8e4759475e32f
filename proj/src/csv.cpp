#include "callosum/csv.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace callosum {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::string& context) {
    if (s.empty()) throw std::invalid_argument("empty numeric field in " + context);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw std::invalid_argument("non-numeric value '" + s + "' in " + context);
    return v;
}

long parse_int(const std::string& s, const std::string& context) {
    double v = parse_number(s, context);
    long l = static_cast<long>(v);
    if (double(l) != v)
        throw std::invalid_argument("expected integer, got '" + s + "' in " + context);
    return l;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

STGraph ingest_csv(const std::string& feature_path, const std::string& edge_path) {
    std::ifstream fin(feature_path);
    if (!fin) throw std::runtime_error("cannot open feature file: " + feature_path);

    std::string line;
    if (!std::getline(fin, line)) throw std::invalid_argument("feature file is empty");
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "node_id" || header[1] != "timestep")
        throw std::invalid_argument("feature file header must be node_id,timestep,f_0[,...]");
    int feature_dim = int(header.size()) - 2;

    std::vector<std::string> order;                    // first-appearance node order
    std::unordered_map<std::string, int> index;
    // per node: timestep -> feature row
    std::vector<std::map<long, std::vector<double>>> rows;

    std::size_t lineno = 1;
    while (std::getline(fin, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("feature row " + std::to_string(lineno) +
                                        " has wrong field count");
        const std::string& id = cells[0];
        auto [it, inserted] = index.try_emplace(id, int(order.size()));
        if (inserted) {
            order.push_back(id);
            rows.emplace_back();
        }
        long t = parse_int(cells[1], "feature file line " + std::to_string(lineno));
        if (t < 0) throw std::invalid_argument("negative timestep for node " + id);
        std::vector<double> f(feature_dim);
        for (int k = 0; k < feature_dim; ++k)
            f[k] = parse_number(cells[2 + k], "feature file line " + std::to_string(lineno));
        auto [rit, fresh] = rows[it->second].emplace(t, std::move(f));
        if (!fresh)
            throw std::invalid_argument("duplicate timestep " + std::to_string(t) +
                                        " for node " + id);
    }
    if (order.empty()) throw std::invalid_argument("feature file has no data rows");

    // timesteps must be dense 0..T-1 for every node, same T everywhere
    long T = long(rows[0].size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& m = rows[i];
        if (long(m.size()) != T || m.begin()->first != 0 || m.rbegin()->first != T - 1)
            throw std::invalid_argument("node " + order[i] +
                                        " is missing timesteps (need dense 0..T-1)");
    }
    if (T < 2) throw std::invalid_argument("need at least 2 timesteps");

    STGraph g;
    g.node_count = int(order.size());
    g.timesteps = int(T);
    g.feature_dim = feature_dim;
    g.node_ids = order;
    g.adjacency.assign(std::size_t(g.node_count) * g.node_count, 0);
    g.features.resize(std::size_t(T) * g.node_count * feature_dim);
    for (int v = 0; v < g.node_count; ++v) {
        long t = 0;
        for (const auto& [ts, f] : rows[v]) {
            for (int k = 0; k < feature_dim; ++k) g.feature(int(t), v, k) = f[k];
            ++t;
        }
    }

    std::ifstream ein(edge_path);
    if (!ein) throw std::runtime_error("cannot open edge file: " + edge_path);
    if (!std::getline(ein, line)) throw std::invalid_argument("edge file is empty");
    auto eheader = split_csv_line(line);
    if (eheader.size() != 2 || eheader[0] != "src_id" || eheader[1] != "dst_id")
        throw std::invalid_argument("edge file header must be src_id,dst_id");
    lineno = 1;
    while (std::getline(ein, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 2)
            throw std::invalid_argument("edge row " + std::to_string(lineno) +
                                        " has wrong field count");
        auto su = index.find(cells[0]);
        if (su == index.end())
            throw std::invalid_argument("edge file references unknown node id \"" + cells[0] + "\"");
        auto sv = index.find(cells[1]);
        if (sv == index.end())
            throw std::invalid_argument("edge file references unknown node id \"" + cells[1] + "\"");
        if (su->second == sv->second) continue;  // ignore self loops
        g.set_edge(su->second, sv->second, true);
    }

    g.validate();
    return g;
}

void export_csv(const STGraph& graph, const std::string& feature_path,
                const std::string& edge_path) {
    std::ofstream fout(feature_path);
    if (!fout) throw std::runtime_error("cannot write feature file: " + feature_path);
    fout << "node_id,timestep";
    for (int k = 0; k < graph.feature_dim; ++k) fout << ",f_" << k;
    fout << "\n";
    for (int v = 0; v < graph.node_count; ++v) {
        for (int t = 0; t < graph.timesteps; ++t) {
            fout << graph.node_ids[v] << ',' << t;
            for (int k = 0; k < graph.feature_dim; ++k)
                fout << ',' << format_double(graph.feature(t, v, k));
            fout << "\n";
        }
    }

    std::ofstream eout(edge_path);
    if (!eout) throw std::runtime_error("cannot write edge file: " + edge_path);
    eout << "src_id,dst_id\n";
    for (int u = 0; u < graph.node_count; ++u)
        for (int v = 0; v < graph.node_count; ++v)
            if (graph.edge(u, v)) eout << graph.node_ids[u] << ',' << graph.node_ids[v] << "\n";
}

} // namespace callosum
