#include "callosum/correlation.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace callosum {

namespace {
std::size_t g_pair_evaluations = 0;
}

std::size_t correlation_pair_evaluations() { return g_pair_evaluations; }

double pearson(const double* a, const double* b, int n) {
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

CorrelationMap correlation_map(const PrunedGraph& graph, int w, LedgerPtr ledger,
                               const std::string& stage) {
    const int T = graph.graph.timesteps;
    const int F = graph.graph.feature_dim;
    if (w < 1 || w > T - 1) throw std::invalid_argument("correlation window must satisfy 1 <= W <= T-1");

    g_pair_evaluations = 0;
    DataView data(graph, ledger, stage);

    CorrelationMap map;
    map.window = w;

    std::vector<double> va, vb;
    for (const auto& [u, v] : graph.edge_list()) {
        double sum = 0.0;
        int terms = 0;
        if (F >= 2) {
            va.resize(F);
            vb.resize(F);
            for (int t = 0; t < w && t + 1 < T; ++t) {
                for (int f = 0; f < F; ++f) {
                    va[f] = data.at(t, u, f);
                    vb[f] = data.at(t + 1, v, f);
                }
                sum += pearson(va.data(), vb.data(), F);
                ++g_pair_evaluations;
                ++terms;
            }
        } else {
            // scalar features: sliding windows of length w, shifted by one
            // step, averaged over every valid start so the estimate uses the
            // whole series
            va.resize(w);
            vb.resize(w);
            int max_start = T - w;
            for (int t = 0; t < max_start; ++t) {
                for (int i = 0; i < w; ++i) {
                    va[i] = data.at(t + i, u, 0);
                    vb[i] = data.at(t + i + 1, v, 0);
                }
                sum += pearson(va.data(), vb.data(), w);
                ++g_pair_evaluations;
                ++terms;
            }
        }
        map.set(u, v, terms > 0 ? sum / double(terms) : 0.0);
    }
    return map;
}

} // namespace callosum
