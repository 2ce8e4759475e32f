#include "callosum/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "callosum/rng.hpp"

namespace callosum {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

} // namespace

SyntheticData generate_synthetic(int n, int t, std::uint64_t seed, double diffusion_rate) {
    if (n < 4) throw std::invalid_argument("generate_synthetic requires n >= 4");
    if (t < 64) throw std::invalid_argument("generate_synthetic requires t >= 64");
    if (!(diffusion_rate >= 0.0 && diffusion_rate < 1.0))
        throw std::invalid_argument("diffusion_rate must lie in [0,1)");

    Rng rng(seed);

    // Clustered geometric layout, like a sensor network: nodes scatter around
    // cluster centers and link to their nearest neighbors, so most edges stay
    // inside a cluster and the stitching step adds a few bridges.
    const int clusters = std::max(2, (n + 5) / 10);
    const int grid = int(std::ceil(std::sqrt(double(clusters))));
    std::vector<double> cx(clusters), cy(clusters);
    for (int c = 0; c < clusters; ++c) {
        cx[c] = (c % grid + 0.5) / grid + 0.05 * rng.normal();
        cy[c] = (c / grid + 0.5) / grid + 0.05 * rng.normal();
    }
    std::vector<double> px(n), py(n);
    for (int i = 0; i < n; ++i) {
        int c = (i * clusters) / n;  // equal-size clusters, contiguous ids
        px[i] = cx[c] + 0.06 * rng.normal();
        py[i] = cy[c] + 0.06 * rng.normal();
    }
    auto dist2 = [&](int a, int b) {
        double dx = px[a] - px[b], dy = py[a] - py[b];
        return dx * dx + dy * dy;
    };

    STGraph g;
    g.node_count = n;
    g.timesteps = t;
    g.feature_dim = 1;
    g.adjacency.assign(std::size_t(n) * n, 0);
    g.node_ids.resize(n);
    for (int i = 0; i < n; ++i) g.node_ids[i] = "n" + std::to_string(i);

    const int k_nearest = std::max(2, n / clusters - 1);  // clusters come out near-complete
    for (int i = 0; i < n; ++i) {
        std::vector<int> others;
        for (int j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::sort(others.begin(), others.end(), [&](int a, int b) {
            double da = dist2(i, a), db = dist2(i, b);
            if (da != db) return da < db;
            return a < b;
        });
        for (int k = 0; k < k_nearest && k < int(others.size()); ++k) {
            g.set_edge(i, others[k], true);
            g.set_edge(others[k], i, true);
        }
    }

    UnionFind uf(n);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (g.edge(u, v)) uf.unite(u, v);
    for (;;) {
        // connect the lexicographically closest cross-component pair
        int best_u = -1, best_v = -1;
        double best_d = 0.0;
        for (int u = 0; u < n; ++u) {
            for (int v = u + 1; v < n; ++v) {
                if (uf.find(u) == uf.find(v)) continue;
                double d = dist2(u, v);
                if (best_u < 0 || d < best_d) {
                    best_d = d;
                    best_u = u;
                    best_v = v;
                }
            }
        }
        if (best_u < 0) break;
        g.set_edge(best_u, best_v, true);
        g.set_edge(best_v, best_u, true);
        uf.unite(best_u, best_v);
    }

    // Diffusion dynamics with a burn-in so the recorded series starts in the
    // coupled regime, plus 8 steps past T for the held-out block. Each cluster
    // also receives a shared innovation (regional surges), scaled by the
    // diffusion rate so that rate zero still produces independent series.
    const int extra = 8;
    const int burn_in = 128;
    const double noise_scale = 0.05;
    const double regional_scale = 0.15 * diffusion_rate;
    std::vector<std::vector<int>> in_neighbors(n);
    for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u)
            if (g.edge(u, v)) in_neighbors[v].push_back(u);

    Matrix series(burn_in + t + extra, n);
    for (int v = 0; v < n; ++v) series(0, v) = rng.normal();
    std::vector<double> regional(clusters);
    for (int step = 1; step < burn_in + t + extra; ++step) {
        for (int c = 0; c < clusters; ++c) regional[c] = regional_scale * rng.normal();
        for (int v = 0; v < n; ++v) {
            double prev = series(step - 1, v);
            double mix = 0.0;
            if (!in_neighbors[v].empty()) {
                for (int u : in_neighbors[v]) mix += series(step - 1, u);
                mix /= double(in_neighbors[v].size());
            } else {
                mix = prev;
            }
            series(step, v) = (1.0 - diffusion_rate) * prev + diffusion_rate * mix +
                              noise_scale * rng.normal() + regional[(v * clusters) / n];
        }
    }

    g.features.resize(std::size_t(t) * n);
    for (int step = 0; step < t; ++step)
        for (int v = 0; v < n; ++v) g.feature(step, v, 0) = series(burn_in + step, v);
    g.validate();

    SyntheticData out;
    out.graph = std::move(g);
    out.held_out = Matrix(extra, n);
    for (int step = 0; step < extra; ++step)
        for (int v = 0; v < n; ++v) out.held_out(step, v) = series(burn_in + t + step, v);
    return out;
}

} // namespace callosum
