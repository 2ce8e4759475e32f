#pragma once

#include "callosum/dense.hpp"
#include "callosum/stgraph.hpp"

namespace callosum {

struct SyntheticData {
    STGraph graph;
    Matrix held_out;  // 8 steps beyond the graph's horizon, rows = steps, cols = nodes
};

// Desk-scale benchmark generator: a random connected geometric-style graph
// whose node series follow a neighbor-diffusion process
//   x[t+1,v] = (1-rate) * x[t,v] + rate * mean(x[t,u] : u -> v) + noise,
// so temporal correlation genuinely follows edges. Pure function of its
// arguments.
SyntheticData generate_synthetic(int n, int t, std::uint64_t seed, double diffusion_rate);

} // namespace callosum
