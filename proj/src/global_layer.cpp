#include "callosum/global_layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "callosum/rng.hpp"

namespace callosum {

namespace {

void glorot_fill(std::vector<double>& p, std::size_t off, std::size_t count, int fan_in,
                 int fan_out, Rng& rng) {
    double s = std::sqrt(6.0 / double(fan_in + fan_out));
    for (std::size_t i = 0; i < count; ++i) p[off + i] = rng.uniform(-s, s);
}

std::string u64_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::uint64_t hex_u64(const std::string& s) {
    std::uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= std::uint64_t(c - '0');
        else if (c >= 'a' && c <= 'f') v |= std::uint64_t(c - 'a' + 10);
        else throw std::invalid_argument("bad hex digit in checkpoint");
    }
    return v;
}

// y += M * x for row-major M (rows x cols)
void matvec_acc(const double* m, int rows, int cols, const double* x, double* y) {
    for (int r = 0; r < rows; ++r) {
        const double* mrow = m + std::size_t(r) * cols;
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += mrow[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T * x
void matvec_t_acc(const double* m, int rows, int cols, const double* x, double* y) {
    for (int r = 0; r < rows; ++r) {
        double xr = x[r];
        if (xr == 0.0) continue;
        const double* mrow = m + std::size_t(r) * cols;
        for (int c = 0; c < cols; ++c) y[c] += mrow[c] * xr;
    }
}

// G += a (outer) b for G rows x cols
void outer_acc(double* g, int rows, int cols, const double* a, const double* b) {
    for (int r = 0; r < rows; ++r) {
        double ar = a[r];
        if (ar == 0.0) continue;
        double* grow = g + std::size_t(r) * cols;
        for (int c = 0; c < cols; ++c) grow[c] += ar * b[c];
    }
}

} // namespace

std::size_t GlobalLayer::proj_block_size(int subgraph_id) const {
    int d_in = dims_.sub_widths.at(subgraph_id);
    return std::size_t(dims_.token_dim) * d_in + dims_.token_dim;
}

std::size_t GlobalLayer::proj_end() const {
    std::size_t off = 0;
    for (int id : proj_order_) off += proj_block_size(id);
    return off;
}

std::size_t GlobalLayer::mlp_end() const {
    const std::size_t D = dims_.token_dim;
    return proj_end() + std::size_t(ganglion_count_) * (2 * D * D + 2 * D);
}

std::size_t GlobalLayer::attn_per_layer() const {
    const std::size_t D = dims_.token_dim;
    const std::size_t hd = dims_.head_dim();
    return std::size_t(dims_.heads) * 3 * hd * D + D * D;
}

std::size_t GlobalLayer::off_proj(int subgraph_id) const {
    std::size_t off = 0;
    for (int id : proj_order_) {
        if (id == subgraph_id) return off;
        off += proj_block_size(id);
    }
    throw std::out_of_range("no projection block for subgraph " + std::to_string(subgraph_id));
}

std::size_t GlobalLayer::off_proj_bias(int subgraph_id) const {
    return off_proj(subgraph_id) + std::size_t(dims_.token_dim) * dims_.sub_widths.at(subgraph_id);
}

std::size_t GlobalLayer::off_mlp(int g) const {
    const std::size_t D = dims_.token_dim;
    return proj_end() + std::size_t(g) * (2 * D * D + 2 * D);
}

std::size_t GlobalLayer::off_attn(int layer, int head) const {
    const std::size_t D = dims_.token_dim;
    const std::size_t hd = dims_.head_dim();
    return mlp_end() + layer * attn_per_layer() + std::size_t(head) * 3 * hd * D;
}

std::size_t GlobalLayer::off_attn_out(int layer) const {
    const std::size_t D = dims_.token_dim;
    const std::size_t hd = dims_.head_dim();
    return mlp_end() + layer * attn_per_layer() + std::size_t(dims_.heads) * 3 * hd * D;
}

std::size_t GlobalLayer::off_edge_bias() const {
    return mlp_end() + std::size_t(dims_.layers) * attn_per_layer();
}

std::size_t GlobalLayer::off_alpha() const { return off_edge_bias() + edge_count_; }

std::size_t GlobalLayer::off_readout() const { return off_alpha() + 1; }

std::size_t GlobalLayer::param_count() const {
    return off_readout() + std::size_t(dims_.horizon) * dims_.token_dim + dims_.horizon;
}

GlobalLayer GlobalLayer::init(const MetaGraph& meta, const GlobalDims& dims,
                              const GlobalHyper& hyper, std::uint64_t seed) {
    dims.validate();
    if (hyper.lambda1 < 0.0 || hyper.lambda2 < 0.0)
        throw std::invalid_argument("regularizer weights must be non-negative");

    GlobalLayer gl;
    gl.dims_ = dims;
    gl.hyper_ = hyper;
    gl.seed_ = seed;
    gl.edge_count_ = int(meta.edges.size());
    gl.ganglion_count_ = meta.ganglion_count;
    for (const auto& [id, w] : dims.sub_widths) gl.proj_order_.push_back(id);
    std::sort(gl.proj_order_.begin(), gl.proj_order_.end());
    gl.params_.assign(gl.param_count(), 0.0);

    Rng rng(seed);
    const int D = dims.token_dim;
    const int hd = dims.head_dim();
    for (int id : gl.proj_order_) {
        int d_in = dims.sub_widths.at(id);
        glorot_fill(gl.params_, gl.off_proj(id), std::size_t(D) * d_in, d_in, D, rng);
    }
    for (int g = 0; g < gl.ganglion_count_; ++g) {
        std::size_t off = gl.off_mlp(g);
        glorot_fill(gl.params_, off, std::size_t(D) * D, D, D, rng);                // W1
        glorot_fill(gl.params_, off + std::size_t(D) * D + D, std::size_t(D) * D, D, D, rng);  // W2
    }
    for (int l = 0; l < dims.layers; ++l) {
        for (int h = 0; h < dims.heads; ++h)
            glorot_fill(gl.params_, gl.off_attn(l, h), std::size_t(3) * hd * D, D, hd, rng);
        glorot_fill(gl.params_, gl.off_attn_out(l), std::size_t(D) * D, D, D, rng);
    }
    for (int e = 0; e < gl.edge_count_; ++e)
        gl.params_[gl.off_edge_bias() + e] = meta.edges[e].weight;
    gl.params_[gl.off_alpha()] = hyper.alpha_init;
    // readout stays zero: a fresh layer passes sub-model predictions through
    return gl;
}

std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>
GlobalLayer::blocks() const {
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
    for (int id : proj_order_)
        out.push_back({"proj:" + std::to_string(id), {off_proj(id), proj_block_size(id)}});
    const std::size_t D = dims_.token_dim;
    for (int g = 0; g < ganglion_count_; ++g)
        out.push_back({"ganglion_mlp:" + std::to_string(g), {off_mlp(g), 2 * D * D + 2 * D}});
    for (int l = 0; l < dims_.layers; ++l) {
        for (int h = 0; h < dims_.heads; ++h)
            out.push_back({"attn:" + std::to_string(l) + ":" + std::to_string(h),
                           {off_attn(l, h), std::size_t(3) * dims_.head_dim() * D}});
        out.push_back({"attn_out:" + std::to_string(l), {off_attn_out(l), D * D}});
    }
    out.push_back({"edge_bias", {off_edge_bias(), std::size_t(edge_count_)}});
    out.push_back({"alpha", {off_alpha(), 1}});
    out.push_back({"readout", {off_readout(), std::size_t(dims_.horizon) * D + dims_.horizon}});
    return out;
}

GlobalWiring GlobalWiring::build(const MetaGraph& meta) {
    GlobalWiring w;
    w.meta = &meta;
    w.neighbors = meta.neighbor_lists();
    for (int e = 0; e < int(meta.edges.size()); ++e) {
        auto key = std::minmax(meta.edges[e].a, meta.edges[e].b);
        w.edge_index[{key.first, key.second}] = e;
    }
    for (int i = 0; i < int(meta.vertices.size()); ++i) {
        if (meta.vertices[i].kind == MetaVertex::Kind::ganglion)
            w.ganglion_vertices.push_back(i);
        else
            w.fused_vertices.push_back(i);
    }
    return w;
}

int GlobalWiring::edge_id(int a, int b) const {
    auto key = std::minmax(a, b);
    auto it = edge_index.find({key.first, key.second});
    if (it == edge_index.end())
        throw std::logic_error("attention mask inconsistent with meta edges");
    return it->second;
}

std::vector<double> fuse(const std::vector<double>& h_token,
                         const std::vector<double>& h_ganglion, double alpha) {
    if (h_token.size() != h_ganglion.size())
        throw std::invalid_argument("fuse: dimension mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fuse: alpha outside [0,1]");
    std::vector<double> out(h_token.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = alpha * h_token[i] + (1.0 - alpha) * h_ganglion[i];
    return out;
}

GlobalForward global_forward(const GlobalLayer& layer, const GlobalWiring& wiring,
                             const Partition& partition, const GlobalInputs& in) {
    const MetaGraph& meta = *wiring.meta;
    const auto& p = layer.params();
    const GlobalDims& dims = layer.dims();
    const int D = dims.token_dim;
    const int H = dims.heads;
    const int hd = dims.head_dim();
    const int L = dims.layers;
    const int P = dims.horizon;
    const int n = int(meta.vertices.size());
    const double inv_sqrt_hd = 1.0 / std::sqrt(double(hd));
    const double alpha = layer.alpha();

    GlobalForward fw;
    fw.tokens0 = Matrix(n, D, 0.0);

    // real and slot tokens first, ganglions aggregate from them
    std::map<int, std::vector<double>> slot_mean;
    for (const auto& [id, emb] : in.embeddings) {
        std::vector<double> mean(emb.cols, 0.0);
        if (emb.rows > 0) {
            for (std::size_t r = 0; r < emb.rows; ++r)
                for (std::size_t c = 0; c < emb.cols; ++c) mean[c] += emb(r, c);
            for (auto& x : mean) x /= double(emb.rows);
        }
        slot_mean[id] = std::move(mean);
    }

    for (int i = 0; i < n; ++i) {
        const MetaVertex& v = meta.vertices[i];
        if (v.kind == MetaVertex::Kind::real) {
            const auto& members = in.members.at(v.subgraph);
            auto it = std::lower_bound(members.begin(), members.end(), v.node);
            std::size_t row = std::size_t(it - members.begin());
            const Matrix& emb = in.embeddings.at(v.subgraph);
            const int d_in = int(emb.cols);
            double* tok = fw.tokens0.row(i);
            for (int r = 0; r < D; ++r) tok[r] = p[layer.off_proj_bias(v.subgraph) + r];
            matvec_acc(&p[layer.off_proj(v.subgraph)], D, d_in, emb.row(row), tok);
        } else if (v.kind == MetaVertex::Kind::slot) {
            const auto& mean = slot_mean.at(v.subgraph);
            double* tok = fw.tokens0.row(i);
            for (int r = 0; r < D; ++r) tok[r] = p[layer.off_proj_bias(v.subgraph) + r];
            matvec_acc(&p[layer.off_proj(v.subgraph)], D, int(mean.size()), mean.data(), tok);
        }
    }
    fw.gang_agg.resize(meta.ganglion_count);
    fw.gang_hidden.resize(meta.ganglion_count);
    fw.gang_embed.resize(meta.ganglion_count);
    for (int gi : wiring.ganglion_vertices) {
        int g = meta.vertices[gi].ganglion;
        std::vector<double> agg(D, 0.0);
        const auto& nb = wiring.neighbors[gi];
        if (!nb.empty()) {
            for (int u : nb)
                for (int r = 0; r < D; ++r) agg[r] += fw.tokens0(u, r);
            for (auto& x : agg) x /= double(nb.size());
        }
        std::size_t off = layer.off_mlp(g);
        const double* w1 = &p[off];
        const double* b1 = &p[off + std::size_t(D) * D];
        const double* w2 = &p[off + std::size_t(D) * D + D];
        const double* b2 = &p[off + 2 * std::size_t(D) * D + D];
        std::vector<double> hidden(D, 0.0), embed(D, 0.0);
        for (int r = 0; r < D; ++r) hidden[r] = b1[r];
        matvec_acc(w1, D, D, agg.data(), hidden.data());
        fw.gang_hidden[g] = hidden;  // pre-activation
        for (auto& x : hidden) x = x > 0.0 ? x : 0.0;
        for (int r = 0; r < D; ++r) embed[r] = b2[r];
        matvec_acc(w2, D, D, hidden.data(), embed.data());
        fw.gang_embed[g] = embed;
        for (int r = 0; r < D; ++r) fw.tokens0(gi, r) = embed[r];
        fw.gang_agg[g] = std::move(agg);
    }

    // masked multi-head attention stack with residuals
    fw.layer_in.resize(L + 1);
    fw.layer_in[0] = fw.tokens0;
    fw.q.assign(L, {});
    fw.k.assign(L, {});
    fw.v.assign(L, {});
    fw.attn.assign(L, {});
    fw.concat.resize(L);
    for (int l = 0; l < L; ++l) {
        const Matrix& z = fw.layer_in[l];
        fw.q[l].assign(H, Matrix(n, hd, 0.0));
        fw.k[l].assign(H, Matrix(n, hd, 0.0));
        fw.v[l].assign(H, Matrix(n, hd, 0.0));
        fw.attn[l].assign(H, Matrix(n, n, 0.0));
        fw.concat[l] = Matrix(n, D, 0.0);
        for (int h = 0; h < H; ++h) {
            std::size_t off = layer.off_attn(l, h);
            const double* wq = &p[off];
            const double* wk = &p[off + std::size_t(hd) * D];
            const double* wv = &p[off + 2 * std::size_t(hd) * D];
            for (int i = 0; i < n; ++i) {
                matvec_acc(wq, hd, D, z.row(i), fw.q[l][h].row(i));
                matvec_acc(wk, hd, D, z.row(i), fw.k[l][h].row(i));
                matvec_acc(wv, hd, D, z.row(i), fw.v[l][h].row(i));
            }
            for (int i = 0; i < n; ++i) {
                const auto& nb = wiring.neighbors[i];
                if (nb.empty()) continue;
                double max_score = -1e300;
                std::vector<double> scores(nb.size());
                for (std::size_t jj = 0; jj < nb.size(); ++jj) {
                    int j = nb[jj];
                    double s = 0.0;
                    const double* qi = fw.q[l][h].row(i);
                    const double* kj = fw.k[l][h].row(j);
                    for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
                    s = s * inv_sqrt_hd + p[layer.off_edge_bias() + wiring.edge_id(i, j)];
                    scores[jj] = s;
                    if (s > max_score) max_score = s;
                }
                double denom = 0.0;
                for (double& s : scores) {
                    s = std::exp(s - max_score);
                    denom += s;
                }
                for (std::size_t jj = 0; jj < nb.size(); ++jj)
                    fw.attn[l][h](i, nb[jj]) = scores[jj] / denom;
                double* crow = fw.concat[l].row(i) + std::size_t(h) * hd;
                for (std::size_t jj = 0; jj < nb.size(); ++jj) {
                    int j = nb[jj];
                    double a = fw.attn[l][h](i, j);
                    const double* vj = fw.v[l][h].row(j);
                    for (int c = 0; c < hd; ++c) crow[c] += a * vj[c];
                }
            }
        }
        Matrix next(n, D, 0.0);
        const double* wo = &p[layer.off_attn_out(l)];
        for (int i = 0; i < n; ++i) {
            const double* zi = z.row(i);
            double* ni = next.row(i);
            for (int r = 0; r < D; ++r) ni[r] = zi[r];
            matvec_acc(wo, D, D, fw.concat[l].row(i), ni);
        }
        fw.layer_in[l + 1] = std::move(next);
    }

    // fusion of token and ganglion streams, then correction readout
    const Matrix& zl = fw.layer_in[L];
    for (int x : wiring.fused_vertices) {
        std::vector<double> gm(D, 0.0);
        int count = 0;
        for (int j : wiring.neighbors[x])
            if (meta.vertices[j].kind == MetaVertex::Kind::ganglion) {
                for (int r = 0; r < D; ++r) gm[r] += zl(j, r);
                ++count;
            }
        if (count > 0)
            for (auto& vgm : gm) vgm /= double(count);
        std::vector<double> tok(zl.row(x), zl.row(x) + D);
        fw.fused[x] = fuse(tok, gm, alpha);
        fw.gang_mean[x] = std::move(gm);
    }

    const double* readout = &p[layer.off_readout()];
    const double* readout_bias = readout + std::size_t(P) * D;
    fw.predictions.assign(in.base.size(), 0.0);
    for (int node : in.real_nodes) {
        int vx = meta.vertex_of_node(node);
        if (vx < 0) vx = meta.vertex_of_slot(partition.assignment[node]);
        const auto& fused = fw.fused.at(vx);
        for (int k = 0; k < P; ++k) {
            double c = readout_bias[k];
            const double* rrow = readout + std::size_t(k) * D;
            for (int r = 0; r < D; ++r) c += rrow[r] * fused[r];
            fw.predictions[std::size_t(node) * P + k] = in.base[std::size_t(node) * P + k] + c;
        }
    }
    return fw;
}

double global_loss(const GlobalLayer& layer, const GlobalWiring& wiring,
                   const Partition& partition, const std::vector<GlobalInputs>& batch,
                   const std::vector<Matrix>& targets, std::vector<double>* grad) {
    const MetaGraph& meta = *wiring.meta;
    const auto& p = layer.params();
    const GlobalDims& dims = layer.dims();
    const int D = dims.token_dim;
    const int H = dims.heads;
    const int hd = dims.head_dim();
    const int L = dims.layers;
    const int P = dims.horizon;
    const int n = int(meta.vertices.size());
    const double inv_sqrt_hd = 1.0 / std::sqrt(double(hd));
    const double alpha = layer.alpha();
    const double B = double(batch.size());

    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const GlobalInputs& in = batch[b];
        GlobalForward fw = global_forward(layer, wiring, partition, in);

        // data term and lambda2 ganglion penalty
        double window_loss = 0.0;
        for (std::size_t vi = 0; vi < in.real_nodes.size(); ++vi) {
            int node = in.real_nodes[vi];
            for (int k = 0; k < P; ++k) {
                double diff = fw.predictions[std::size_t(node) * P + k] - targets[b](vi, k);
                window_loss += diff * diff;
            }
        }
        for (int g = 0; g < meta.ganglion_count; ++g)
            for (int r = 0; r < D; ++r)
                window_loss += layer.hyper().lambda2 * fw.gang_embed[g][r] * fw.gang_embed[g][r];
        loss += window_loss;
        if (!grad) continue;

        std::vector<double>& gr = *grad;
        const double* readout = &p[layer.off_readout()];

        // corrections backward
        std::map<int, std::vector<double>> dfused;
        for (std::size_t vi = 0; vi < in.real_nodes.size(); ++vi) {
            int node = in.real_nodes[vi];
            int vx = meta.vertex_of_node(node);
            if (vx < 0) vx = meta.vertex_of_slot(partition.assignment[node]);
            auto& df = dfused[vx];
            if (df.empty()) df.assign(D, 0.0);
            const auto& fused = fw.fused.at(vx);
            for (int k = 0; k < P; ++k) {
                double dy =
                    2.0 * (fw.predictions[std::size_t(node) * P + k] - targets[b](vi, k)) / B;
                if (dy == 0.0) continue;
                gr[layer.off_readout() + std::size_t(P) * D + k] += dy;  // bias
                double* grrow = &gr[layer.off_readout() + std::size_t(k) * D];
                const double* rrow = readout + std::size_t(k) * D;
                for (int r = 0; r < D; ++r) {
                    grrow[r] += dy * fused[r];
                    df[r] += dy * rrow[r];
                }
            }
        }

        // fusion backward into final-layer tokens
        Matrix dz(n, D, 0.0);
        double dalpha = 0.0;
        const Matrix& zl = fw.layer_in[L];
        for (auto& [x, df] : dfused) {
            const auto& gm = fw.gang_mean.at(x);
            int count = 0;
            for (int j : wiring.neighbors[x])
                if (meta.vertices[j].kind == MetaVertex::Kind::ganglion) ++count;
            for (int r = 0; r < D; ++r) {
                dz(x, r) += alpha * df[r];
                dalpha += df[r] * (zl(x, r) - gm[r]);
            }
            if (count > 0) {
                double w = (1.0 - alpha) / double(count);
                for (int j : wiring.neighbors[x])
                    if (meta.vertices[j].kind == MetaVertex::Kind::ganglion)
                        for (int r = 0; r < D; ++r) dz(j, r) += w * df[r];
            }
        }
        gr[layer.off_alpha()] += dalpha;

        // attention stack backward
        for (int l = L - 1; l >= 0; --l) {
            const Matrix& zin = fw.layer_in[l];
            Matrix dzin(n, D, 0.0);
            const double* wo = &p[layer.off_attn_out(l)];
            double* gwo = &gr[layer.off_attn_out(l)];
            Matrix dconcat(n, D, 0.0);
            for (int i = 0; i < n; ++i) {
                const double* dzi = dz.row(i);
                // residual
                double* dzini = dzin.row(i);
                for (int r = 0; r < D; ++r) dzini[r] += dzi[r];
                outer_acc(gwo, D, D, dzi, fw.concat[l].row(i));
                matvec_t_acc(wo, D, D, dzi, dconcat.row(i));
            }
            for (int h = 0; h < H; ++h) {
                std::size_t off = layer.off_attn(l, h);
                const double* wq = &p[off];
                const double* wk = &p[off + std::size_t(hd) * D];
                const double* wv = &p[off + 2 * std::size_t(hd) * D];
                double* gwq = &gr[off];
                double* gwk = &gr[off + std::size_t(hd) * D];
                double* gwv = &gr[off + 2 * std::size_t(hd) * D];

                Matrix dq(n, hd, 0.0), dk(n, hd, 0.0), dv(n, hd, 0.0);
                for (int i = 0; i < n; ++i) {
                    const auto& nb = wiring.neighbors[i];
                    if (nb.empty()) continue;
                    const double* dhead = dconcat.row(i) + std::size_t(h) * hd;
                    // d attn and softmax jacobian
                    std::vector<double> da(nb.size(), 0.0);
                    double inner = 0.0;
                    for (std::size_t jj = 0; jj < nb.size(); ++jj) {
                        int j = nb[jj];
                        const double* vj = fw.v[l][h].row(j);
                        double acc = 0.0;
                        for (int c = 0; c < hd; ++c) acc += dhead[c] * vj[c];
                        da[jj] = acc;
                        inner += fw.attn[l][h](i, j) * acc;
                        double aij = fw.attn[l][h](i, j);
                        double* dvj = dv.row(j);
                        for (int c = 0; c < hd; ++c) dvj[c] += aij * dhead[c];
                    }
                    for (std::size_t jj = 0; jj < nb.size(); ++jj) {
                        int j = nb[jj];
                        double aij = fw.attn[l][h](i, j);
                        double ds = aij * (da[jj] - inner);
                        if (ds == 0.0) continue;
                        gr[layer.off_edge_bias() + wiring.edge_id(i, j)] += ds;
                        const double* kj = fw.k[l][h].row(j);
                        const double* qi = fw.q[l][h].row(i);
                        double* dqi = dq.row(i);
                        double* dkj = dk.row(j);
                        for (int c = 0; c < hd; ++c) {
                            dqi[c] += ds * inv_sqrt_hd * kj[c];
                            dkj[c] += ds * inv_sqrt_hd * qi[c];
                        }
                    }
                }
                for (int i = 0; i < n; ++i) {
                    outer_acc(gwq, hd, D, dq.row(i), zin.row(i));
                    outer_acc(gwk, hd, D, dk.row(i), zin.row(i));
                    outer_acc(gwv, hd, D, dv.row(i), zin.row(i));
                    matvec_t_acc(wq, hd, D, dq.row(i), dzin.row(i));
                    matvec_t_acc(wk, hd, D, dk.row(i), dzin.row(i));
                    matvec_t_acc(wv, hd, D, dv.row(i), dzin.row(i));
                }
            }
            dz = std::move(dzin);
        }

        // lambda2 penalty reaches the ganglion tokens directly
        for (int gi : wiring.ganglion_vertices) {
            int g = meta.vertices[gi].ganglion;
            for (int r = 0; r < D; ++r)
                dz(gi, r) += 2.0 * layer.hyper().lambda2 * fw.gang_embed[g][r] / B;
        }

        // ganglion MLPs backward, distributing into real/slot token grads
        for (int gi : wiring.ganglion_vertices) {
            int g = meta.vertices[gi].ganglion;
            std::size_t off = layer.off_mlp(g);
            const double* w1 = &p[off];
            const double* w2 = &p[off + std::size_t(D) * D + D];
            double* gw1 = &gr[off];
            double* gb1 = &gr[off + std::size_t(D) * D];
            double* gw2 = &gr[off + std::size_t(D) * D + D];
            double* gb2 = &gr[off + 2 * std::size_t(D) * D + D];

            const double* dhg = dz.row(gi);
            std::vector<double> hidden_post(D);
            for (int r = 0; r < D; ++r)
                hidden_post[r] = fw.gang_hidden[g][r] > 0.0 ? fw.gang_hidden[g][r] : 0.0;
            for (int r = 0; r < D; ++r) gb2[r] += dhg[r];
            outer_acc(gw2, D, D, dhg, hidden_post.data());
            std::vector<double> dhidden(D, 0.0);
            matvec_t_acc(w2, D, D, dhg, dhidden.data());
            for (int r = 0; r < D; ++r)
                if (fw.gang_hidden[g][r] <= 0.0) dhidden[r] = 0.0;
            for (int r = 0; r < D; ++r) gb1[r] += dhidden[r];
            outer_acc(gw1, D, D, dhidden.data(), fw.gang_agg[g].data());
            std::vector<double> dagg(D, 0.0);
            matvec_t_acc(w1, D, D, dhidden.data(), dagg.data());
            const auto& nb = wiring.neighbors[gi];
            if (!nb.empty()) {
                double w = 1.0 / double(nb.size());
                for (int u : nb)
                    for (int r = 0; r < D; ++r) dz(u, r) += w * dagg[r];
            }
        }

        // projections backward
        std::map<int, std::vector<double>> slot_mean;
        for (const auto& [id, emb] : in.embeddings) {
            std::vector<double> mean(emb.cols, 0.0);
            if (emb.rows > 0) {
                for (std::size_t r = 0; r < emb.rows; ++r)
                    for (std::size_t c = 0; c < emb.cols; ++c) mean[c] += emb(r, c);
                for (auto& x : mean) x /= double(emb.rows);
            }
            slot_mean[id] = std::move(mean);
        }
        for (int i = 0; i < n; ++i) {
            const MetaVertex& mv = meta.vertices[i];
            if (mv.kind == MetaVertex::Kind::ganglion) continue;
            const double* dtok = dz.row(i);
            int sid = mv.subgraph;
            const int d_in = int(in.embeddings.at(sid).cols);
            double* gproj = &gr[layer.off_proj(sid)];
            double* gbias = &gr[layer.off_proj_bias(sid)];
            const double* input = nullptr;
            if (mv.kind == MetaVertex::Kind::real) {
                const auto& members = in.members.at(sid);
                auto it = std::lower_bound(members.begin(), members.end(), mv.node);
                input = in.embeddings.at(sid).row(std::size_t(it - members.begin()));
            } else {
                input = slot_mean.at(sid).data();
            }
            for (int r = 0; r < D; ++r) gbias[r] += dtok[r];
            outer_acc(gproj, D, d_in, dtok, input);
        }
    }

    loss /= B;

    // L1 on the trainable meta-adjacency, counted once per batch
    double l1 = 0.0;
    for (int e = 0; e < layer.edge_count(); ++e)
        l1 += std::fabs(p[layer.off_edge_bias() + e]);
    loss += layer.hyper().lambda1 * l1;
    if (grad) {
        for (int e = 0; e < layer.edge_count(); ++e) {
            double w = p[layer.off_edge_bias() + e];
            double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
            (*grad)[layer.off_edge_bias() + e] += layer.hyper().lambda1 * sign;
        }
    }
    return loss;
}

GlobalTrainResult train_global(GlobalLayer& layer, const GlobalWiring& wiring,
                               const Partition& partition,
                               const std::vector<GlobalInputs>& windows,
                               const std::vector<Matrix>& targets, const TrainConfig& cfg,
                               std::uint64_t order_seed) {
    cfg.validate();
    if (windows.empty()) throw std::invalid_argument("train_global: no training windows");

    Rng order_rng(order_seed);
    GlobalTrainResult out;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> schedule(windows.size());
        for (std::size_t i = 0; i < windows.size(); ++i) schedule[i] = int(i);
        order_rng.shuffle(schedule);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < schedule.size(); start += cfg.batch) {
            std::size_t stop = std::min(schedule.size(), start + cfg.batch);
            std::vector<GlobalInputs> binputs;
            std::vector<Matrix> btargets;
            for (std::size_t i = start; i < stop; ++i) {
                binputs.push_back(windows[schedule[i]]);
                btargets.push_back(targets[schedule[i]]);
            }
            std::vector<double> grad(layer.param_count(), 0.0);
            double loss = global_loss(layer, wiring, partition, binputs, btargets, &grad);
            epoch_loss += loss;
            ++batches;

            double norm_sq = 0.0;
            for (double g : grad) norm_sq += g * g;
            double norm = std::sqrt(norm_sq);
            double scale = cfg.learning_rate;
            if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) scale *= cfg.grad_clip / norm;
            auto& p = layer.mutable_params();
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= scale * grad[i];
            layer.clip_alpha();
        }
        epoch_loss /= double(batches);
        out.epoch_losses.push_back(epoch_loss);
        out.epochs_run = epoch + 1;
        if (cfg.stop_loss > 0.0 && epoch_loss < cfg.stop_loss) break;
    }
    return out;
}

std::string GlobalLayer::checkpoint_json() const {
    nlohmann::json j;
    j["kind"] = "global_layer";
    j["token_dim"] = dims_.token_dim;
    j["heads"] = dims_.heads;
    j["layers"] = dims_.layers;
    j["horizon"] = dims_.horizon;
    nlohmann::json widths;
    for (const auto& [id, w] : dims_.sub_widths) widths[std::to_string(id)] = w;
    j["sub_widths"] = widths;
    j["lambda1"] = hyper_.lambda1;
    j["lambda2"] = hyper_.lambda2;
    j["alpha_init"] = hyper_.alpha_init;
    j["seed"] = u64_hex(seed_);
    j["edge_count"] = edge_count_;
    j["ganglion_count"] = ganglion_count_;
    nlohmann::json params = nlohmann::json::array();
    for (double v : params_) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        params.push_back(u64_hex(bits));
    }
    j["params"] = params;
    return j.dump(2) + "\n";
}

GlobalLayer GlobalLayer::from_checkpoint_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GlobalLayer gl;
    gl.dims_.token_dim = j.at("token_dim").get<int>();
    gl.dims_.heads = j.at("heads").get<int>();
    gl.dims_.layers = j.at("layers").get<int>();
    gl.dims_.horizon = j.at("horizon").get<int>();
    for (const auto& [key, val] : j.at("sub_widths").items())
        gl.dims_.sub_widths[std::stoi(key)] = val.get<int>();
    gl.hyper_.lambda1 = j.at("lambda1").get<double>();
    gl.hyper_.lambda2 = j.at("lambda2").get<double>();
    gl.hyper_.alpha_init = j.at("alpha_init").get<double>();
    gl.seed_ = hex_u64(j.at("seed").get<std::string>());
    gl.edge_count_ = j.at("edge_count").get<int>();
    gl.ganglion_count_ = j.at("ganglion_count").get<int>();
    for (const auto& [id, w] : gl.dims_.sub_widths) gl.proj_order_.push_back(id);
    std::sort(gl.proj_order_.begin(), gl.proj_order_.end());
    gl.params_.resize(gl.param_count());
    const auto& arr = j.at("params");
    if (arr.size() != gl.params_.size())
        throw std::invalid_argument("global checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < gl.params_.size(); ++i) {
        std::uint64_t bits = hex_u64(arr[i].get<std::string>());
        std::memcpy(&gl.params_[i], &bits, 8);
    }
    return gl;
}

} // namespace callosum
