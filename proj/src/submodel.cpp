#include "callosum/submodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "callosum/rng.hpp"
#include "callosum/sha256.hpp"

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

} // namespace

SubModel SubModel::init(int subgraph_id, const SubModelDims& dims, std::uint64_t seed) {
    SubModel m;
    m.subgraph_id_ = subgraph_id;
    m.dims_ = dims;
    m.seed_ = seed;
    m.params_.assign(m.param_count(), 0.0);

    Rng rng(seed);
    const int d = dims.width;
    glorot_fill(m.params_, m.off_wg(), std::size_t(dims.feature_dim) * d, dims.feature_dim, d,
                rng);
    // biases stay zero
    glorot_fill(m.params_, m.off_wt(), std::size_t(dims.window) * d * d, dims.window * d, d, rng);
    glorot_fill(m.params_, m.off_wr(), std::size_t(d) * dims.horizon, d, dims.horizon, rng);
    return m;
}

Matrix normalized_adjacency(const Subgraph& sub) {
    const int n = sub.local_count();
    Matrix ahat(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        double row_sum = 1.0;  // self loop
        for (int j = 0; j < n; ++j)
            if (j != i && sub.local_edge(i, j)) row_sum += 1.0;
        ahat(i, i) = 1.0 / row_sum;
        for (int j = 0; j < n; ++j)
            if (j != i && sub.local_edge(i, j)) ahat(i, j) = 1.0 / row_sum;
    }
    return ahat;
}

SubForward submodel_forward(const SubModel& model, const Matrix& ahat,
                            const std::vector<Matrix>& window_inputs) {
    const auto& dims = model.dims();
    const int n = dims.local_nodes;
    const int F = dims.feature_dim;
    const int d = dims.width;
    const int W = dims.window;
    const int P = dims.horizon;
    const auto& p = model.params();

    SubForward out;
    out.gconv_in.resize(W);
    out.gconv_pre.resize(W);

    // graph conv per window step: relu(A_hat * X[t] * Wg + bg)
    std::vector<Matrix> gpost(W);
    for (int t = 0; t < W; ++t) {
        out.gconv_in[t] = matmul(ahat, window_inputs[t]);  // n x F
        Matrix pre(n, d);
        for (int v = 0; v < n; ++v) {
            const double* xin = out.gconv_in[t].row(v);
            double* prow = pre.row(v);
            for (int j = 0; j < d; ++j) prow[j] = p[model.off_bg() + j];
            for (int f = 0; f < F; ++f) {
                double xv = xin[f];
                if (xv == 0.0) continue;
                const double* wrow = &p[model.off_wg() + std::size_t(f) * d];
                for (int j = 0; j < d; ++j) prow[j] += xv * wrow[j];
            }
        }
        out.gconv_pre[t] = pre;
        gpost[t] = pre;
        for (double& x : gpost[t].data) x = x > 0.0 ? x : 0.0;
    }

    // temporal conv with full-window kernel: relu(sum_t G[t] * Wt[t] + bt)
    out.temporal_pre = Matrix(n, d);
    for (int v = 0; v < n; ++v) {
        double* srow = out.temporal_pre.row(v);
        for (int j = 0; j < d; ++j) srow[j] = p[model.off_bt() + j];
    }
    for (int t = 0; t < W; ++t) {
        const std::size_t wt_off = model.off_wt() + std::size_t(t) * d * d;
        for (int v = 0; v < n; ++v) {
            const double* grow = gpost[t].row(v);
            double* srow = out.temporal_pre.row(v);
            for (int i = 0; i < d; ++i) {
                double gv = grow[i];
                if (gv == 0.0) continue;
                const double* wrow = &p[wt_off + std::size_t(i) * d];
                for (int j = 0; j < d; ++j) srow[j] += gv * wrow[j];
            }
        }
    }
    out.embeddings = out.temporal_pre;
    for (double& x : out.embeddings.data) x = x > 0.0 ? x : 0.0;

    // linear readout
    out.preds = Matrix(n, P);
    for (int v = 0; v < n; ++v) {
        const double* srow = out.embeddings.row(v);
        double* yrow = out.preds.row(v);
        for (int k = 0; k < P; ++k) yrow[k] = p[model.off_br() + k];
        for (int i = 0; i < d; ++i) {
            double sv = srow[i];
            if (sv == 0.0) continue;
            const double* wrow = &p[model.off_wr() + std::size_t(i) * P];
            for (int k = 0; k < P; ++k) yrow[k] += sv * wrow[k];
        }
    }
    return out;
}

void submodel_backward(const SubModel& model, const Matrix& ahat, const SubForward& fwd,
                       const Matrix& dpreds, std::vector<double>& grad) {
    const auto& dims = model.dims();
    const int n = dims.local_nodes;
    const int F = dims.feature_dim;
    const int d = dims.width;
    const int W = dims.window;
    const int P = dims.horizon;
    const auto& p = model.params();

    // readout
    Matrix demb(n, d, 0.0);
    for (int v = 0; v < n; ++v) {
        const double* dy = dpreds.row(v);
        const double* srow = fwd.embeddings.row(v);
        double* de = demb.row(v);
        for (int k = 0; k < P; ++k) grad[model.off_br() + k] += dy[k];
        for (int i = 0; i < d; ++i) {
            double* gw = &grad[model.off_wr() + std::size_t(i) * P];
            const double* ww = &p[model.off_wr() + std::size_t(i) * P];
            double acc = 0.0;
            for (int k = 0; k < P; ++k) {
                gw[k] += srow[i] * dy[k];
                acc += ww[k] * dy[k];
            }
            de[i] += acc;
        }
    }

    // temporal activation
    Matrix dtemp(n, d);
    for (int v = 0; v < n; ++v)
        for (int i = 0; i < d; ++i)
            dtemp(v, i) = fwd.temporal_pre(v, i) > 0.0 ? demb(v, i) : 0.0;

    // temporal bias enters the pre-activation exactly once
    for (int v = 0; v < n; ++v)
        for (int j = 0; j < d; ++j) grad[model.off_bt() + j] += dtemp(v, j);

    // temporal kernel; post-activation graph-conv values recomputed from cache
    std::vector<Matrix> dgpost(W, Matrix(n, d, 0.0));
    for (int t = 0; t < W; ++t) {
        const std::size_t wt_off = model.off_wt() + std::size_t(t) * d * d;
        for (int v = 0; v < n; ++v) {
            const double* dresrow = dtemp.row(v);
            const double* prerow = fwd.gconv_pre[t].row(v);
            double* dgrow = dgpost[t].row(v);
            for (int i = 0; i < d; ++i) {
                double gpost = prerow[i] > 0.0 ? prerow[i] : 0.0;
                double* gw = &grad[wt_off + std::size_t(i) * d];
                const double* ww = &p[wt_off + std::size_t(i) * d];
                double acc = 0.0;
                for (int j = 0; j < d; ++j) {
                    gw[j] += gpost * dresrow[j];
                    acc += ww[j] * dresrow[j];
                }
                dgrow[i] = acc;
            }
        }
    }

    // graph conv
    for (int t = 0; t < W; ++t) {
        for (int v = 0; v < n; ++v) {
            const double* dgrow = dgpost[t].row(v);
            const double* prerow = fwd.gconv_pre[t].row(v);
            const double* xin = fwd.gconv_in[t].row(v);
            for (int j = 0; j < d; ++j) {
                if (prerow[j] <= 0.0) continue;
                double dz = dgrow[j];
                if (dz == 0.0) continue;
                grad[model.off_bg() + j] += dz;
                for (int f = 0; f < F; ++f)
                    grad[model.off_wg() + std::size_t(f) * d + j] += xin[f] * dz;
            }
        }
    }
}

double submodel_loss(const SubModel& model, const Matrix& ahat,
                     const std::vector<std::vector<Matrix>>& batch_inputs,
                     const std::vector<Matrix>& batch_targets,
                     const std::vector<int>& loss_nodes, double lambda_reg,
                     std::vector<double>* grad) {
    const auto& dims = model.dims();
    const int P = dims.horizon;
    const std::size_t B = batch_inputs.size();
    double loss = 0.0;

    for (std::size_t b = 0; b < B; ++b) {
        SubForward fwd = submodel_forward(model, ahat, batch_inputs[b]);
        Matrix dpreds(dims.local_nodes, P, 0.0);
        for (int v : loss_nodes) {
            for (int k = 0; k < P; ++k) {
                double diff = fwd.preds(v, k) - batch_targets[b](v, k);
                loss += diff * diff;
                dpreds(v, k) = 2.0 * diff / double(B);
            }
        }
        if (grad) submodel_backward(model, ahat, fwd, dpreds, *grad);
    }
    loss /= double(B);

    const auto& p = model.params();
    double reg = 0.0;
    for (double x : p) reg += x * x;
    loss += lambda_reg * reg;
    if (grad) {
        for (std::size_t i = 0; i < p.size(); ++i) (*grad)[i] += 2.0 * lambda_reg * p[i];
    }
    return loss;
}

std::vector<Matrix> window_inputs(const Subgraph& sub, DataView& data,
                                  const ForecastTask& task, int t_end,
                                  const std::set<int>& exclude) {
    const int n = sub.local_count();
    const int F = data.feature_dim();
    std::vector<Matrix> xs(task.window, Matrix(n, F, 0.0));
    for (int li = 0; li < int(sub.nodes.size()); ++li) {
        int node = sub.nodes[li];
        if (exclude.count(node)) continue;
        for (int t = 0; t < task.window; ++t) {
            int step = t_end - task.window + 1 + t;
            for (int f = 0; f < F; ++f) xs[t](li, f) = data.at(step, node, f);
        }
    }
    return xs;
}

Matrix window_targets(const Subgraph& sub, DataView& data, const ForecastTask& task, int t_end,
                      const std::set<int>& exclude) {
    const int n = sub.local_count();
    Matrix y(n, task.horizon, 0.0);
    for (int li = 0; li < int(sub.nodes.size()); ++li) {
        int node = sub.nodes[li];
        if (exclude.count(node)) continue;
        for (int k = 0; k < task.horizon; ++k) y(li, k) = data.at(t_end + 1 + k, node, 0);
    }
    return y;
}

SubTrainResult train_submodel(const Subgraph& sub, const PrunedGraph& graph,
                              const ForecastTask& task, const TrainConfig& cfg,
                              const std::set<int>& exclude, double lambda_reg, int width,
                              std::uint64_t seed, LedgerPtr ledger) {
    cfg.validate();
    task.validate(graph.graph.timesteps);

    std::vector<int> loss_nodes;
    for (int li = 0; li < int(sub.nodes.size()); ++li)
        if (!exclude.count(sub.nodes[li]) && graph.alive[sub.nodes[li]]) loss_nodes.push_back(li);
    if (loss_nodes.empty())
        throw std::invalid_argument("train_submodel: no trainable nodes remain (merge first)");

    SubModelDims dims;
    dims.local_nodes = sub.local_count();
    dims.feature_dim = graph.graph.feature_dim;
    dims.window = task.window;
    dims.width = width;
    dims.horizon = task.horizon;

    SubModel model = SubModel::init(sub.id, dims, seed);
    Matrix ahat = normalized_adjacency(sub);

    TemporalSplit split = temporal_split(graph.graph.timesteps);
    std::vector<int> ends = window_ends(task, 0, split.train_end);
    if (ends.empty()) throw std::invalid_argument("train_submodel: no training windows");

    DataView data(graph, ledger, "submodel:" + std::to_string(sub.id) + ":train");
    Rng order_rng(seed ^ 0x5eedbeefULL);

    SubTrainResult out;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> schedule = ends;
        order_rng.shuffle(schedule);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < schedule.size(); start += cfg.batch) {
            std::size_t stop = std::min(schedule.size(), start + cfg.batch);
            std::vector<std::vector<Matrix>> inputs;
            std::vector<Matrix> targets;
            for (std::size_t i = start; i < stop; ++i) {
                inputs.push_back(window_inputs(sub, data, task, schedule[i], exclude));
                targets.push_back(window_targets(sub, data, task, schedule[i], exclude));
            }
            std::vector<double> grad(model.param_count(), 0.0);
            double loss = submodel_loss(model, ahat, inputs, targets, loss_nodes, lambda_reg,
                                        &grad);
            epoch_loss += loss;
            ++batches;

            double norm_sq = 0.0;
            for (double g : grad) norm_sq += g * g;
            double norm = std::sqrt(norm_sq);
            double scale = cfg.learning_rate;
            if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip)
                scale *= cfg.grad_clip / norm;
            auto& p = model.mutable_params();
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= scale * grad[i];
        }
        epoch_loss /= double(batches);
        out.epoch_losses.push_back(epoch_loss);
        if (cfg.stop_loss > 0.0 && epoch_loss < cfg.stop_loss) break;
    }

    // digest covers exactly the member rows the trainer may read
    Sha256 digest;
    for (int li : loss_nodes) {
        int node = sub.nodes[li];
        digest.update_i64(node);
        for (int t = 0; t < graph.graph.timesteps; ++t)
            for (int f = 0; f < graph.graph.feature_dim; ++f)
                digest.update_double(graph.graph.feature(t, node, f));
    }
    model.set_data_digest(digest.finish_hex());
    model.freeze();
    out.model = std::move(model);
    return out;
}

Matrix encode(const SubModel& model, const Subgraph& sub, const PrunedGraph& graph,
              const ForecastTask& task, int t_end, LedgerPtr ledger,
              const std::string& stage) {
    if (!model.frozen())
        throw std::logic_error("encode: embeddings must come from a frozen sub-model");
    DataView data(graph, ledger, stage);
    std::set<int> none;
    auto xs = window_inputs(sub, data, task, t_end, none);
    Matrix ahat = normalized_adjacency(sub);
    return submodel_forward(model, ahat, xs).embeddings;
}

std::string SubModel::checkpoint_json() const {
    nlohmann::json j;
    j["kind"] = "submodel";
    j["subgraph_id"] = subgraph_id_;
    j["local_nodes"] = dims_.local_nodes;
    j["feature_dim"] = dims_.feature_dim;
    j["window"] = dims_.window;
    j["width"] = dims_.width;
    j["horizon"] = dims_.horizon;
    j["seed"] = u64_hex(seed_);
    j["data_digest"] = data_digest_;
    j["frozen"] = frozen_;
    nlohmann::json params = nlohmann::json::array();
    for (double v : params_) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        params.push_back(u64_hex(bits));
    }
    j["params"] = params;
    return j.dump(2) + "\n";
}

SubModel SubModel::from_checkpoint_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SubModelDims dims;
    dims.local_nodes = j.at("local_nodes").get<int>();
    dims.feature_dim = j.at("feature_dim").get<int>();
    dims.window = j.at("window").get<int>();
    dims.width = j.at("width").get<int>();
    dims.horizon = j.at("horizon").get<int>();
    SubModel m;
    m.subgraph_id_ = j.at("subgraph_id").get<int>();
    m.dims_ = dims;
    m.seed_ = hex_u64(j.at("seed").get<std::string>());
    m.data_digest_ = j.at("data_digest").get<std::string>();
    m.params_.resize(m.param_count());
    const auto& arr = j.at("params");
    if (arr.size() != m.params_.size())
        throw std::invalid_argument("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < m.params_.size(); ++i) {
        std::uint64_t bits = hex_u64(arr[i].get<std::string>());
        std::memcpy(&m.params_[i], &bits, 8);
    }
    if (j.at("frozen").get<bool>()) m.frozen_ = true;
    return m;
}

} // namespace callosum
