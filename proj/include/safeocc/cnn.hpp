#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace safeocc {

enum class Activation { relu, sigmoid, tanh, linear };
enum class PoolKind { max, average };

inline double apply_activation(double z, Activation a) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::tanh: return std::tanh(z);
        case Activation::linear: return z;
    }
    return z;
}

// Derivative expressed through the activation output y (and pre-activation z
// for relu, whose subgradient at z = 0 is taken as 0).
inline double activation_grad(double z, double y, Activation a) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::linear: return 1.0;
    }
    return 1.0;
}

// Convolution kernel bank: index ((du*n_u + dv)*in_channels + i)*filters + j
// with du, dv in [0, n_u).
struct ConvOperator {
    int kernel_size = 0;
    int in_channels = 0;
    int filters = 0;
    std::vector<double> kernel;
    Vec bias;

    ConvOperator() = default;
    ConvOperator(int n_u, int p, int q)
        : kernel_size(n_u), in_channels(p), filters(q),
          kernel(static_cast<size_t>(n_u) * n_u * p * q, 0.0), bias(q, 0.0) {}

    double& at(int du, int dv, int i, int j) {
        return kernel[(static_cast<size_t>(du * kernel_size + dv) * in_channels + i) * filters + j];
    }
    double at(int du, int dv, int i, int j) const {
        return kernel[(static_cast<size_t>(du * kernel_size + dv) * in_channels + i) * filters + j];
    }
};

struct ConvBlockSpec {
    int filters = 8;
    int kernel_size = 3;
    Activation activation = Activation::relu;
    PoolKind pool = PoolKind::max;
    int pool_size = 2;
};

struct DenseLayer {
    Mat weights;  // rows = outputs, cols = inputs
    Vec bias;
    Activation activation = Activation::linear;
};

struct CnnModel {
    int input_dim = 0;
    int input_channels = 1;
    std::vector<ConvBlockSpec> blocks;
    std::vector<ConvOperator> ops;
    std::vector<DenseLayer> dense;

    int num_blocks() const { return static_cast<int>(blocks.size()); }

    // Spatial dimension of the pooled output of block b (0-based).
    int spatial_after(int b) const {
        int d = input_dim;
        for (int i = 0; i <= b; ++i) d /= blocks[i].pool_size;
        return d;
    }
};

enum class TapSignal { psi, activation, pooled };

struct TapPoint {
    int block = 0;  // 0-based
    TapSignal signal = TapSignal::pooled;
};

// ---------------------------------------------------------------------------
// Forward pass

inline Tensor3 convolve(const Tensor3& input, const ConvOperator& op) {
    require(input.channels == op.in_channels, "convolve: channel mismatch");
    require(op.kernel_size % 2 == 1, "convolve: kernel size must be odd");
    const int n = input.dim1;
    require(input.dim2 == n, "convolve: square input expected");
    const int nu = op.kernel_size;
    const int N = nu / 2;
    Tensor3 out(n, n, op.filters);

    for (int j = 0; j < op.filters; ++j) {
        double* op_plane = out.plane(j);
        const double b = op.bias[j];
        for (int x = 0; x < n * n; ++x) op_plane[x] = b;
        for (int i = 0; i < op.in_channels; ++i) {
            const double* in_plane = input.plane(i);
            for (int du = -N; du <= N; ++du) {
                for (int dv = -N; dv <= N; ++dv) {
                    const double w = op.at(du + N, dv + N, i, j);
                    if (w == 0.0) continue;
                    const int r0 = std::max(0, -du), r1 = std::min(n, n - du);
                    const int c0 = std::max(0, -dv), c1 = std::min(n, n - dv);
                    for (int r = r0; r < r1; ++r) {
                        double* orow = op_plane + static_cast<size_t>(r) * n;
                        const double* irow = in_plane + static_cast<size_t>(r + du) * n + dv;
                        for (int c = c0; c < c1; ++c) orow[c] += w * irow[c];
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor3 activate(const Tensor3& x, Activation a) {
    Tensor3 out = x;
    for (double& v : out.data) v = apply_activation(v, a);
    return out;
}

// Max pooling records the argmax flat index per window when argmax != nullptr
// (ties broken by the first element in row-major scan order).
inline Tensor3 pool(const Tensor3& x, PoolKind kind, int n_p,
                    std::vector<int>* argmax = nullptr) {
    require(x.dim1 % n_p == 0 && x.dim2 % n_p == 0, "pool: size must divide spatial dims");
    const int od = x.dim1 / n_p;
    Tensor3 out(od, od, x.channels);
    if (argmax) argmax->assign(out.data.size(), -1);
    const double inv = 1.0 / (n_p * n_p);
    for (int c = 0; c < x.channels; ++c) {
        const double* in_plane = x.plane(c);
        double* out_plane = out.plane(c);
        for (int r = 0; r < od; ++r) {
            for (int cc = 0; cc < od; ++cc) {
                if (kind == PoolKind::max) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = -1;
                    for (int dr = 0; dr < n_p; ++dr) {
                        for (int dc = 0; dc < n_p; ++dc) {
                            const int idx = (r * n_p + dr) * x.dim2 + cc * n_p + dc;
                            if (in_plane[idx] > best) {
                                best = in_plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out_plane[r * od + cc] = best;
                    if (argmax)
                        (*argmax)[(static_cast<size_t>(c) * od + r) * od + cc] =
                            c * x.dim1 * x.dim2 + best_idx;
                } else {
                    double s = 0.0;
                    for (int dr = 0; dr < n_p; ++dr)
                        for (int dc = 0; dc < n_p; ++dc)
                            s += in_plane[(r * n_p + dr) * x.dim2 + cc * n_p + dc];
                    out_plane[r * od + cc] = s * inv;
                }
            }
        }
    }
    return out;
}

// Flatten order is (row, col, channel) lexicographic.
inline Vec flatten(const Tensor3& t) {
    Vec v;
    v.reserve(t.data.size());
    for (int r = 0; r < t.dim1; ++r)
        for (int c = 0; c < t.dim2; ++c)
            for (int ch = 0; ch < t.channels; ++ch) v.push_back(t(r, c, ch));
    return v;
}

struct BlockTaps {
    Tensor3 psi;
    Tensor3 act;
    Tensor3 pooled;
    std::vector<int> argmax;  // max-pool routing, empty for average pool
};

struct ForwardPass {
    std::vector<BlockTaps> blocks;
    Vec flat;
    std::vector<Vec> dense_pre;   // pre-activation per dense layer
    std::vector<Vec> dense_out;   // post-activation per dense layer
    Vec output;
};

inline ForwardPass forward(const CnnModel& model, const Tensor3& image) {
    require(image.dim1 == model.input_dim && image.dim2 == model.input_dim &&
                image.channels == model.input_channels,
            "forward: image shape mismatch");
    ForwardPass fp;
    const Tensor3* cur = &image;
    fp.blocks.resize(model.blocks.size());
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        BlockTaps& t = fp.blocks[b];
        t.psi = convolve(*cur, model.ops[b]);
        t.act = activate(t.psi, model.blocks[b].activation);
        if (model.blocks[b].pool == PoolKind::max)
            t.pooled = pool(t.act, PoolKind::max, model.blocks[b].pool_size, &t.argmax);
        else
            t.pooled = pool(t.act, PoolKind::average, model.blocks[b].pool_size);
        cur = &t.pooled;
    }
    fp.flat = flatten(*cur);
    Vec x = fp.flat;
    for (const DenseLayer& d : model.dense) {
        Vec z(d.weights.rows);
        for (int r = 0; r < d.weights.rows; ++r) {
            double s = d.bias[r];
            const double* wrow = &d.weights.data[static_cast<size_t>(r) * d.weights.cols];
            for (int c = 0; c < d.weights.cols; ++c) s += wrow[c] * x[c];
            z[r] = s;
        }
        fp.dense_pre.push_back(z);
        for (double& v : z) v = apply_activation(v, d.activation);
        fp.dense_out.push_back(z);
        x = std::move(z);
    }
    fp.output = x;
    return fp;
}

inline double sse_loss(const Vec& y_hat, const Vec& y) {
    require(y_hat.size() == y.size(), "sse_loss: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double d = y_hat[i] - y[i];
        s += d * d;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Parameter flattening (canonical order: conv ops then dense layers)

inline size_t param_count(const CnnModel& model) {
    size_t n = 0;
    for (const auto& op : model.ops) n += op.kernel.size() + op.bias.size();
    for (const auto& d : model.dense) n += d.weights.data.size() + d.bias.size();
    return n;
}

inline Vec params_flatten(const CnnModel& model) {
    Vec out;
    out.reserve(param_count(model));
    for (const auto& op : model.ops) {
        out.insert(out.end(), op.kernel.begin(), op.kernel.end());
        out.insert(out.end(), op.bias.begin(), op.bias.end());
    }
    for (const auto& d : model.dense) {
        out.insert(out.end(), d.weights.data.begin(), d.weights.data.end());
        out.insert(out.end(), d.bias.begin(), d.bias.end());
    }
    return out;
}

inline void params_assign(CnnModel& model, const Vec& flat) {
    size_t k = 0;
    for (auto& op : model.ops) {
        std::copy(flat.begin() + k, flat.begin() + k + op.kernel.size(), op.kernel.begin());
        k += op.kernel.size();
        std::copy(flat.begin() + k, flat.begin() + k + op.bias.size(), op.bias.begin());
        k += op.bias.size();
    }
    for (auto& d : model.dense) {
        std::copy(flat.begin() + k, flat.begin() + k + d.weights.data.size(),
                  d.weights.data.begin());
        k += d.weights.data.size();
        std::copy(flat.begin() + k, flat.begin() + k + d.bias.size(), d.bias.begin());
        k += d.bias.size();
    }
    require(k == flat.size(), "params_assign: length mismatch");
}

// ---------------------------------------------------------------------------
// Backward pass: gradient of the SSE loss with respect to every parameter,
// accumulated into grad (flat, canonical order). Returns the loss.

inline double backward(const CnnModel& model, const Tensor3& image, const Vec& y, Vec& grad,
                       const ForwardPass* precomputed = nullptr) {
    ForwardPass local;
    const ForwardPass& fp = precomputed ? *precomputed : (local = forward(model, image), local);
    const double loss = sse_loss(fp.output, y);

    if (grad.size() != param_count(model)) grad.assign(param_count(model), 0.0);

    // Offsets of each parameter group inside the flat gradient.
    std::vector<size_t> conv_off(model.ops.size()), dense_off(model.dense.size());
    size_t k = 0;
    for (size_t i = 0; i < model.ops.size(); ++i) {
        conv_off[i] = k;
        k += model.ops[i].kernel.size() + model.ops[i].bias.size();
    }
    for (size_t i = 0; i < model.dense.size(); ++i) {
        dense_off[i] = k;
        k += model.dense[i].weights.data.size() + model.dense[i].bias.size();
    }

    // Dense stack.
    Vec delta(fp.output.size());
    for (size_t i = 0; i < delta.size(); ++i) delta[i] = 2.0 * (fp.output[i] - y[i]);
    for (int li = static_cast<int>(model.dense.size()) - 1; li >= 0; --li) {
        const DenseLayer& d = model.dense[li];
        const Vec& pre = fp.dense_pre[li];
        const Vec& out = fp.dense_out[li];
        const Vec& in = (li == 0) ? fp.flat : fp.dense_out[li - 1];
        for (size_t r = 0; r < delta.size(); ++r)
            delta[r] *= activation_grad(pre[r], out[r], d.activation);

        double* gw = &grad[dense_off[li]];
        double* gb = gw + d.weights.data.size();
        for (int r = 0; r < d.weights.rows; ++r) {
            const double dr = delta[r];
            double* grow = gw + static_cast<size_t>(r) * d.weights.cols;
            for (int c = 0; c < d.weights.cols; ++c) grow[c] += dr * in[c];
            gb[r] += dr;
        }
        Vec next(d.weights.cols, 0.0);
        for (int r = 0; r < d.weights.rows; ++r) {
            const double dr = delta[r];
            const double* wrow = &d.weights.data[static_cast<size_t>(r) * d.weights.cols];
            for (int c = 0; c < d.weights.cols; ++c) next[c] += dr * wrow[c];
        }
        delta = std::move(next);
    }

    // Un-flatten into the last pooled tensor.
    const Tensor3& last = fp.blocks.back().pooled;
    Tensor3 dpool(last.dim1, last.dim2, last.channels);
    {
        size_t idx = 0;
        for (int r = 0; r < last.dim1; ++r)
            for (int c = 0; c < last.dim2; ++c)
                for (int ch = 0; ch < last.channels; ++ch) dpool(r, c, ch) = delta[idx++];
    }

    for (int b = static_cast<int>(model.blocks.size()) - 1; b >= 0; --b) {
        const BlockTaps& taps = fp.blocks[b];
        const ConvBlockSpec& spec = model.blocks[b];
        const ConvOperator& op = model.ops[b];
        const Tensor3& input = (b == 0) ? image : fp.blocks[b - 1].pooled;

        // Pool backward.
        Tensor3 dact(taps.act.dim1, taps.act.dim2, taps.act.channels);
        if (spec.pool == PoolKind::max) {
            for (size_t i = 0; i < dpool.data.size(); ++i)
                dact.data[taps.argmax[i]] += dpool.data[i];
        } else {
            const int n_p = spec.pool_size;
            const double inv = 1.0 / (n_p * n_p);
            for (int c = 0; c < dpool.channels; ++c)
                for (int r = 0; r < dpool.dim1; ++r)
                    for (int cc = 0; cc < dpool.dim2; ++cc) {
                        const double g = dpool(r, cc, c) * inv;
                        for (int dr = 0; dr < n_p; ++dr)
                            for (int dc = 0; dc < n_p; ++dc)
                                dact(r * n_p + dr, cc * n_p + dc, c) += g;
                    }
        }

        // Activation backward.
        Tensor3 dpsi = dact;
        for (size_t i = 0; i < dpsi.data.size(); ++i)
            dpsi.data[i] *= activation_grad(taps.psi.data[i], taps.act.data[i], spec.activation);

        // Conv backward: kernel/bias gradients plus input gradient.
        const int n = input.dim1;
        const int nu = op.kernel_size;
        const int N = nu / 2;
        double* gk = &grad[conv_off[b]];
        double* gb = gk + op.kernel.size();
        for (int j = 0; j < op.filters; ++j) {
            const double* dplane = dpsi.plane(j);
            double bsum = 0.0;
            for (int x = 0; x < n * n; ++x) bsum += dplane[x];
            gb[j] += bsum;
            for (int i = 0; i < op.in_channels; ++i) {
                const double* in_plane = input.plane(i);
                for (int du = -N; du <= N; ++du) {
                    for (int dv = -N; dv <= N; ++dv) {
                        const int r0 = std::max(0, -du), r1 = std::min(n, n - du);
                        const int c0 = std::max(0, -dv), c1 = std::min(n, n - dv);
                        double acc = 0.0;
                        for (int r = r0; r < r1; ++r) {
                            const double* drow = dplane + static_cast<size_t>(r) * n;
                            const double* irow = in_plane + static_cast<size_t>(r + du) * n + dv;
                            for (int c = c0; c < c1; ++c) acc += drow[c] * irow[c];
                        }
                        gk[(static_cast<size_t>((du + N) * nu + (dv + N)) * op.in_channels + i) *
                               op.filters + j] += acc;
                    }
                }
            }
        }

        if (b > 0) {
            Tensor3 dinput(n, n, op.in_channels);
            for (int j = 0; j < op.filters; ++j) {
                const double* dplane = dpsi.plane(j);
                for (int i = 0; i < op.in_channels; ++i) {
                    double* iplane = dinput.plane(i);
                    for (int du = -N; du <= N; ++du) {
                        for (int dv = -N; dv <= N; ++dv) {
                            const double w = op.at(du + N, dv + N, i, j);
                            if (w == 0.0) continue;
                            const int r0 = std::max(0, -du), r1 = std::min(n, n - du);
                            const int c0 = std::max(0, -dv), c1 = std::min(n, n - dv);
                            for (int r = r0; r < r1; ++r) {
                                const double* drow = dplane + static_cast<size_t>(r) * n;
                                double* irow = iplane + static_cast<size_t>(r + du) * n + dv;
                                for (int c = c0; c < c1; ++c) irow[c] += w * drow[c];
                            }
                        }
                    }
                }
            }
            dpool = std::move(dinput);
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Model construction and training

inline CnnModel make_cnn(int input_dim, int input_channels,
                         const std::vector<ConvBlockSpec>& blocks, int outputs, Rng& rng) {
    CnnModel m;
    m.input_dim = input_dim;
    m.input_channels = input_channels;
    m.blocks = blocks;
    int ch = input_channels;
    int dim = input_dim;
    for (const auto& spec : blocks) {
        require(dim % spec.pool_size == 0, "make_cnn: pool size must divide spatial dim");
        ConvOperator op(spec.kernel_size, ch, spec.filters);
        // He-uniform for relu stacks.
        const double fan_in = static_cast<double>(spec.kernel_size) * spec.kernel_size * ch;
        const double limit = std::sqrt(6.0 / fan_in);
        for (double& w : op.kernel) w = rng.uniform(-limit, limit);
        m.ops.push_back(std::move(op));
        ch = spec.filters;
        dim /= spec.pool_size;
    }
    DenseLayer head;
    const int in = dim * dim * ch;
    head.weights = Mat(outputs, in);
    head.bias = Vec(outputs, 0.0);
    head.activation = Activation::linear;
    // Xavier-uniform for the linear head.
    const double limit = std::sqrt(6.0 / (in + outputs));
    for (double& w : head.weights.data) w = rng.uniform(-limit, limit);
    m.dense.push_back(std::move(head));
    return m;
}

struct Dataset {
    std::vector<Tensor3> images;
    std::vector<Vec> labels;
};

struct Split {
    std::vector<int> train, val, test;
};

/// Deterministic 70:20:10 split.
inline Split make_split(int n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Split s;
    const int n_train = static_cast<int>(n * 0.7);
    const int n_val = static_cast<int>(n * 0.2);
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.assign(idx.begin() + n_train + n_val, idx.end());
    return s;
}

struct TrainConfig {
    double lr = 1e-3;
    int batch = 32;
    int max_epochs = 50;
    int patience = 5;
    double min_delta = 1e-4;
    int threads = 1;  // data-parallel gradient accumulation, fixed reduce order
};

struct TrainHistory {
    std::vector<double> train_loss;  // mean SSE per epoch
    std::vector<double> val_loss;
    int best_epoch = -1;
};

inline double mean_sse(const CnnModel& model, const Dataset& data, const std::vector<int>& idx,
                       int threads = 1) {
    if (idx.empty()) return 0.0;
    const int nt = std::max(1, threads);
    std::vector<double> partial(nt, 0.0);
    std::vector<std::thread> pool_;
    for (int t = 0; t < nt; ++t) {
        pool_.emplace_back([&, t]() {
            double s = 0.0;
            for (size_t i = t; i < idx.size(); i += nt)
                s += sse_loss(forward(model, data.images[idx[i]]).output, data.labels[idx[i]]);
            partial[t] = s;
        });
    }
    for (auto& th : pool_) th.join();
    double s = 0.0;
    for (double p : partial) s += p;
    return s / static_cast<double>(idx.size());
}

// Adam with beta1=0.9, beta2=0.999, eps=1e-8 over shuffled minibatches.
// Early stop when validation SSE fails to improve by min_delta for `patience`
// epochs; the best-validation parameters are restored on return.
inline TrainHistory train(CnnModel& model, const Dataset& data, const Split& split,
                          const TrainConfig& cfg, Rng& rng) {
    require(!split.train.empty() && !split.val.empty(), "train: empty split");
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Vec params = params_flatten(model);
    Vec m(params.size(), 0.0), v(params.size(), 0.0);
    Vec grad(params.size(), 0.0);
    long step = 0;

    TrainHistory hist;
    Vec best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;

    std::vector<int> order = split.train;
    const int nt = std::max(1, cfg.threads);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch) {
            const size_t end = std::min(order.size(), start + cfg.batch);
            const int bsz = static_cast<int>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);

            std::vector<Vec> pgrad(nt);
            std::vector<double> ploss(nt, 0.0);
            std::vector<std::thread> workers;
            for (int t = 0; t < nt; ++t) {
                workers.emplace_back([&, t]() {
                    Vec g;
                    for (size_t i = start + t; i < end; i += nt)
                        ploss[t] += backward(model, data.images[order[i]], data.labels[order[i]], g);
                    pgrad[t] = std::move(g);
                });
            }
            for (auto& th : workers) th.join();
            for (int t = 0; t < nt; ++t) {
                if (pgrad[t].empty()) continue;
                for (size_t i = 0; i < grad.size(); ++i) grad[i] += pgrad[t][i];
                epoch_loss += ploss[t];
            }

            const double scale = 1.0 / bsz;
            ++step;
            const double corr = cfg.lr * std::sqrt(1.0 - std::pow(b2, step)) /
                                (1.0 - std::pow(b1, step));
            for (size_t i = 0; i < params.size(); ++i) {
                const double g = grad[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                params[i] -= corr * m[i] / (std::sqrt(v[i]) + eps);
            }
            params_assign(model, params);
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train: loss diverged (non-finite)");

        const double val = mean_sse(model, data, split.val, nt);
        hist.train_loss.push_back(epoch_loss);
        hist.val_loss.push_back(val);
        if (val < best_val - cfg.min_delta) {
            best_val = val;
            best_params = params;
            hist.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    params_assign(model, best_params);
    return hist;
}

}  // namespace safeocc
