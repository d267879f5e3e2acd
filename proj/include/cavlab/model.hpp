#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cavlab/errors.hpp"
#include "cavlab/rng.hpp"
#include "cavlab/tensor.hpp"

namespace cavlab {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using MatF = Mat<float>;
using VecF = Vec<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

// Blocks are conv3x3 (pad 1) -> batchnorm -> relu, with 2x2 max-pool inside
// the first three blocks. Activations are captured at block outputs; a global
// average pool and a linear head sit on top.
struct ModelConfig {
    std::vector<int> channels{64, 64, 64, 64, 64, 64};
    int input_side = 256;
    int num_classes = 1;
    bool head_relu = false; // extra relu between pool and head (structural test hook)
    double bn_eps = 1e-5;

    static ModelConfig preset(const std::string& name);
    int blocks() const { return int(channels.size()); }
};

inline bool block_pools(int b) { return b < 3; }

inline int layer_side(const ModelConfig& cfg, int b) {
    int s = cfg.input_side;
    for (int i = 0; i <= b && i < cfg.blocks(); ++i)
        if (block_pools(i)) s /= 2;
    return s;
}

inline int layer_dim(const ModelConfig& cfg, int b) {
    int s = layer_side(cfg, b);
    return s * s * cfg.channels[size_t(b)];
}

inline std::string layer_name(int b) { return "layers." + std::to_string(b); }
int parse_layer(const std::string& name); // "layers.3" -> 3, throws ConfigError

// Directional-derivative layers: a block qualifies only if some nonlinearity
// sits between its output and the logits, otherwise gradients are constant.
std::vector<int> eligible_layers(const ModelConfig& cfg, const std::vector<int>& excluded = {});

template <typename T>
struct ConvBlockT {
    Mat<T> w; // (9*Cin) x Cout, rows ordered (ky, kx, cin)
    Vec<T> b;
    Vec<T> bn_gamma, bn_beta, bn_mean, bn_var;

    template <typename U>
    ConvBlockT<U> cast() const {
        ConvBlockT<U> o;
        o.w = w.template cast<U>();
        o.b = b.template cast<U>();
        o.bn_gamma = bn_gamma.template cast<U>();
        o.bn_beta = bn_beta.template cast<U>();
        o.bn_mean = bn_mean.template cast<U>();
        o.bn_var = bn_var.template cast<U>();
        return o;
    }
};

template <typename T>
struct NetworkT {
    ModelConfig cfg;
    std::vector<ConvBlockT<T>> blocks;
    Mat<T> head_w; // num_classes x D
    Vec<T> head_b;

    template <typename U>
    NetworkT<U> cast() const {
        NetworkT<U> o;
        o.cfg = cfg;
        o.blocks.reserve(blocks.size());
        for (const auto& b : blocks) o.blocks.push_back(b.template cast<U>());
        o.head_w = head_w.template cast<U>();
        o.head_b = head_b.template cast<U>();
        return o;
    }
};
using Network = NetworkT<float>;
using NetworkD = NetworkT<double>;

// Kaiming fan-in init for conv and head weights, zero biases, identity batchnorm
Network init_network(const ModelConfig& cfg, uint64_t seed);

// ---- per-image primitives ----

// col: (H*W) x (9*C); row (y*W + x) holds the padded 3x3 patch, (ky, kx, c) order
template <typename T>
void im2col3x3(const Tensor3<T>& in, Mat<T>& col) {
    const int H = in.h, W = in.w, C = in.d;
    col.resize(Eigen::Index(H) * W, Eigen::Index(9) * C);
    col.setZero();
    for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
            const Eigen::Index off = Eigen::Index(ky * 3 + kx) * C;
            for (int y = 0; y < H; ++y) {
                int sy = y + ky - 1;
                if (sy < 0 || sy >= H) continue;
                int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
                if (x0 >= x1) continue;
                const T* src = &in.at(sy, x0 + kx - 1, 0);
                T* dst = col.data() + (Eigen::Index(y) * W + x0) * col.cols() + off;
                for (int x = x0; x < x1; ++x) {
                    std::copy(src, src + C, dst);
                    src += C;
                    dst += col.cols();
                }
            }
        }
    }
}

// scatter-add transpose of im2col3x3
template <typename T>
void col2im3x3(const Mat<T>& col, Tensor3<T>& out) {
    const int H = out.h, W = out.w, C = out.d;
    std::fill(out.data.begin(), out.data.end(), T(0));
    for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
            const Eigen::Index off = Eigen::Index(ky * 3 + kx) * C;
            for (int y = 0; y < H; ++y) {
                int sy = y + ky - 1;
                if (sy < 0 || sy >= H) continue;
                int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
                for (int x = x0; x < x1; ++x) {
                    T* dst = &out.at(sy, x + kx - 1, 0);
                    const T* src = col.data() + (Eigen::Index(y) * W + x) * col.cols() + off;
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

template <typename T>
Tensor3<T> maxpool2(const Tensor3<T>& in, std::vector<int>* argmax = nullptr) {
    Tensor3<T> out(in.h / 2, in.w / 2, in.d);
    if (argmax) argmax->assign(out.size(), 0);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int c = 0; c < in.d; ++c) {
                T best = in.at(2 * y, 2 * x, c);
                int bi = (2 * y * in.w + 2 * x) * in.d + c;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        int yy = 2 * y + dy, xx = 2 * x + dx;
                        T v = in.at(yy, xx, c);
                        if (v > best) {
                            best = v;
                            bi = (yy * in.w + xx) * in.d + c;
                        }
                    }
                out.at(y, x, c) = best;
                if (argmax) (*argmax)[(size_t(y) * out.w + x) * out.d + c] = bi;
            }
    return out;
}

// conv + frozen batchnorm + relu (+ pool); z_out receives the pre-relu values
template <typename T>
Tensor3<T> eval_block(const ConvBlockT<T>& blk, const Tensor3<T>& in, bool pool, double bn_eps,
                      Tensor3<T>* z_out = nullptr, std::vector<int>* argmax = nullptr) {
    const int H = in.h, W = in.w;
    const int Cout = int(blk.w.cols());
    Mat<T> col;
    im2col3x3(in, col);
    Tensor3<T> z(H, W, Cout);
    Eigen::Map<Mat<T>> zm(z.data.data(), Eigen::Index(H) * W, Cout);
    zm.noalias() = col * blk.w;
    Vec<T> scale = blk.bn_gamma.array() / (blk.bn_var.array() + T(bn_eps)).sqrt();
    Vec<T> shift =
        blk.bn_beta.array() + (blk.b - blk.bn_mean).array() * scale.array();
    zm.array().rowwise() *= scale.transpose().array();
    zm.rowwise() += shift.transpose();
    if (z_out) *z_out = z;
    Tensor3<T> act = z;
    for (auto& v : act.data) v = v > T(0) ? v : T(0);
    if (pool) return maxpool2(act, argmax);
    return act;
}

template <typename T>
struct EvalTrace {
    Tensor3<T> image;
    std::vector<Tensor3<T>> outputs; // block outputs (post pool)
    std::vector<Tensor3<T>> z;       // pre-relu, only when traced for backward
    std::vector<std::vector<int>> argmax;
    Vec<T> pooled;     // pre head relu
    Vec<T> pooled_act; // post head relu (equal when head_relu is off)
    Vec<T> logit;
};

template <typename T>
void check_layer_shape(const ModelConfig& cfg, const Tensor3<T>& act, int layer) {
    if (layer < 0 || layer >= cfg.blocks())
        throw std::invalid_argument("unknown layer index " + std::to_string(layer));
    int s = layer_side(cfg, layer);
    if (act.h != s || act.w != s || act.d != cfg.channels[size_t(layer)])
        throw std::invalid_argument("activation shape mismatch at " + layer_name(layer));
}

template <typename T>
void head_forward(const NetworkT<T>& net, const Tensor3<T>& last, Vec<T>& pooled,
                  Vec<T>& pooled_act, Vec<T>& logit) {
    const int cells = last.h * last.w;
    Eigen::Map<const Mat<T>> m(last.data.data(), cells, last.d);
    pooled = m.colwise().mean();
    pooled_act = pooled;
    if (net.cfg.head_relu)
        pooled_act = pooled_act.array().max(T(0)).matrix();
    logit = net.head_w * pooled_act + net.head_b;
}

template <typename T>
EvalTrace<T> forward_trace(const NetworkT<T>& net, const Tensor3<T>& img, bool for_backward) {
    if (img.h != net.cfg.input_side || img.w != net.cfg.input_side || img.d != 3)
        throw std::invalid_argument("input image must be side x side x 3");
    EvalTrace<T> tr;
    if (for_backward) tr.image = img;
    const int B = net.cfg.blocks();
    tr.outputs.resize(size_t(B));
    if (for_backward) {
        tr.z.resize(size_t(B));
        tr.argmax.resize(size_t(B));
    }
    const Tensor3<T>* cur = &img;
    for (int b = 0; b < B; ++b) {
        tr.outputs[size_t(b)] =
            eval_block(net.blocks[size_t(b)], *cur, block_pools(b), net.cfg.bn_eps,
                       for_backward ? &tr.z[size_t(b)] : nullptr,
                       for_backward && block_pools(b) ? &tr.argmax[size_t(b)] : nullptr);
        cur = &tr.outputs[size_t(b)];
    }
    head_forward(net, tr.outputs.back(), tr.pooled, tr.pooled_act, tr.logit);
    return tr;
}

template <typename T>
std::vector<Tensor3<T>> forward_all(const NetworkT<T>& net, const Tensor3<T>& img) {
    return forward_trace(net, img, false).outputs;
}

template <typename T>
Tensor3<T> forward_capture(const NetworkT<T>& net, const Tensor3<T>& img, int layer) {
    if (layer < 0 || layer >= net.cfg.blocks())
        throw std::invalid_argument("unknown layer index " + std::to_string(layer));
    const int B = layer + 1;
    Tensor3<T> cur = img;
    for (int b = 0; b < B; ++b)
        cur = eval_block(net.blocks[size_t(b)], cur, block_pools(b), net.cfg.bn_eps);
    return cur;
}

// runs blocks (from, to]; accepts arbitrary off-manifold activations
template <typename T>
Tensor3<T> continue_to_layer(const NetworkT<T>& net, const Tensor3<T>& act, int from, int to) {
    check_layer_shape(net.cfg, act, from);
    if (to <= from || to >= net.cfg.blocks())
        throw std::invalid_argument("cannot continue from " + layer_name(from) + " to " +
                                    layer_name(to));
    Tensor3<T> cur = act;
    for (int b = from + 1; b <= to; ++b)
        cur = eval_block(net.blocks[size_t(b)], cur, block_pools(b), net.cfg.bn_eps);
    return cur;
}

template <typename T>
Vec<T> continue_forward(const NetworkT<T>& net, const Tensor3<T>& act, int from) {
    check_layer_shape(net.cfg, act, from);
    Tensor3<T> cur = act;
    for (int b = from + 1; b < net.cfg.blocks(); ++b)
        cur = eval_block(net.blocks[size_t(b)], cur, block_pools(b), net.cfg.bn_eps);
    Vec<T> pooled, pooled_act, logit;
    head_forward(net, cur, pooled, pooled_act, logit);
    return logit;
}

template <typename T>
Vec<T> logits(const NetworkT<T>& net, const Tensor3<T>& img) {
    return forward_trace(net, img, false).logit;
}

// gradient of logit k at every block output, one backward sweep (frozen batchnorm)
template <typename T>
std::vector<Tensor3<T>> backward_logit(const NetworkT<T>& net, const EvalTrace<T>& tr, int k) {
    const int B = net.cfg.blocks();
    if (k < 0 || k >= net.cfg.num_classes) throw std::invalid_argument("logit index out of range");
    if (tr.z.empty()) throw std::invalid_argument("trace was not built for backward");
    std::vector<Tensor3<T>> grads;
    grads.resize(size_t(B));

    const Tensor3<T>& last = tr.outputs.back();
    const int cells = last.h * last.w;
    Vec<T> dp = net.head_w.row(k).transpose();
    if (net.cfg.head_relu)
        for (int d = 0; d < dp.size(); ++d)
            if (tr.pooled[d] <= T(0)) dp[d] = T(0);
    Tensor3<T> g(last.h, last.w, last.d);
    Eigen::Map<Mat<T>> gm(g.data.data(), cells, last.d);
    gm = (dp / T(cells)).transpose().replicate(cells, 1);
    grads[size_t(B - 1)] = g;

    Mat<T> col, gcol;
    for (int b = B - 1; b >= 1; --b) {
        const ConvBlockT<T>& blk = net.blocks[size_t(b)];
        const Tensor3<T>& z = tr.z[size_t(b)];
        Tensor3<T> gr; // gradient at the relu output
        if (block_pools(b)) {
            gr = Tensor3<T>(z.h, z.w, z.d);
            const Tensor3<T>& go = grads[size_t(b)];
            const auto& am = tr.argmax[size_t(b)];
            for (size_t i = 0; i < go.data.size(); ++i) gr.data[size_t(am[i])] += go.data[i];
        } else {
            gr = grads[size_t(b)];
        }
        for (size_t i = 0; i < gr.data.size(); ++i)
            if (z.data[i] <= T(0)) gr.data[i] = T(0);
        Vec<T> scale = blk.bn_gamma.array() / (blk.bn_var.array() + T(net.cfg.bn_eps)).sqrt();
        Eigen::Map<Mat<T>> grm(gr.data.data(), Eigen::Index(z.h) * z.w, z.d);
        grm.array().rowwise() *= scale.transpose().array();
        gcol.noalias() = grm * blk.w.transpose();
        const Tensor3<T>& in = tr.outputs[size_t(b - 1)];
        Tensor3<T> gi(in.h, in.w, in.d);
        col2im3x3(gcol, gi);
        grads[size_t(b - 1)] = std::move(gi);
    }
    return grads;
}

template <typename T>
Tensor3<T> grad_logit_wrt_activation(const NetworkT<T>& net, const Tensor3<T>& img, int layer,
                                     int k) {
    if (layer < 0 || layer >= net.cfg.blocks())
        throw std::invalid_argument("unknown layer index " + std::to_string(layer));
    EvalTrace<T> tr = forward_trace(net, img, true);
    return backward_logit(net, tr, k)[size_t(layer)];
}

} // namespace cavlab
