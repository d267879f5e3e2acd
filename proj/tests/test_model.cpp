#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "cavlab/elements.hpp"
#include "cavlab/errors.hpp"
#include "cavlab/model.hpp"

using namespace cavlab;

namespace {

ModelConfig tiny_config(bool head_relu = false) {
    ModelConfig cfg;
    cfg.channels = {4, 5, 6, 4};
    cfg.input_side = 8;
    cfg.num_classes = 3;
    cfg.head_relu = head_relu;
    return cfg;
}

TensorD random_image(int side, uint64_t seed) {
    TensorD img(side, side, 3);
    Rng rng(seed);
    for (auto& v : img.data) v = rng.next_double();
    return img;
}

// naive direct convolution + batchnorm + relu + optional max pool, written
// without im2col so the two paths share no code
TensorD oracle_block(const ConvBlockT<double>& blk, const TensorD& in, bool pool, double eps) {
    const int H = in.h, W = in.w, Cin = in.d, Cout = int(blk.w.cols());
    TensorD z(H, W, Cout);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int co = 0; co < Cout; ++co) {
                double acc = 0;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int sy = y + ky - 1, sx = x + kx - 1;
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        for (int ci = 0; ci < Cin; ++ci)
                            acc += in.at(sy, sx, ci) * blk.w((ky * 3 + kx) * Cin + ci, co);
                    }
                acc += blk.b[co];
                acc = (acc - blk.bn_mean[co]) / std::sqrt(blk.bn_var[co] + eps);
                acc = acc * blk.bn_gamma[co] + blk.bn_beta[co];
                z.at(y, x, co) = std::max(0.0, acc);
            }
    if (!pool) return z;
    TensorD out(H / 2, W / 2, Cout);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int c = 0; c < Cout; ++c)
                out.at(y, x, c) = std::max({z.at(2 * y, 2 * x, c), z.at(2 * y, 2 * x + 1, c),
                                            z.at(2 * y + 1, 2 * x, c), z.at(2 * y + 1, 2 * x + 1, c)});
    return out;
}

NetworkD random_double_net(const ModelConfig& cfg, uint64_t seed) {
    NetworkD net = init_network(cfg, seed).cast<double>();
    // non-identity batchnorm so its folding is actually exercised
    Rng rng(seed + 1000);
    for (auto& blk : net.blocks) {
        for (Eigen::Index i = 0; i < blk.bn_gamma.size(); ++i) {
            blk.bn_gamma[i] = 0.5 + rng.next_double();
            blk.bn_beta[i] = rng.normal() * 0.05;
            blk.bn_mean[i] = rng.normal() * 0.05;
            blk.bn_var[i] = 0.5 + rng.next_double();
            blk.b[i] = rng.normal() * 0.05;
        }
    }
    return net;
}

} // namespace

TEST_CASE("block evaluation matches a naive direct convolution") {
    ModelConfig cfg = tiny_config();
    NetworkD net = random_double_net(cfg, 3);
    TensorD img = random_image(8, 42);
    const TensorD* cur = &img;
    TensorD next;
    for (int b = 0; b < cfg.blocks(); ++b) {
        TensorD expect = oracle_block(net.blocks[size_t(b)], *cur, block_pools(b), cfg.bn_eps);
        next = eval_block(net.blocks[size_t(b)], *cur, block_pools(b), cfg.bn_eps);
        REQUIRE(next.same_shape(expect));
        for (size_t i = 0; i < next.data.size(); ++i)
            CHECK(next.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
        cur = &next;
    }
}

TEST_CASE("layer geometry follows the pooling schedule") {
    ModelConfig cfg;
    cfg.channels = {8, 8, 8, 8, 8, 8};
    cfg.input_side = 64;
    CHECK(layer_side(cfg, 0) == 32);
    CHECK(layer_side(cfg, 1) == 16);
    CHECK(layer_side(cfg, 2) == 8);
    CHECK(layer_side(cfg, 3) == 8);
    CHECK(layer_side(cfg, 5) == 8);
    CHECK(layer_dim(cfg, 0) == 32 * 32 * 8);
    CHECK(layer_dim(cfg, 3) == 8 * 8 * 8);
}

TEST_CASE("layer names parse back") {
    CHECK(layer_name(3) == "layers.3");
    CHECK(parse_layer("layers.0") == 0);
    CHECK(parse_layer("layers.12") == 12);
    CHECK_THROWS_AS(parse_layer("layer.3"), ConfigError);
    CHECK_THROWS_AS(parse_layer("layers.x"), ConfigError);
    CHECK_THROWS_AS(parse_layer("layers.-1"), ConfigError);
    CHECK_THROWS_AS(parse_layer("layers.3b"), ConfigError);
}

TEST_CASE("eligible layers need a nonlinearity before the logits") {
    ModelConfig cfg = tiny_config(false);
    CHECK(eligible_layers(cfg) == std::vector<int>{0, 1, 2});
    cfg.head_relu = true;
    CHECK(eligible_layers(cfg) == std::vector<int>{0, 1, 2, 3});
    CHECK(eligible_layers(cfg, {0, 2}) == std::vector<int>{1, 3});
}

TEST_CASE("forward capture composes like the full forward pass") {
    ModelConfig cfg = tiny_config();
    NetworkD net = random_double_net(cfg, 9);
    TensorD img = random_image(8, 5);

    std::vector<TensorD> all = forward_all(net, img);
    REQUIRE(all.size() == 4);
    for (int l = 0; l < 4; ++l) {
        TensorD cap = forward_capture(net, img, l);
        REQUIRE(cap.same_shape(all[size_t(l)]));
        for (size_t i = 0; i < cap.data.size(); ++i)
            CHECK(cap.data[i] == doctest::Approx(all[size_t(l)].data[i]));
    }

    TensorD a1 = forward_capture(net, img, 1);
    TensorD a3 = continue_to_layer(net, a1, 1, 3);
    for (size_t i = 0; i < a3.data.size(); ++i)
        CHECK(a3.data[i] == doctest::Approx(all[3].data[i]));

    VecD direct = logits(net, img);
    VecD resumed = continue_forward(net, a1, 1);
    REQUIRE(direct.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK(resumed[k] == doctest::Approx(direct[k]));
}

TEST_CASE("zero input under identity batchnorm yields the head bias") {
    ModelConfig cfg = tiny_config();
    Network net = init_network(cfg, 1); // zero biases, identity batchnorm
    TensorF img(8, 8, 3);
    VecF out = logits(net, img);
    for (int k = 0; k < out.size(); ++k) CHECK(out[k] == doctest::Approx(net.head_b[k]));
}

TEST_CASE("relu keeps block outputs nonnegative") {
    NetworkD net = random_double_net(tiny_config(), 17);
    TensorD img = random_image(8, 2);
    for (const TensorD& act : forward_all(net, img))
        for (double v : act.data) CHECK(v >= 0.0);
}

TEST_CASE("shape guards reject malformed inputs") {
    NetworkD net = random_double_net(tiny_config(), 4);
    TensorD bad(7, 7, 3);
    CHECK_THROWS(logits(net, bad));
    TensorD act(4, 4, 4); // valid for layer 0
    CHECK_NOTHROW(continue_forward(net, act, 0));
    CHECK_THROWS(continue_forward(net, act, 1)); // wrong channel count for layer 1
    CHECK_THROWS(continue_to_layer(net, act, 0, 0));
    CHECK_THROWS(forward_capture(net, random_image(8, 1), 9));
}

TEST_CASE("maxpool argmax addresses the winning cell") {
    TensorD in(4, 4, 2);
    Rng rng(8);
    for (auto& v : in.data) v = rng.normal();
    std::vector<int> am;
    TensorD out = maxpool2(in, &am);
    REQUIRE(out.h == 2);
    REQUIRE(am.size() == out.size());
    for (size_t i = 0; i < am.size(); ++i)
        CHECK(in.data[size_t(am[i])] == doctest::Approx(out.data[i]));
}

TEST_CASE("col2im is the adjoint of im2col") {
    // <im2col(x), y> == <x, col2im(y)> for random x, y
    TensorD x(5, 4, 3);
    Rng rng(77);
    for (auto& v : x.data) v = rng.normal();
    Mat<double> cx;
    im2col3x3(x, cx);
    Mat<double> y(cx.rows(), cx.cols());
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    TensorD back(5, 4, 3);
    col2im3x3(y, back);
    double lhs = (cx.array() * y.array()).sum();
    double rhs = 0;
    for (size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * back.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("logit gradients match central finite differences") {
    for (bool head_relu : {false, true}) {
        CAPTURE(head_relu);
        ModelConfig cfg = tiny_config(head_relu);
        NetworkD net = random_double_net(cfg, 21);
        TensorD img = random_image(8, 31);
        if (head_relu) {
            // a channel whose pooled mean lands exactly on the head relu kink
            // has no two-sided derivative there; nudge such channels alive
            EvalTrace<double> tr = forward_trace(net, img, true);
            for (Eigen::Index d = 0; d < tr.pooled.size(); ++d)
                while (tr.pooled[d] <= 1e-3) {
                    net.blocks.back().bn_beta[d] += 0.25;
                    tr = forward_trace(net, img, true);
                }
        }

        for (int layer = 0; layer < cfg.blocks(); ++layer) {
            TensorD act = forward_capture(net, img, layer);
            TensorD grad = grad_logit_wrt_activation(net, img, layer, 1);
            REQUIRE(grad.same_shape(act));

            Rng rng(uint64_t(1000 + layer));
            double analytic = 0;
            TensorD dir = act;
            for (size_t i = 0; i < dir.data.size(); ++i) {
                dir.data[i] = rng.normal();
                analytic += grad.data[i] * dir.data[i];
            }
            // small eps keeps the step inside one relu/argmax linear region
            const double eps = 1e-7;
            TensorD plus = act, minus = act;
            for (size_t i = 0; i < act.data.size(); ++i) {
                plus.data[i] += eps * dir.data[i];
                minus.data[i] -= eps * dir.data[i];
            }
            double numeric = (continue_forward(net, plus, layer)[1] -
                              continue_forward(net, minus, layer)[1]) /
                             (2 * eps);
            CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
        }
    }
}

TEST_CASE("gradients of all logits in one sweep agree with per-layer calls") {
    ModelConfig cfg = tiny_config();
    NetworkD net = random_double_net(cfg, 6);
    TensorD img = random_image(8, 11);
    EvalTrace<double> tr = forward_trace(net, img, true);
    std::vector<TensorD> per_layer = backward_logit(net, tr, 2);
    for (int layer = 0; layer < cfg.blocks(); ++layer) {
        TensorD single = grad_logit_wrt_activation(net, img, layer, 2);
        REQUIRE(single.same_shape(per_layer[size_t(layer)]));
        for (size_t i = 0; i < single.data.size(); ++i)
            CHECK(single.data[i] == doctest::Approx(per_layer[size_t(layer)].data[i]));
    }
    CHECK_THROWS(backward_logit(net, tr, 3));
    EvalTrace<double> thin = forward_trace(net, img, false);
    CHECK_THROWS(backward_logit(net, thin, 0));
}

TEST_CASE("float to double casts preserve values") {
    Network net = init_network(tiny_config(), 10);
    NetworkD d = net.cast<double>();
    CHECK(d.blocks.size() == net.blocks.size());
    CHECK(double(net.head_w(0, 0)) == d.head_w(0, 0));
    CHECK(double(net.blocks[2].w(5, 3)) == d.blocks[2].w(5, 3));
    Network back = d.cast<float>();
    CHECK(back.head_w(0, 0) == net.head_w(0, 0));
}

TEST_CASE("presets define six blocks and init is deterministic") {
    for (const char* name : {"simple", "standard", "spatial"}) {
        ModelConfig cfg = ModelConfig::preset(name);
        CHECK(cfg.blocks() == 6);
    }
    CHECK_THROWS_AS(ModelConfig::preset("huge"), ConfigError);

    ModelConfig cfg = tiny_config();
    Network a = init_network(cfg, 5);
    Network b = init_network(cfg, 5);
    Network c = init_network(cfg, 6);
    CHECK(a.blocks[0].w == b.blocks[0].w);
    CHECK(a.head_w == b.head_w);
    CHECK(a.blocks[0].w != c.blocks[0].w);
    // identity batchnorm and zero biases at init
    CHECK(a.blocks[1].bn_gamma.minCoeff() == 1.0f);
    CHECK(a.blocks[1].bn_var.maxCoeff() == 1.0f);
    CHECK(a.blocks[1].b.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("model forward on a rendered scene produces finite logits") {
    DatasetConfig data = DatasetConfig::simple();
    data.scale_to_side(32);
    data.seed = 3;
    ModelConfig cfg;
    cfg.channels = {6, 6, 6, 6};
    cfg.input_side = 32;
    cfg.num_classes = 5;
    Network net = init_network(cfg, 2);
    TensorF img = render_scene(dataset_scene(data, 0), 32);
    VecF out = logits(net, img);
    REQUIRE(out.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(std::isfinite(out[k]));
}
