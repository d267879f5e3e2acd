#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cavlab/consistency.hpp"
#include "cavlab/errors.hpp"

using namespace cavlab;

namespace {

// linear map with bias, for analytic expectations
struct LinearMap {
    MatD M;
    VecD b;
    LayerMap map() const {
        LayerMap m;
        m.in_dim = int(M.cols());
        m.out_dim = int(M.rows());
        const MatD* Mp = &M;
        const VecD* bp = &b;
        m.apply = [Mp, bp](const VecD& a) { return VecD(*Mp * a + *bp); };
        return m;
    }
};

LinearMap random_linear(int dout, int din, uint64_t seed, bool with_bias) {
    LinearMap lm;
    lm.M.resize(dout, din);
    lm.b = VecD::Zero(dout);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < dout; ++i) {
        if (with_bias) lm.b[i] = rng.normal();
        for (Eigen::Index j = 0; j < din; ++j) lm.M(i, j) = rng.normal() / std::sqrt(double(din));
    }
    return lm;
}

MatD random_rows(int n, int d, uint64_t seed) {
    MatD A(n, d);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
    return A;
}

} // namespace

TEST_CASE("network layer map reproduces the forward pass") {
    ModelConfig cfg;
    cfg.channels = {5, 6, 7, 5};
    cfg.input_side = 16;
    cfg.num_classes = 2;
    NetworkD net = init_network(cfg, 31).cast<double>();
    TensorD img(16, 16, 3);
    Rng rng(3);
    for (auto& v : img.data) v = rng.next_double();

    LayerMap map = network_layer_map(net, 1, 2);
    CHECK(map.in_dim == layer_dim(cfg, 1));
    CHECK(map.out_dim == layer_dim(cfg, 2));

    TensorD a1 = forward_capture(net, img, 1);
    TensorD a2 = forward_capture(net, img, 2);
    VecD flat1 = Eigen::Map<VecD>(a1.data.data(), Eigen::Index(a1.size()));
    VecD out = map.apply(flat1);
    REQUIRE(out.size() == Eigen::Index(a2.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(a2.data[size_t(i)]));

    CHECK_THROWS(network_layer_map(net, 2, 2));
    CHECK_THROWS(network_layer_map(net, 3, 1));
}

TEST_CASE("mean row norm") {
    MatD A(2, 2);
    A << 3, 4, 0, 12; // norms 5 and 12
    CHECK(mean_row_norm(A) == doctest::Approx(8.5));
    CHECK(mean_row_norm(MatD(0, 2)) == 0.0);
}

TEST_CASE("identity map with matching directions has zero error") {
    const int d = 6, n = 5;
    LinearMap lm;
    lm.M = MatD::Identity(d, d);
    lm.b = VecD::Zero(d);
    LayerMap map = lm.map();
    MatD A1 = random_rows(n, d, 2);
    MatD A2 = A1;
    VecD v = random_rows(1, d, 5).row(0).transpose();

    PerturbationSpec ps;
    ps.gamma = 0.03;
    ps.scaled = true;
    ps.norm1 = 1.7;
    ps.norm2 = 1.7; // same space, same scale
    auto errs = consistency_errors(map, A1, A2, v, v, ps);
    REQUIRE(errs.size() == size_t(n));
    for (double e : errs) CHECK(e == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gamma zero reduces to reconstruction error") {
    LinearMap lm = random_linear(7, 9, 8, true);
    LayerMap map = lm.map();
    MatD A1 = random_rows(6, 9, 3);
    MatD A2(6, 7);
    for (Eigen::Index i = 0; i < 6; ++i)
        A2.row(i) = map.apply(A1.row(i).transpose()).transpose();
    VecD v1 = random_rows(1, 9, 4).row(0).transpose();
    VecD v2 = random_rows(1, 7, 5).row(0).transpose();

    PerturbationSpec ps;
    ps.gamma = 0.0;
    ps.scaled = false;
    for (double e : consistency_errors(map, A1, A2, v1, v2, ps))
        CHECK(e == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("error grows linearly in gamma under a pure linear map") {
    LinearMap lm = random_linear(8, 10, 12, false); // no bias
    LayerMap map = lm.map();
    MatD A1 = random_rows(4, 10, 6);
    MatD A2(4, 8);
    for (Eigen::Index i = 0; i < 4; ++i)
        A2.row(i) = map.apply(A1.row(i).transpose()).transpose();
    VecD v1 = random_rows(1, 10, 7).row(0).transpose();
    VecD v2 = random_rows(1, 8, 9).row(0).transpose();

    PerturbationSpec p1, p2;
    p1.scaled = p2.scaled = false;
    p1.gamma = 0.01;
    p2.gamma = 0.02;
    auto e1 = consistency_errors(map, A1, A2, v1, v2, p1);
    auto e2 = consistency_errors(map, A1, A2, v1, v2, p2);
    for (size_t i = 0; i < e1.size(); ++i) CHECK(e2[i] == doctest::Approx(2.0 * e1[i]));
    // per-input error is ||gamma (M v1 - v2)||, identical across inputs
    double expect = 0.01 * (lm.M * v1 - v2).norm();
    for (double e : e1) CHECK(e == doctest::Approx(expect));
}

TEST_CASE("scaled perturbations ignore the stored magnitude of the directions") {
    LinearMap lm = random_linear(6, 6, 20, true);
    LayerMap map = lm.map();
    MatD A1 = random_rows(5, 6, 21);
    MatD A2 = random_rows(5, 6, 22);
    VecD v1 = random_rows(1, 6, 23).row(0).transpose();
    VecD v2 = random_rows(1, 6, 24).row(0).transpose();

    PerturbationSpec ps;
    ps.gamma = 0.05;
    ps.scaled = true;
    ps.norm1 = 2.0;
    ps.norm2 = 3.0;
    auto base = consistency_errors(map, A1, A2, v1, v2, ps);
    auto rescaled = consistency_errors(map, A1, A2, VecD(10.0 * v1), VecD(0.25 * v2), ps);
    for (size_t i = 0; i < base.size(); ++i)
        CHECK(rescaled[i] == doctest::Approx(base[i]).epsilon(1e-12));
}

TEST_CASE("dimension and degeneracy guards") {
    LinearMap lm = random_linear(4, 5, 30, false);
    LayerMap map = lm.map();
    MatD A1 = random_rows(3, 5, 31);
    MatD A2 = random_rows(3, 4, 32);
    VecD v1 = random_rows(1, 5, 33).row(0).transpose();
    VecD v2 = random_rows(1, 4, 34).row(0).transpose();
    PerturbationSpec ps;

    CHECK_THROWS(consistency_errors(map, random_rows(3, 4, 1), A2, v1, v2, ps));
    CHECK_THROWS(consistency_errors(map, A1, random_rows(3, 5, 1), v1, v2, ps));
    CHECK_THROWS(consistency_errors(map, A1, random_rows(2, 4, 1), v1, v2, ps));
    CHECK_THROWS(consistency_errors(map, A1, A2, VecD(VecD::Zero(5)), v2, ps));
    CHECK_THROWS(consistency_errors(map, A1, A2, v1, VecD(VecD::Zero(4)), ps));
    ps.scaled = false; // unscaled mode tolerates zero directions
    CHECK_NOTHROW(consistency_errors(map, A1, A2, VecD(VecD::Zero(5)), VecD(VecD::Zero(4)), ps));
}

TEST_CASE("optimisation recovers the pushed-forward direction of a linear map") {
    const int din = 10, dout = 8, n = 24;
    LinearMap lm = random_linear(dout, din, 40, true);
    LayerMap map = lm.map();
    MatD A1 = random_rows(n, din, 41);
    MatD A2(n, dout);
    for (Eigen::Index i = 0; i < n; ++i)
        A2.row(i) = map.apply(A1.row(i).transpose()).transpose();
    VecD v1 = random_rows(1, din, 42).row(0).transpose();
    v1.normalize();

    PerturbationSpec ps;
    ps.gamma = 0.1;
    ps.scaled = false;

    // the residual is exactly gamma * M v1, so the optimum is u = M v1
    VecD init = random_rows(1, dout, 43).row(0).transpose() * 0.1;
    OptimConfig oc;
    oc.steps = 2500;
    oc.lr = 0.02;
    OptimResult res = optimise_cav(map, A1, A2, v1, init, ps, oc);
    CHECK_FALSE(res.aborted);
    REQUIRE_FALSE(res.trace.empty());
    CHECK(res.trace.back() < res.trace.front());

    VecD expect = lm.M * v1;
    auto errs = consistency_errors(map, A1, A2, v1, res.v2, ps);
    double mean_err = 0;
    for (double e : errs) mean_err += e;
    mean_err /= double(errs.size());
    CHECK(mean_err < 0.1 * ps.gamma * expect.norm()); // most of the gap closed
    double cosine = res.v2.dot(expect) / (res.v2.norm() * expect.norm());
    CHECK(cosine > 0.99);
}

TEST_CASE("scaled optimisation aligns the direction with the shared residual") {
    const int din = 6, dout = 6, n = 10;
    LinearMap lm = random_linear(dout, din, 50, false);
    LayerMap map = lm.map();
    MatD A1 = random_rows(n, din, 51);
    MatD A2(n, dout);
    for (Eigen::Index i = 0; i < n; ++i)
        A2.row(i) = map.apply(A1.row(i).transpose()).transpose();
    VecD v1 = random_rows(1, din, 52).row(0).transpose();

    PerturbationSpec ps;
    ps.gamma = 0.05;
    ps.scaled = true;
    ps.norm1 = 1.0;
    ps.norm2 = 1.0;

    VecD init = random_rows(1, dout, 53).row(0).transpose();
    OptimConfig oc;
    oc.steps = 1500;
    oc.lr = 0.01;
    OptimResult res = optimise_cav(map, A1, A2, v1, init, ps, oc);

    // every residual equals s1 * M v1; the best unit direction points along it
    VecD r = ps.gamma * ps.norm1 / v1.norm() * (lm.M * v1);
    double cosine = res.v2.dot(r) / (res.v2.norm() * r.norm());
    CHECK(cosine > 0.99);
    double best = std::abs(r.norm() - ps.gamma * ps.norm2);
    auto errs = consistency_errors(map, A1, A2, v1, res.v2, ps);
    CHECK(errs[0] == doctest::Approx(best).epsilon(0.05));
}

TEST_CASE("a wildly overstepping optimiser aborts instead of looping") {
    const int d = 4, n = 6;
    LinearMap lm = random_linear(d, d, 70, false);
    LayerMap map = lm.map();
    MatD A1 = random_rows(n, d, 71);
    MatD A2(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        A2.row(i) = map.apply(A1.row(i).transpose()).transpose();
    VecD v1 = random_rows(1, d, 72).row(0).transpose();
    VecD init = random_rows(1, d, 73).row(0).transpose();

    PerturbationSpec ps;
    ps.gamma = 0.05;
    ps.scaled = false;
    OptimConfig oc;
    oc.steps = 4000;
    oc.lr = 50.0; // steps dwarf the optimum, so the error oscillates upward
    oc.divergence_patience = 1;
    OptimResult res = optimise_cav(map, A1, A2, v1, init, ps, oc);
    CHECK(res.aborted);
    CHECK(res.trace.size() < 4000);
    // the reported direction is the best seen, not the diverged iterate
    auto best_errs = consistency_errors(map, A1, A2, v1, res.v2, ps);
    double best = 0;
    for (double e : best_errs) best += e;
    best /= double(best_errs.size());
    CHECK(best <= res.trace.back() + 1e-12);
}

TEST_CASE("projected direction is the normalized bias-free push-forward") {
    LinearMap lm = random_linear(5, 7, 60, true);
    LayerMap map = lm.map();
    VecD v1 = random_rows(1, 7, 61).row(0).transpose();

    VecD rec = projected_cav(map, v1, true);
    CHECK(rec.norm() == doctest::Approx(1.0));
    VecD expect = lm.M * v1;
    expect.normalize();
    CHECK(rec.dot(expect) == doctest::Approx(1.0).epsilon(1e-10));

    VecD raw = projected_cav(map, v1, false);
    VecD expect_raw = lm.M * v1 + lm.b;
    expect_raw.normalize();
    CHECK(raw.dot(expect_raw) == doctest::Approx(1.0).epsilon(1e-10));

    LayerMap zero{7, 5, [](const VecD&) { return VecD(VecD::Zero(5)); }};
    CHECK_THROWS_AS(projected_cav(zero, v1, true), NumericError);
}

TEST_CASE("random directions are unit length and stream-stable") {
    Rng a(77), b(77);
    VecD u = random_direction(20, a);
    VecD w = random_direction(20, b);
    CHECK(u.norm() == doctest::Approx(1.0));
    CHECK((u - w).norm() == 0.0);
    VecD next = random_direction(20, a);
    CHECK((u - next).norm() > 1e-3);
}

TEST_CASE("theory witnesses hold") {
    auto results = verify_theory_cases(123);
    REQUIRE(results.size() == 3);
    for (const auto& r : results) {
        CAPTURE(r.name);
        CAPTURE(r.detail);
        CHECK(r.pass);
    }
    CHECK(results[0].name == "linear");
    CHECK(results[0].metric <= 1e-5);
    CHECK(results[1].name == "relu");
    CHECK(results[1].metric == doctest::Approx(0.5)); // ||u||/2 for unit u
    CHECK(results[2].name == "sigmoid");
    CHECK(results[2].metric == doctest::Approx(0.1593).epsilon(1e-3));
}

TEST_CASE("sigmoid witness values match the closed form") {
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    CHECK(sig(1.0) - sig(0.0) == doctest::Approx(0.2311).epsilon(1e-3));
    CHECK(sig(3.0) - sig(2.0) == doctest::Approx(0.0718).epsilon(1e-3));
}
