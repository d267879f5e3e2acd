#include "cavlab/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cavlab/errors.hpp"

namespace cavlab {

LayerMap network_layer_map(const NetworkD& net, int l1, int l2) {
    if (l2 <= l1) throw std::invalid_argument("layer map needs l1 < l2");
    LayerMap map;
    map.in_dim = layer_dim(net.cfg, l1);
    map.out_dim = layer_dim(net.cfg, l2);
    const int side = layer_side(net.cfg, l1);
    const int ch = net.cfg.channels[size_t(l1)];
    map.apply = [&net, l1, l2, side, ch](const VecD& a) {
        TensorD t(side, side, ch);
        std::copy(a.data(), a.data() + a.size(), t.data.data());
        TensorD out = continue_to_layer(net, t, l1, l2);
        // copy before out dies; a Map would dangle once this frame returns
        return VecD(Eigen::Map<VecD>(out.data.data(), Eigen::Index(out.size())));
    };
    return map;
}

double mean_row_norm(const MatD& acts) {
    double s = 0;
    for (Eigen::Index i = 0; i < acts.rows(); ++i) s += acts.row(i).norm();
    return acts.rows() ? s / double(acts.rows()) : 0.0;
}

static void check_dims(const LayerMap& map, const MatD& A1, const MatD& A2, const VecD& v1,
                       const VecD& v2) {
    if (A1.cols() != map.in_dim || v1.size() != map.in_dim)
        throw std::invalid_argument("l1 dimension mismatch");
    if (A2.cols() != map.out_dim || v2.size() != map.out_dim)
        throw std::invalid_argument("l2 dimension mismatch");
    if (A1.rows() != A2.rows()) throw std::invalid_argument("input counts differ");
}

static double scale1(const PerturbationSpec& ps, const VecD& v1) {
    if (!ps.scaled) return ps.gamma;
    double n = v1.norm();
    if (n <= 0) throw std::invalid_argument("zero direction at l1");
    return ps.gamma * ps.norm1 / n;
}

std::vector<double> consistency_errors(const LayerMap& map, const MatD& A1, const MatD& A2,
                                       const VecD& v1, const VecD& v2,
                                       const PerturbationSpec& ps) {
    check_dims(map, A1, A2, v1, v2);
    const double s1 = scale1(ps, v1);
    VecD target2;
    if (ps.scaled) {
        double n2 = v2.norm();
        if (n2 <= 0) throw std::invalid_argument("zero direction at l2");
        target2 = (ps.gamma * ps.norm2 / n2) * v2;
    } else {
        target2 = ps.gamma * v2;
    }
    std::vector<double> errors(static_cast<size_t>(A1.rows()));
    for (Eigen::Index i = 0; i < A1.rows(); ++i) {
        VecD moved = map.apply(A1.row(i).transpose() + s1 * v1);
        errors[size_t(i)] = (moved - A2.row(i).transpose() - target2).norm();
    }
    return errors;
}

OptimResult optimise_cav(const LayerMap& map, const MatD& A1, const MatD& A2, const VecD& v1,
                         const VecD& v2_init, const PerturbationSpec& ps, const OptimConfig& oc) {
    check_dims(map, A1, A2, v1, v2_init);
    const double s1 = scale1(ps, v1);
    const Eigen::Index n = A1.rows();

    // residuals r_i = f(a1_i + s1 v1) - a2_i do not depend on v2
    MatD R(n, map.out_dim);
    for (Eigen::Index i = 0; i < n; ++i)
        R.row(i) =
            (map.apply(A1.row(i).transpose() + s1 * v1) - A2.row(i).transpose()).transpose();

    VecD u = v2_init;
    VecD best = u;
    double best_err = -1;
    VecD m = VecD::Zero(u.size()), vv = VecD::Zero(u.size());
    OptimResult out;
    int rising = 0;
    double prev = -1;
    const double c = ps.gamma * ps.norm2; // scaled target magnitude

    for (int step = 0; step < oc.steps; ++step) {
        double mean_err = 0;
        VecD grad = VecD::Zero(u.size());
        if (ps.scaled) {
            double un = u.norm();
            if (un <= 0) throw NumericError("direction collapsed to zero during optimisation");
            VecD uhat = u / un;
            VecD dsum = VecD::Zero(u.size());
            for (Eigen::Index i = 0; i < n; ++i) {
                VecD d = R.row(i).transpose() - c * uhat;
                double dn = std::max(d.norm(), 1e-12);
                mean_err += dn;
                dsum += d / dn;
            }
            mean_err /= double(n);
            // dJ/du = -(c / (n ||u||)) (I - uhat uhat^T) sum_i d_i/||d_i||
            grad = -(c / (double(n) * un)) * (dsum - uhat * uhat.dot(dsum));
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                VecD d = R.row(i).transpose() - ps.gamma * u;
                double dn = std::max(d.norm(), 1e-12);
                mean_err += dn;
                grad -= (ps.gamma / dn) * d;
            }
            mean_err /= double(n);
            grad /= double(n);
        }
        out.trace.push_back(mean_err);
        if (!std::isfinite(mean_err))
            throw NumericError("consistency optimisation produced non-finite error");
        if (best_err < 0 || mean_err < best_err) {
            best_err = mean_err;
            best = u;
        }
        if (prev >= 0 && mean_err > prev) {
            if (++rising >= oc.divergence_patience) {
                out.aborted = true;
                break;
            }
        } else {
            rising = 0;
        }
        prev = mean_err;

        m = oc.beta1 * m + (1.0 - oc.beta1) * grad;
        vv = oc.beta2 * vv + (1.0 - oc.beta2) * grad.cwiseProduct(grad);
        double corr1 = 1.0 - std::pow(oc.beta1, step + 1);
        double corr2 = 1.0 - std::pow(oc.beta2, step + 1);
        u -= (oc.lr * (m / corr1).array() / ((vv / corr2).array().sqrt() + oc.eps)).matrix();
    }
    out.v2 = best;
    return out;
}

VecD projected_cav(const LayerMap& map, const VecD& v1, bool recentred) {
    VecD out = map.apply(v1);
    if (recentred) out -= map.apply(VecD::Zero(map.in_dim));
    double n = out.norm();
    if (n <= 0) throw NumericError("projected direction is zero");
    return out / n;
}

VecD random_direction(int dim, Rng& rng) {
    VecD v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.uniform_real(-0.5, 0.5);
    double n = v.norm();
    if (n <= 0) return random_direction(dim, rng);
    return v / n;
}

// ---- theory witnesses ----

TheoryCaseResult theory_linear_case(uint64_t seed) {
    TheoryCaseResult res;
    res.name = "linear";
    Rng rng = Rng::stream(seed, "theory-linear");
    const int din = 24, dout = 16, n = 32;
    MatD M(dout, din);
    VecD b(dout);
    for (Eigen::Index i = 0; i < dout; ++i) {
        b[i] = rng.normal();
        for (Eigen::Index j = 0; j < din; ++j) M(i, j) = rng.normal() / std::sqrt(double(din));
    }
    LayerMap map{din, dout, [&](const VecD& a) { return VecD(M * a + b); }};

    VecD v1(din);
    for (int i = 0; i < din; ++i) v1[i] = rng.normal();
    v1.normalize();
    MatD A1(n, din);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < din; ++j) A1(i, j) = rng.normal();
    MatD A2(n, dout);
    for (Eigen::Index i = 0; i < n; ++i) A2.row(i) = map.apply(A1.row(i).transpose()).transpose();

    PerturbationSpec ps;
    ps.scaled = false;
    ps.gamma = 1.0;
    VecD v2 = map.apply(v1) - map.apply(VecD::Zero(din)); // = M v1
    auto errs = consistency_errors(map, A1, A2, v1, v2, ps);
    res.metric = *std::max_element(errs.begin(), errs.end());
    res.pass = res.metric <= 1e-5;
    res.detail = "max error " + std::to_string(res.metric) + " with v2 = f(v1) - f(0)";
    return res;
}

TheoryCaseResult theory_relu_case(uint64_t seed) {
    TheoryCaseResult res;
    res.name = "relu";
    Rng rng = Rng::stream(seed, "theory-relu");
    const int d = 12, trials = 20;
    auto relu = [](const VecD& a) { return VecD(a.cwiseMax(0.0)); };
    double min_gap = 1e300;
    bool all_contradict = true;
    for (int t = 0; t < trials; ++t) {
        VecD u(d);
        for (int i = 0; i < d; ++i) u[i] = rng.normal();
        u.normalize();
        VecD a_live = 2.0 * u.cwiseAbs() + VecD::Ones(d);  // relu(a+u)-relu(a) = u
        VecD a_dead = -2.0 * u.cwiseAbs() - VecD::Ones(d); // relu(a+u)-relu(a) = 0
        VecD v_live = relu(a_live + u) - relu(a_live);
        VecD v_dead = relu(a_dead + u) - relu(a_dead);
        if ((v_live - u).norm() > 1e-12 || v_dead.norm() > 1e-12) {
            all_contradict = false;
            break;
        }
        // any single v2 leaves max(||u - v2||, ||v2||) >= ||u||/2
        double gap = u.norm() / 2.0;
        for (const VecD& v2 : {u, VecD(VecD::Zero(d)), VecD(0.5 * u)}) {
            double worst = std::max((v_live - v2).norm(), (v_dead - v2).norm());
            if (worst < gap - 1e-12) all_contradict = false;
        }
        min_gap = std::min(min_gap, gap);
    }
    res.metric = min_gap;
    res.pass = all_contradict && min_gap > 1e-6;
    res.detail = "irreducible error >= " + std::to_string(min_gap) + " for every tested u";
    return res;
}

TheoryCaseResult theory_sigmoid_case() {
    TheoryCaseResult res;
    res.name = "sigmoid";
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double u = 1.0;
    auto v_direct = [&](double a) { return sig(a + u) - sig(a); };
    auto v_closed = [&](double a) {
        double ea = std::exp(a), eu = std::exp(-u);
        return ea * (1.0 - eu) / ((ea + 1.0) * (ea + eu));
    };
    double v0 = v_direct(0.0), v2 = v_direct(2.0);
    double agree = std::max(std::abs(v0 - v_closed(0.0)), std::abs(v2 - v_closed(2.0)));
    res.metric = std::abs(v0 - v2);
    res.pass = agree <= 1e-12 && res.metric > 0.01;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "v(0) = %.4f, v(2) = %.4f, spread %.4f", v0, v2, res.metric);
    res.detail = buf;
    return res;
}

std::vector<TheoryCaseResult> verify_theory_cases(uint64_t seed) {
    return {theory_linear_case(seed), theory_relu_case(seed), theory_sigmoid_case()};
}

} // namespace cavlab
