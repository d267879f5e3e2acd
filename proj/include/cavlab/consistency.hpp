#pragma once
#include <functional>
#include <string>
#include <vector>

#include "cavlab/model.hpp"
#include "cavlab/rng.hpp"

namespace cavlab {

// map between two flattened activation spaces
struct LayerMap {
    int in_dim = 0, out_dim = 0;
    std::function<VecD(const VecD&)> apply;
};

// g_{l1 -> l2} of the network, operating on flattened activations
LayerMap network_layer_map(const NetworkD& net, int l1, int l2);

struct PerturbationSpec {
    double gamma = 0.01;
    bool scaled = true;     // perturbation magnitude gamma * mean-norm / ||v||
    double norm1 = 1.0, norm2 = 1.0; // mean activation norms at the two layers
};

double mean_row_norm(const MatD& acts);

// per input: || f(a1 + s1 v1) - (a2 + s2 v2) ||_2
std::vector<double> consistency_errors(const LayerMap& map, const MatD& A1, const MatD& A2,
                                       const VecD& v1, const VecD& v2,
                                       const PerturbationSpec& ps);

struct OptimConfig {
    double lr = 1e-2;
    int steps = 300;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int divergence_patience = 10;
};

struct OptimResult {
    VecD v2;
    std::vector<double> trace; // mean error per step
    bool aborted = false;      // stopped early after persistent divergence
};

// Minimizes the mean consistency error over v2 with adam. v2 enters the error
// only through the target, so f is evaluated once up front.
OptimResult optimise_cav(const LayerMap& map, const MatD& A1, const MatD& A2, const VecD& v1,
                         const VecD& v2_init, const PerturbationSpec& ps, const OptimConfig& oc);

// f(v1) - f(0) (recentred) or f(v1), unit-normalized
VecD projected_cav(const LayerMap& map, const VecD& v1, bool recentred = true);

// elementwise U(-0.5, 0.5), then unit norm
VecD random_direction(int dim, Rng& rng);

struct TheoryCaseResult {
    std::string name;
    bool pass = false;
    double metric = 0;
    std::string detail;
};

// linear map: the pushed-forward direction f(v1) - f(0) is exactly consistent
TheoryCaseResult theory_linear_case(uint64_t seed);
// relu: inputs that force v = u and inputs that force v = 0, for any u != 0
TheoryCaseResult theory_relu_case(uint64_t seed);
// sigmoid: the consistent direction depends on the input, closed form checked
TheoryCaseResult theory_sigmoid_case();
std::vector<TheoryCaseResult> verify_theory_cases(uint64_t seed);

} // namespace cavlab
