#pragma once
#include <vector>

namespace cavlab {

double log_gamma(double x);

// I_x(a, b), Lentz continued fraction, absolute error well under 1e-10
double reg_incomplete_beta(double a, double b, double x);

double mean_of(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v); // n-1 denominator, 0 when n < 2

struct WelchResult {
    double t = 0;
    double df = 0;
    double p = 1; // two-sided
};

// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
// Degenerate zero-variance pairs resolve to p = 1 (equal means) or p = 0.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

} // namespace cavlab
