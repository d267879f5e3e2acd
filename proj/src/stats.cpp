#include "cavlab/stats.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

#include "cavlab/errors.hpp"

namespace cavlab {

double log_gamma(double x) {
    // Lanczos, g = 7, 9 coefficients
    static const double c[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                                771.32342877765313,   -176.61502916214059, 12.507343278686905,
                                -0.13857109526572012, 9.9843695780195716e-6,
                                1.5056327351493116e-7};
    if (x < 0.5) {
        // reflection
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    }
    x -= 1.0;
    double a = c[0];
    double t = x + 7.5;
    for (int i = 1; i < 9; ++i) a += c[i] / (x + i);
    return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

static double betacf(double a, double b, double x) {
    const int max_iter = 400;
    const double eps = 3e-16, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lnfront = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                     b * std::log(1.0 - x);
    double front = std::exp(lnfront);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size() - 1);
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("welch test needs non-empty samples");
    WelchResult r;
    double n1 = double(a.size()), n2 = double(b.size());
    double m1 = mean_of(a), m2 = mean_of(b);
    double v1 = sample_variance(a) / n1, v2 = sample_variance(b) / n2;
    double se2 = v1 + v2;
    if (se2 <= 0.0) {
        r.t = m1 == m2 ? 0.0 : std::numeric_limits<double>::infinity();
        r.df = n1 + n2 - 2.0;
        r.p = m1 == m2 ? 1.0 : 0.0;
        return r;
    }
    r.t = (m1 - m2) / std::sqrt(se2);
    double den = 0.0;
    if (a.size() > 1) den += v1 * v1 / (n1 - 1.0);
    if (b.size() > 1) den += v2 * v2 / (n2 - 1.0);
    r.df = den > 0.0 ? se2 * se2 / den : n1 + n2 - 2.0;
    double x = r.df / (r.df + r.t * r.t);
    r.p = reg_incomplete_beta(r.df / 2.0, 0.5, x);
    return r;
}

} // namespace cavlab
