#include "cavlab/entanglement.hpp"

#include <stdexcept>

namespace cavlab {

SimilarityMatrix cosine_matrix(const CavStore& store, const std::vector<std::string>& concepts,
                               int layer) {
    SimilarityMatrix out;
    out.concepts = concepts;
    out.layer = layer;
    const int n = int(concepts.size());
    out.m.setZero(n, n);
    for (int i = 0; i < n; ++i) {
        auto fi = store.family(concepts[size_t(i)], layer);
        if (fi.empty()) throw std::invalid_argument("no cavs for '" + concepts[size_t(i)] + "'");
        for (int j = 0; j < n; ++j) {
            auto fj = store.family(concepts[size_t(j)], layer);
            if (fj.empty())
                throw std::invalid_argument("no cavs for '" + concepts[size_t(j)] + "'");
            double sum = 0;
            long pairs = 0;
            for (const Cav* a : fi)
                for (const Cav* b : fj) {
                    if (i == j && a->r == b->r) continue; // never the identical member
                    if (a->v.size() != b->v.size())
                        throw std::invalid_argument("cav dimensions differ within a layer");
                    double dot = 0;
                    for (size_t k = 0; k < a->v.size(); ++k)
                        dot += double(a->v[k]) * double(b->v[k]);
                    sum += dot;
                    ++pairs;
                }
            out.m(i, j) = pairs ? sum / double(pairs) : 0.0;
        }
    }
    return out;
}

std::vector<double> dot_distribution(const MatF& acts, const Cav& cav) {
    if (size_t(acts.cols()) != cav.v.size())
        throw std::invalid_argument("activation dimension does not match the cav");
    std::vector<double> out(static_cast<size_t>(acts.rows()));
    for (Eigen::Index i = 0; i < acts.rows(); ++i) {
        double s = 0;
        const float* row = acts.row(i).data();
        for (size_t k = 0; k < cav.v.size(); ++k) s += double(row[k]) * double(cav.v[k]);
        out[size_t(i)] = s;
    }
    return out;
}

double pair_fraction(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("empty sample in pair fraction");
    double wins = 0;
    for (double x : a)
        for (double y : b) {
            if (x > y) wins += 1.0;
            else if (x == y) wins += 0.5;
        }
    return wins / (double(a.size()) * double(b.size()));
}

SeparationResult separation_test(const std::vector<double>& pos_dots,
                                 const std::vector<double>& neg_dots, double threshold) {
    SeparationResult r;
    r.fraction = pair_fraction(pos_dots, neg_dots);
    r.separated = r.fraction > threshold;
    return r;
}

} // namespace cavlab
