#pragma once
#include <string>
#include <vector>

#include "cavlab/cav.hpp"

namespace cavlab {

// mean cosine between members of two cav families at one layer; pairs with the
// same member index are skipped on the diagonal so self-similarity is measured
// across retrainings, never against the identical vector
struct SimilarityMatrix {
    std::vector<std::string> concepts;
    int layer = 0;
    MatD m;
};

SimilarityMatrix cosine_matrix(const CavStore& store, const std::vector<std::string>& concepts,
                               int layer);

// raw activation dot products with the cav direction
std::vector<double> dot_distribution(const MatF& acts, const Cav& cav);

// fraction of (a, b) pairs with a > b, ties counted half: the rank statistic
double pair_fraction(const std::vector<double>& a, const std::vector<double>& b);

// relaxation of the all-pairs separation requirement
struct SeparationResult {
    double fraction = 0;
    bool separated = false;
};
SeparationResult separation_test(const std::vector<double>& pos_dots,
                                 const std::vector<double>& neg_dots, double threshold = 0.95);

} // namespace cavlab
