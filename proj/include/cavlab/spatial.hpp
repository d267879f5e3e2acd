#pragma once
#include <vector>

#include "cavlab/cav.hpp"
#include "cavlab/elements.hpp"
#include "cavlab/model.hpp"

namespace cavlab {

enum class GridReduction { Norm, Mean };

// reshape a flattened direction to (H, W, D) and reduce over channels:
// Norm gives the per-cell L2 norm, Mean the signed channel mean
MatD direction_grid(const std::vector<float>& v, int side, int channels, GridReduction red);

MatD cav_grid(const Cav& cav, const ModelConfig& cfg, GridReduction red);

// mean of the member grids
MatD family_mean_grid(const std::vector<const Cav*>& members, const ModelConfig& cfg,
                      GridReduction red);

// sum over the half / sum over everything; the middle row or column of an
// odd-sized grid belongs to neither half
double grid_mass_fraction(const MatD& grid, Region half);

struct SpatialDependence {
    double fraction = 0; // P(a_mu1 . v > a_mu2 . v), ties half
    bool flagged = false;
};

// location sensitivity of a cav: dots of activations from probe positives
// placed in two disjoint halves
SpatialDependence spatial_dependence_test(const MatF& acts_mu1, const MatF& acts_mu2,
                                          const Cav& cav, double threshold = 0.95);

} // namespace cavlab
