#include "cavlab/spatial.hpp"

#include <cmath>
#include <stdexcept>

#include "cavlab/entanglement.hpp"

namespace cavlab {

MatD direction_grid(const std::vector<float>& v, int side, int channels, GridReduction red) {
    if (v.size() != size_t(side) * side * channels)
        throw std::invalid_argument("direction length does not match side*side*channels");
    MatD grid(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const float* cell = v.data() + (size_t(y) * side + x) * channels;
            double acc = 0;
            for (int d = 0; d < channels; ++d)
                acc += red == GridReduction::Norm ? double(cell[d]) * double(cell[d])
                                                  : double(cell[d]);
            grid(y, x) = red == GridReduction::Norm ? std::sqrt(acc) : acc / channels;
        }
    return grid;
}

MatD cav_grid(const Cav& cav, const ModelConfig& cfg, GridReduction red) {
    int side = layer_side(cfg, cav.layer);
    int channels = cfg.channels[size_t(cav.layer)];
    return direction_grid(cav.v, side, channels, red);
}

MatD family_mean_grid(const std::vector<const Cav*>& members, const ModelConfig& cfg,
                      GridReduction red) {
    if (members.empty()) throw std::invalid_argument("empty cav family");
    MatD sum = cav_grid(*members[0], cfg, red);
    for (size_t i = 1; i < members.size(); ++i) sum += cav_grid(*members[i], cfg, red);
    return sum / double(members.size());
}

double grid_mass_fraction(const MatD& grid, Region half) {
    const Eigen::Index H = grid.rows(), W = grid.cols();
    double total = grid.sum();
    if (total == 0.0) throw std::invalid_argument("grid has zero total mass");
    double part = 0;
    switch (half) {
        case Region::Left: part = grid.leftCols(W / 2).sum(); break;
        case Region::Right: part = grid.rightCols(W / 2).sum(); break;
        case Region::Top: part = grid.topRows(H / 2).sum(); break;
        case Region::Bottom: part = grid.bottomRows(H / 2).sum(); break;
        case Region::None: throw std::invalid_argument("mass fraction needs a half");
    }
    return part / total;
}

SpatialDependence spatial_dependence_test(const MatF& acts_mu1, const MatF& acts_mu2,
                                          const Cav& cav, double threshold) {
    SpatialDependence out;
    out.fraction = pair_fraction(dot_distribution(acts_mu1, cav), dot_distribution(acts_mu2, cav));
    out.flagged = out.fraction > threshold;
    return out;
}

} // namespace cavlab
