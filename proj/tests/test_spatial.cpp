#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cavlab/spatial.hpp"

using namespace cavlab;

namespace {

Cav cav_from(std::vector<float> v, int layer = 0) {
    Cav c;
    c.concept_name = "t";
    c.layer = layer;
    c.v = std::move(v);
    return c;
}

} // namespace

TEST_CASE("norm grid takes the per-cell channel norm") {
    // 2x2 grid, 3 channels: cell (y,x) holds base+0, +1, +2
    std::vector<float> v;
    for (int cell = 0; cell < 4; ++cell)
        for (int d = 0; d < 3; ++d) v.push_back(float(3 * cell + d));
    MatD g = direction_grid(v, 2, 3, GridReduction::Norm);
    CHECK(g(0, 0) == doctest::Approx(std::sqrt(0.0 + 1.0 + 4.0)));
    CHECK(g(0, 1) == doctest::Approx(std::sqrt(9.0 + 16.0 + 25.0)));
    CHECK(g(1, 0) == doctest::Approx(std::sqrt(36.0 + 49.0 + 64.0)));
    CHECK(g(1, 1) == doctest::Approx(std::sqrt(81.0 + 100.0 + 121.0)));

    MatD m = direction_grid(v, 2, 3, GridReduction::Mean);
    CHECK(m(0, 0) == doctest::Approx(1.0));
    CHECK(m(1, 1) == doctest::Approx(10.0));

    CHECK_THROWS(direction_grid(v, 2, 4, GridReduction::Norm));
}

TEST_CASE("mean reduction keeps sign, norm does not") {
    std::vector<float> v{-1.0f, -1.0f, 2.0f, 2.0f};
    MatD norm = direction_grid(v, 2, 1, GridReduction::Norm);
    MatD mean = direction_grid(v, 2, 1, GridReduction::Mean);
    CHECK(norm(0, 0) == doctest::Approx(1.0));
    CHECK(mean(0, 0) == doctest::Approx(-1.0));
    CHECK(norm(1, 1) == doctest::Approx(2.0));
    CHECK(mean(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("cav grid uses the layer geometry") {
    ModelConfig cfg;
    cfg.channels = {4, 8};
    cfg.input_side = 8;
    // layer 1: side 2 (two pools), 8 channels
    std::vector<float> v(2 * 2 * 8, 0.5f);
    Cav c = cav_from(v, 1);
    MatD g = cav_grid(c, cfg, GridReduction::Norm);
    REQUIRE(g.rows() == 2);
    REQUIRE(g.cols() == 2);
    CHECK(g(0, 0) == doctest::Approx(0.5 * std::sqrt(8.0)));
}

TEST_CASE("family mean grid averages member grids") {
    ModelConfig cfg;
    cfg.channels = {1};
    cfg.input_side = 4;
    // layer 0 side 2, 1 channel
    Cav a = cav_from({1.0f, 0.0f, 0.0f, 0.0f}, 0);
    Cav b = cav_from({0.0f, 3.0f, 0.0f, 0.0f}, 0);
    std::vector<const Cav*> fam{&a, &b};
    MatD g = family_mean_grid(fam, cfg, GridReduction::Norm);
    CHECK(g(0, 0) == doctest::Approx(0.5));
    CHECK(g(0, 1) == doctest::Approx(1.5));
    CHECK(g(1, 0) == doctest::Approx(0.0));
    CHECK_THROWS(family_mean_grid({}, cfg, GridReduction::Norm));
}

TEST_CASE("mass fractions split the grid into halves") {
    MatD g(2, 2);
    g << 3, 1, 3, 1; // left column 6, right column 2
    CHECK(grid_mass_fraction(g, Region::Left) == doctest::Approx(0.75));
    CHECK(grid_mass_fraction(g, Region::Right) == doctest::Approx(0.25));
    CHECK(grid_mass_fraction(g, Region::Top) == doctest::Approx(0.5));
    CHECK(grid_mass_fraction(g, Region::Bottom) == doctest::Approx(0.5));
    CHECK_THROWS(grid_mass_fraction(g, Region::None));
    CHECK_THROWS(grid_mass_fraction(MatD::Zero(2, 2), Region::Left));
}

TEST_CASE("odd grids exclude the middle row and column from both halves") {
    MatD g = MatD::Ones(3, 3);
    // halves take one column of three cells out of nine
    CHECK(grid_mass_fraction(g, Region::Left) == doctest::Approx(3.0 / 9.0));
    CHECK(grid_mass_fraction(g, Region::Right) == doctest::Approx(3.0 / 9.0));
    CHECK(grid_mass_fraction(g, Region::Top) == doctest::Approx(3.0 / 9.0));
    CHECK(grid_mass_fraction(g, Region::Bottom) == doctest::Approx(3.0 / 9.0));
}

TEST_CASE("a uniform direction spreads its mass evenly") {
    std::vector<float> v(6 * 6 * 4, 0.25f);
    MatD g = direction_grid(v, 6, 4, GridReduction::Norm);
    CHECK(grid_mass_fraction(g, Region::Left) == doctest::Approx(0.5));
    CHECK(grid_mass_fraction(g, Region::Top) == doctest::Approx(0.5));
}

TEST_CASE("a one-sided direction concentrates its mass") {
    // all weight in the left half of a 4x4 grid with 2 channels
    std::vector<float> v(4 * 4 * 2, 0.0f);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x)
            for (int d = 0; d < 2; ++d) v[(size_t(y) * 4 + x) * 2 + d] = 1.0f;
    MatD g = direction_grid(v, 4, 2, GridReduction::Norm);
    CHECK(grid_mass_fraction(g, Region::Left) == doctest::Approx(1.0));
    CHECK(grid_mass_fraction(g, Region::Right) == doctest::Approx(0.0));
    CHECK(grid_mass_fraction(g, Region::Top) == doctest::Approx(0.5));
}

TEST_CASE("spatial dependence is the ranking of projected activations") {
    Cav c = cav_from({1.0f, 0.0f});
    MatF left(3, 2), right(3, 2);
    left << 5, 9, 6, 9, 7, 9;  // dots 5 6 7
    right << 1, 9, 2, 9, 3, 9; // dots 1 2 3
    SpatialDependence dep = spatial_dependence_test(left, right, c);
    CHECK(dep.fraction == doctest::Approx(1.0));
    CHECK(dep.flagged);

    SpatialDependence same = spatial_dependence_test(left, left, c);
    CHECK(same.fraction == doctest::Approx(0.5));
    CHECK_FALSE(same.flagged);

    SpatialDependence inverse = spatial_dependence_test(right, left, c);
    CHECK(inverse.fraction == doctest::Approx(0.0));
    CHECK_FALSE(inverse.flagged);

    // threshold is strict
    MatF nearly(4, 2);
    nearly << 5, 9, 6, 9, 7, 9, 0.5, 9; // one loser against right's 1 2 3
    SpatialDependence border = spatial_dependence_test(nearly, right, c, 0.75);
    CHECK(border.fraction == doctest::Approx(0.75));
    CHECK_FALSE(border.flagged); // 0.75 is not > 0.75
}

TEST_CASE("same index dots on same data tie to one half") {
    Cav c = cav_from({0.6f, 0.8f});
    MatF acts(2, 2);
    acts << 1, 1, 2, 2;
    SpatialDependence dep = spatial_dependence_test(acts, acts, c);
    CHECK(dep.fraction == doctest::Approx(0.5));
}
