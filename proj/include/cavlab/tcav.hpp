#pragma once
#include <string>
#include <vector>

#include "cavlab/cav.hpp"
#include "cavlab/elements.hpp"
#include "cavlab/model.hpp"
#include "cavlab/stats.hpp"

namespace cavlab {

double directional_derivative(const TensorD& grad, const std::vector<float>& v);

// fraction of strictly positive derivatives; zeros count against
double tcav_score_from_dots(const std::vector<double>& dots);

struct TcavScore {
    std::string concept_name;
    std::string class_name;
    int layer = 0;
    std::vector<double> scores; // one per family member
    std::vector<double> random_scores;
    double mean = 0, stddev = 0;
    double null_mean = 0;
    double p = 1;
    bool significant = false; // p below threshold
    bool above_null = false;  // mean > null_mean
};

struct TcavConfig {
    std::vector<int> layers; // analysis layers, must be eligible
    double p_threshold = 0.01;
    int class_images = 200;
};

// scenes whose labels include the class, drawn by rejection from the dataset
// distribution on a dedicated stream
std::vector<SceneSpec> class_scenes(const DatasetConfig& cfg, const ClassTable& table,
                                    int class_index, int count);

// gradient of the class logit at each requested layer, per scene; one
// forward/backward pair per scene in double precision
std::vector<MatD> class_gradients(const NetworkD& net, const std::vector<SceneSpec>& scenes,
                                  int image_side, int class_index,
                                  const std::vector<int>& layers);

struct TcavReport {
    double p_threshold = 0.01;
    std::vector<TcavScore> rows;

    const TcavScore* find(const std::string& concept_name, const std::string& cls, int layer) const;
};

// full grid: every requested class x concept family x layer, with the
// per-layer random-cav families as the shared null
TcavReport tcav_suite(const NetworkD& net, const CavStore& store, const DatasetConfig& data_cfg,
                      const ClassTable& table, const std::vector<int>& class_indices,
                      const std::vector<std::string>& concepts, const TcavConfig& cfg);

// S = |2(frac_layers[mean > null] - 1/2)|; rows must share concept and class
double layer_consistency_score(const std::vector<const TcavScore*>& rows);

struct ConsistencySummary {
    std::vector<std::string> concepts;
    std::vector<std::string> classes;
    // score per (class, concept) pair, classes major
    std::vector<double> scores;
    double mean = 0;
    double frac_at_most_half = 0;
};

ConsistencySummary consistency_score_summary(const TcavReport& report);

} // namespace cavlab
