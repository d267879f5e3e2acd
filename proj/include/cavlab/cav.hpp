#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cavlab/elements.hpp"
#include "cavlab/model.hpp"

namespace cavlab {

// concept optionally restricted to an image half ("striped left")
struct ConceptRef {
    Concept base;
    Region location = Region::None;

    std::string name() const;
    static std::optional<ConceptRef> parse(const std::string& s);
};

struct Cav {
    std::string concept_name;
    int layer = 0;
    int r = 0;
    std::vector<float> v; // unit norm, flattened (h*W + w)*D + d
    float b = 0;
    float train_accuracy = 0, test_accuracy = 0;
    uint64_t probe_fingerprint = 0;
};

struct ProbeHyper {
    int iters = 500;
    double l2 = 1e-4;
    double train_fraction = 2.0 / 3.0;
};

// Full-batch logistic regression from zero init; the step size comes from the
// curvature bound mean||x||^2 / 4 + l2. The leading train_fraction of each
// side trains, the remainder scores test_accuracy. Swapping pos and neg
// negates the returned direction bit-for-bit.
Cav train_cav_from_activations(const MatF& pos, const MatF& neg, const ProbeHyper& hyper);

// one evaluation-mode forward per scene, rows are flattened block outputs
std::vector<MatF> capture_scenes(const Network& net, const std::vector<SceneSpec>& scenes,
                                 int image_side, const std::vector<int>& layers);

struct CavTrainSpec {
    std::vector<ConceptRef> concepts;
    std::vector<int> layers;
    int r_count = 30;
    int random_count = 0; // 0 = one per adjacent pair of random sets... see impl
    int probe_count = 150;
    ProbeHyper hyper;
};

struct CavStore {
    std::vector<Cav> cavs;

    const Cav* find(const std::string& concept_name, int layer, int r) const;
    std::vector<const Cav*> family(const std::string& concept_name, int layer) const;
    std::vector<std::string> concept_names() const; // distinct, keeps insertion order
    std::vector<int> layers() const;

    void save(const std::string& path) const;
    static CavStore load(const std::string& path);
};

// Trains a cav per (concept, layer, r) plus "random" cavs built from distinct
// unordered pairs of the concept-independent random sets. Negative captures
// are shared across concepts at the same r.
CavStore train_cav_families(const Network& net, const DatasetConfig& data_cfg,
                            const CavTrainSpec& spec,
                            const std::function<void(const std::string&)>& progress = {});

double family_mean_test_accuracy(const std::vector<const Cav*>& members);

} // namespace cavlab
