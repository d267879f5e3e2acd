#include "cavlab/tcav.hpp"

#include <algorithm>
#include <cmath>

#include "cavlab/parallel.hpp"

namespace cavlab {

double directional_derivative(const TensorD& grad, const std::vector<float>& v) {
    if (grad.size() != v.size())
        throw std::invalid_argument("cav dimension does not match the gradient");
    double s = 0;
    for (size_t i = 0; i < v.size(); ++i) s += grad.data[i] * double(v[i]);
    return s;
}

double tcav_score_from_dots(const std::vector<double>& dots) {
    if (dots.empty()) throw std::invalid_argument("no derivatives to score");
    long pos = 0;
    for (double d : dots)
        if (d > 0.0) ++pos;
    return double(pos) / double(dots.size());
}

std::vector<SceneSpec> class_scenes(const DatasetConfig& cfg, const ClassTable& table,
                                    int class_index, int count) {
    if (class_index < 0 || class_index >= int(table.classes.size()))
        throw std::invalid_argument("class index out of range");
    const ClassDef& cls = table.classes[size_t(class_index)];
    std::vector<SceneSpec> out;
    out.reserve(size_t(count));
    const std::string stream = "classpool-" + cls.name();
    long attempts = 0;
    const long max_attempts = 4000L * count + 100000L;
    for (long i = 0; int(out.size()) < count; ++i) {
        if (++attempts > max_attempts)
            throw NumericError("could not sample " + std::to_string(count) + " scenes of class '" +
                               cls.name() + "' after " + std::to_string(attempts) + " attempts");
        Rng rng = Rng::stream(cfg.seed, stream, uint64_t(i));
        SceneSpec s = sample_scene(cfg, rng, std::nullopt, Region::None, i);
        bool has = false;
        for (const auto& e : s.elements)
            if (cls.matches_element(e, cfg.image_side)) {
                has = true;
                break;
            }
        if (has) out.push_back(std::move(s));
    }
    return out;
}

std::vector<MatD> class_gradients(const NetworkD& net, const std::vector<SceneSpec>& scenes,
                                  int image_side, int class_index,
                                  const std::vector<int>& layers) {
    std::vector<MatD> out(layers.size());
    for (size_t li = 0; li < layers.size(); ++li)
        out[li].resize(Eigen::Index(scenes.size()), layer_dim(net.cfg, layers[li]));
    parallel_for(scenes.size(), [&](size_t i) {
        TensorD img = render_scene(scenes[i], image_side).cast<double>();
        EvalTrace<double> tr = forward_trace(net, img, true);
        auto grads = backward_logit(net, tr, class_index);
        for (size_t li = 0; li < layers.size(); ++li) {
            const auto& g = grads[size_t(layers[li])];
            std::copy(g.data.begin(), g.data.end(), out[li].row(Eigen::Index(i)).data());
        }
    });
    return out;
}

const TcavScore* TcavReport::find(const std::string& concept_name, const std::string& cls,
                                  int layer) const {
    for (const auto& r : rows)
        if (r.concept_name == concept_name && r.class_name == cls && r.layer == layer) return &r;
    return nullptr;
}

TcavReport tcav_suite(const NetworkD& net, const CavStore& store, const DatasetConfig& data_cfg,
                      const ClassTable& table, const std::vector<int>& class_indices,
                      const std::vector<std::string>& concepts, const TcavConfig& cfg) {
    TcavReport report;
    report.p_threshold = cfg.p_threshold;

    // stack cavs per layer: concept families first, then the random family
    struct LayerCavs {
        std::vector<std::pair<std::string, int>> owner; // concept, member index
        MatD v;                                         // m x n
    };
    std::vector<LayerCavs> stacks(cfg.layers.size());
    for (size_t li = 0; li < cfg.layers.size(); ++li) {
        const int layer = cfg.layers[li];
        std::vector<const Cav*> all;
        for (const auto& name : concepts)
            for (const Cav* c : store.family(name, layer)) all.push_back(c);
        for (const Cav* c : store.family("random", layer)) all.push_back(c);
        if (all.empty()) continue;
        LayerCavs& st = stacks[li];
        st.v.resize(Eigen::Index(all[0]->v.size()), Eigen::Index(all.size()));
        for (size_t j = 0; j < all.size(); ++j) {
            st.owner.emplace_back(all[j]->concept_name, all[j]->r);
            for (size_t i = 0; i < all[j]->v.size(); ++i)
                st.v(Eigen::Index(i), Eigen::Index(j)) = double(all[j]->v[i]);
        }
    }

    for (int k : class_indices) {
        auto scenes = class_scenes(data_cfg, table, k, cfg.class_images);
        auto grads = class_gradients(net, scenes, data_cfg.image_side, k, cfg.layers);
        const std::string cls_name = table.classes[size_t(k)].name();
        for (size_t li = 0; li < cfg.layers.size(); ++li) {
            if (stacks[li].owner.empty()) continue;
            MatD dots = grads[li] * stacks[li].v; // images x cavs
            // per-cav scores grouped by concept
            std::vector<double> random_scores;
            std::vector<std::pair<std::string, std::vector<double>>> concept_scores;
            for (size_t j = 0; j < stacks[li].owner.size(); ++j) {
                std::vector<double> col(dots.rows());
                for (Eigen::Index i = 0; i < dots.rows(); ++i) col[size_t(i)] = dots(i, Eigen::Index(j));
                double score = tcav_score_from_dots(col);
                const std::string& owner = stacks[li].owner[j].first;
                if (owner == "random") {
                    random_scores.push_back(score);
                } else {
                    auto it = std::find_if(concept_scores.begin(), concept_scores.end(),
                                           [&](const auto& p) { return p.first == owner; });
                    if (it == concept_scores.end()) {
                        concept_scores.push_back({owner, {score}});
                    } else {
                        it->second.push_back(score);
                    }
                }
            }
            for (auto& [owner, scores] : concept_scores) {
                TcavScore row;
                row.concept_name = owner;
                row.class_name = cls_name;
                row.layer = cfg.layers[li];
                row.scores = scores;
                row.random_scores = random_scores;
                row.mean = mean_of(scores);
                row.stddev = std::sqrt(sample_variance(scores));
                row.null_mean = random_scores.empty() ? 0.5 : mean_of(random_scores);
                if (!random_scores.empty()) {
                    WelchResult w = welch_t_test(scores, random_scores);
                    row.p = w.p;
                }
                row.significant = row.p < cfg.p_threshold;
                row.above_null = row.mean > row.null_mean;
                report.rows.push_back(std::move(row));
            }
        }
    }
    return report;
}

double layer_consistency_score(const std::vector<const TcavScore*>& rows) {
    if (rows.empty()) throw std::invalid_argument("no layers to score");
    long above = 0;
    for (const TcavScore* r : rows)
        if (r->above_null) ++above;
    double frac = double(above) / double(rows.size());
    return std::abs(2.0 * (frac - 0.5));
}

ConsistencySummary consistency_score_summary(const TcavReport& report) {
    ConsistencySummary out;
    for (const auto& r : report.rows) {
        if (std::find(out.concepts.begin(), out.concepts.end(), r.concept_name) ==
            out.concepts.end())
            out.concepts.push_back(r.concept_name);
        if (std::find(out.classes.begin(), out.classes.end(), r.class_name) == out.classes.end())
            out.classes.push_back(r.class_name);
    }
    long at_most_half = 0;
    for (const auto& cls : out.classes)
        for (const auto& cname : out.concepts) {
            std::vector<const TcavScore*> rows;
            for (const auto& r : report.rows)
                if (r.concept_name == cname && r.class_name == cls) rows.push_back(&r);
            double s = rows.empty() ? 0.0 : layer_consistency_score(rows);
            out.scores.push_back(s);
            if (s <= 0.5) ++at_most_half;
        }
    out.mean = mean_of(out.scores);
    out.frac_at_most_half =
        out.scores.empty() ? 0.0 : double(at_most_half) / double(out.scores.size());
    return out;
}

} // namespace cavlab
