#include "cavlab/cav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cavlab/parallel.hpp"

namespace cavlab {

std::string ConceptRef::name() const {
    std::string n = base.name();
    if (location != Region::None) n += std::string(" ") + to_string(location);
    return n;
}

std::optional<ConceptRef> ConceptRef::parse(const std::string& s) {
    std::string base = s;
    Region loc = Region::None;
    if (auto pos = s.rfind(' '); pos != std::string::npos) {
        if (auto reg = parse_region(s.substr(pos + 1)); reg && *reg != Region::None) {
            loc = *reg;
            base = s.substr(0, pos);
        }
    }
    auto c = Concept::parse(base);
    if (!c) return std::nullopt;
    return ConceptRef{*c, loc};
}

// numerically stable sigmoid; the two-branch form keeps the probe's
// pos/neg swap symmetry exact in floating point
static float stable_sigmoid(float z) {
    if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
    float e = std::exp(z);
    return e / (1.0f + e);
}

Cav train_cav_from_activations(const MatF& pos, const MatF& neg, const ProbeHyper& hyper) {
    if (pos.cols() != neg.cols()) throw std::invalid_argument("probe sides disagree on dimension");
    if (pos.rows() < 3 || neg.rows() < 3)
        throw std::invalid_argument("probe needs at least 3 images per side");

    const Eigen::Index m = pos.cols();
    const Eigen::Index ptr = Eigen::Index(std::lround(double(pos.rows()) * hyper.train_fraction));
    const Eigen::Index ntr = Eigen::Index(std::lround(double(neg.rows()) * hyper.train_fraction));
    if (ptr < 1 || ntr < 1 || ptr >= pos.rows() || ntr >= neg.rows())
        throw std::invalid_argument("train fraction leaves an empty split");

    const Eigen::Index n = ptr + ntr;
    double sq = 0;
    for (Eigen::Index i = 0; i < ptr; ++i) sq += pos.row(i).squaredNorm();
    for (Eigen::Index i = 0; i < ntr; ++i) sq += neg.row(i).squaredNorm();
    const float lr = float(1.0 / (sq / double(n) / 4.0 + hyper.l2));

    VecF w = VecF::Zero(m);
    float b = 0;
    VecF zp(ptr), zn(ntr), cp(ptr), cn(ntr);
    VecF grad(m);
    for (int it = 0; it < hyper.iters; ++it) {
        zp.noalias() = pos.topRows(ptr) * w;
        zn.noalias() = neg.topRows(ntr) * w;
        // coefficient sigma(z) - t, written so that (swap, w -> -w) negates it exactly
        for (Eigen::Index i = 0; i < ptr; ++i) cp[i] = -stable_sigmoid(-(zp[i] + b));
        for (Eigen::Index i = 0; i < ntr; ++i) cn[i] = stable_sigmoid(zn[i] + b);
        grad.noalias() = pos.topRows(ptr).transpose() * cp;
        grad.noalias() += neg.topRows(ntr).transpose() * cn;
        grad /= float(n);
        grad += float(hyper.l2) * w;
        float gb = (cp.sum() + cn.sum()) / float(n);
        w -= lr * grad;
        b -= lr * gb;
    }

    float norm = w.norm();
    if (!(norm > 0.0f) || !std::isfinite(norm))
        throw NumericError("probe training produced a degenerate direction");

    Cav cav;
    cav.v.assign(w.data(), w.data() + m);
    for (auto& x : cav.v) x /= norm;
    cav.b = b / norm;

    auto accuracy = [&](Eigen::Index p0, Eigen::Index p1, Eigen::Index n0, Eigen::Index n1) {
        long correct = 0;
        for (Eigen::Index i = p0; i < p1; ++i)
            if (pos.row(i).dot(w) + b > 0.0f) ++correct;
        for (Eigen::Index i = n0; i < n1; ++i)
            if (neg.row(i).dot(w) + b <= 0.0f) ++correct;
        return float(correct) / float((p1 - p0) + (n1 - n0));
    };
    cav.train_accuracy = accuracy(0, ptr, 0, ntr);
    cav.test_accuracy = accuracy(ptr, pos.rows(), ntr, neg.rows());
    return cav;
}

std::vector<MatF> capture_scenes(const Network& net, const std::vector<SceneSpec>& scenes,
                                 int image_side, const std::vector<int>& layers) {
    std::vector<MatF> out(layers.size());
    for (size_t li = 0; li < layers.size(); ++li)
        out[li].resize(Eigen::Index(scenes.size()), layer_dim(net.cfg, layers[li]));
    parallel_for(scenes.size(), [&](size_t i) {
        TensorF img = render_scene(scenes[i], image_side);
        auto acts = forward_all(net, img);
        for (size_t li = 0; li < layers.size(); ++li) {
            const auto& a = acts[size_t(layers[li])];
            std::copy(a.data.begin(), a.data.end(), out[li].row(Eigen::Index(i)).data());
        }
    });
    return out;
}

const Cav* CavStore::find(const std::string& concept_name, int layer, int r) const {
    for (const auto& c : cavs)
        if (c.concept_name == concept_name && c.layer == layer && c.r == r) return &c;
    return nullptr;
}

std::vector<const Cav*> CavStore::family(const std::string& concept_name, int layer) const {
    std::vector<const Cav*> out;
    for (const auto& c : cavs)
        if (c.concept_name == concept_name && c.layer == layer) out.push_back(&c);
    return out;
}

std::vector<std::string> CavStore::concept_names() const {
    std::vector<std::string> out;
    for (const auto& c : cavs)
        if (std::find(out.begin(), out.end(), c.concept_name) == out.end())
            out.push_back(c.concept_name);
    return out;
}

std::vector<int> CavStore::layers() const {
    std::vector<int> out;
    for (const auto& c : cavs)
        if (std::find(out.begin(), out.end(), c.layer) == out.end()) out.push_back(c.layer);
    std::sort(out.begin(), out.end());
    return out;
}

double family_mean_test_accuracy(const std::vector<const Cav*>& members) {
    double s = 0;
    for (const Cav* c : members) s += c->test_accuracy;
    return members.empty() ? 0.0 : s / double(members.size());
}

CavStore train_cav_families(const Network& net, const DatasetConfig& data_cfg,
                            const CavTrainSpec& spec,
                            const std::function<void(const std::string&)>& progress) {
    CavStore store;
    if (spec.layers.empty() || spec.r_count < 1) throw ConfigError("cav spec needs layers and r>=1");

    // negatives are concept independent: capture each random set once
    std::vector<std::vector<SceneSpec>> neg_scenes(static_cast<size_t>(spec.r_count));
    std::vector<std::vector<MatF>> neg_acts(static_cast<size_t>(spec.r_count));
    std::vector<uint64_t> neg_prints(static_cast<size_t>(spec.r_count));
    for (int r = 0; r < spec.r_count; ++r) {
        neg_scenes[size_t(r)] = random_scene_set(data_cfg, r, spec.probe_count);
        neg_acts[size_t(r)] =
            capture_scenes(net, neg_scenes[size_t(r)], data_cfg.image_side, spec.layers);
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& s : neg_scenes[size_t(r)]) h = scene_fingerprint(s, h);
        neg_prints[size_t(r)] = h;
        if (progress) progress("captured random set " + std::to_string(r));
    }

    for (const ConceptRef& cref : spec.concepts) {
        ProbeDataset probe =
            build_probe(data_cfg, cref.base, 0, cref.location, spec.probe_count);
        auto pos_acts = capture_scenes(net, probe.positives, data_cfg.image_side, spec.layers);
        uint64_t pos_print = 0xcbf29ce484222325ull;
        for (const auto& s : probe.positives) pos_print = scene_fingerprint(s, pos_print);

        for (size_t li = 0; li < spec.layers.size(); ++li) {
            for (int r = 0; r < spec.r_count; ++r) {
                Cav cav = train_cav_from_activations(pos_acts[li], neg_acts[size_t(r)][li],
                                                     spec.hyper);
                cav.concept_name = cref.name();
                cav.layer = spec.layers[li];
                cav.r = r;
                cav.probe_fingerprint = Rng::mix(pos_print, neg_prints[size_t(r)]);
                store.cavs.push_back(std::move(cav));
            }
        }
        if (progress) progress("trained cavs for concept " + cref.name());
    }

    // random cavs from distinct unordered pairs of random sets; capture extra
    // sets when r is too small to supply enough pairs
    int want = spec.random_count > 0 ? spec.random_count : spec.r_count;
    int pool = spec.r_count;
    while (long(pool) * (pool - 1) / 2 < want) ++pool;
    for (int r = spec.r_count; r < pool; ++r) {
        neg_scenes.push_back(random_scene_set(data_cfg, r, spec.probe_count));
        neg_acts.push_back(capture_scenes(net, neg_scenes.back(), data_cfg.image_side, spec.layers));
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& s : neg_scenes.back()) h = scene_fingerprint(s, h);
        neg_prints.push_back(h);
    }
    int made = 0;
    for (int i = 0; i < pool && made < want; ++i)
        for (int j = i + 1; j < pool && made < want; ++j) {
            for (size_t li = 0; li < spec.layers.size(); ++li) {
                Cav cav = train_cav_from_activations(neg_acts[size_t(j)][li],
                                                     neg_acts[size_t(i)][li], spec.hyper);
                cav.concept_name = "random";
                cav.layer = spec.layers[li];
                cav.r = made;
                cav.probe_fingerprint = Rng::mix(neg_prints[size_t(j)], neg_prints[size_t(i)]);
                store.cavs.push_back(std::move(cav));
            }
            ++made;
        }
    if (progress) progress("trained random cavs");
    return store;
}

// ---- binary store ----

namespace {
template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
constexpr uint32_t kCavMagic = 0x43564143u; // "CAVC"
constexpr uint32_t kCavVersion = 1;
} // namespace

void CavStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArtifactError("cannot write cav store '" + path + "'");
    put(f, kCavMagic);
    put(f, kCavVersion);
    put(f, uint64_t(cavs.size()));
    for (const auto& c : cavs) {
        put(f, uint32_t(c.concept_name.size()));
        f.write(c.concept_name.data(), std::streamsize(c.concept_name.size()));
        put(f, int32_t(c.layer));
        put(f, int32_t(c.r));
        put(f, c.b);
        put(f, c.train_accuracy);
        put(f, c.test_accuracy);
        put(f, c.probe_fingerprint);
        put(f, uint64_t(c.v.size()));
        f.write(reinterpret_cast<const char*>(c.v.data()),
                std::streamsize(c.v.size() * sizeof(float)));
    }
    if (!f) throw ArtifactError("failed while writing cav store '" + path + "'");
}

CavStore CavStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArtifactError("missing cav store '" + path + "'");
    if (get<uint32_t>(f) != kCavMagic) throw ArtifactError("'" + path + "' is not a cav store");
    if (get<uint32_t>(f) != kCavVersion)
        throw ArtifactError("unsupported cav store version in '" + path + "'");
    CavStore store;
    uint64_t count = get<uint64_t>(f);
    store.cavs.resize(count);
    for (auto& c : store.cavs) {
        uint32_t len = get<uint32_t>(f);
        c.concept_name.resize(len);
        f.read(c.concept_name.data(), len);
        c.layer = get<int32_t>(f);
        c.r = get<int32_t>(f);
        c.b = get<float>(f);
        c.train_accuracy = get<float>(f);
        c.test_accuracy = get<float>(f);
        c.probe_fingerprint = get<uint64_t>(f);
        uint64_t m = get<uint64_t>(f);
        c.v.resize(m);
        f.read(reinterpret_cast<char*>(c.v.data()), std::streamsize(m * sizeof(float)));
        if (!f) throw ArtifactError("truncated cav store '" + path + "'");
    }
    return store;
}

} // namespace cavlab
