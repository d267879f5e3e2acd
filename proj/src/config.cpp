#include "cavlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cavlab/errors.hpp"

namespace cavlab {

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"dataset.preset", "simple", "element vocabulary: simple or standard"},
        {"dataset.rule", "unrestricted", "combination rule: unrestricted, only-triangles-red, red-iff-triangle"},
        {"dataset.side", "64", "image side in pixels"},
        {"dataset.elements", "4", "elements rendered per image"},
        {"dataset.min_size", "auto", "smallest element side; auto scales 48/256 of image side"},
        {"dataset.max_size", "auto", "largest element side; auto scales 80/256 of image side"},
        {"dataset.min_brightness", "153", "lowest element brightness byte"},
        {"dataset.max_brightness", "255", "highest element brightness byte"},
        {"dataset.spatial_classes", "false", "add location-constrained class variants"},
        {"dataset.square_axis", "left-right", "class axis for squares: left-right or top-bottom"},
        {"dataset.triangle_axis", "top-bottom", "class axis for triangles: left-right or top-bottom"},
        {"dataset.palette", "auto", "comma list of colours; auto follows the preset"},
        {"dataset.shapes", "auto", "comma list of shapes; auto follows the preset"},
        {"dataset.textures", "auto", "comma list of textures; auto follows the preset"},
        {"dataset.seed", "7", "dataset stream seed"},
        {"dataset.train_count", "2000", "training images"},
        {"dataset.val_count", "500", "held-out images"},

        {"model.preset", "simple", "channel plan: simple, standard or spatial"},
        {"model.channels", "auto", "comma list of block widths; auto follows the preset"},
        {"model.head_relu", "false", "apply relu after global average pooling"},

        {"train.batch", "64", "minibatch size"},
        {"train.lr", "0.001", "adam learning rate"},
        {"train.epochs", "40", "epoch budget"},
        {"train.threshold", "0.9999", "train accuracy that counts as converged"},
        {"train.time_budget_s", "0", "wall clock budget in seconds, 0 = unlimited"},
        {"train.seed", "1", "init and shuffle seed"},

        {"cav.layers", "auto", "comma list of capture layers; auto = every usable layer"},
        {"cav.exclude_layers", "layers.0", "layers dropped from auto selection"},
        {"cav.r", "10", "probe repetitions per concept"},
        {"cav.random_count", "auto", "random direction count; auto matches cav.r"},
        {"cav.probe_count", "150", "images per probe side"},
        {"cav.iters", "500", "probe gradient steps"},
        {"cav.l2", "0.0001", "probe weight decay"},
        {"cav.train_fraction", "0.6666666666666666", "probe split kept for fitting"},
        {"cav.concepts", "auto", "comma list of concepts; auto = palette + shapes + textures"},

        {"tcav.classes", "all", "comma list of class names, or all"},
        {"tcav.images", "40", "class inputs per score"},
        {"tcav.p_threshold", "0.01", "two sided significance level"},

        {"consistency.gamma", "0.01", "perturbation step size"},
        {"consistency.scaled", "true", "scale steps by mean activation norm"},
        {"consistency.inputs", "64", "probe inputs per error estimate"},
        {"consistency.steps", "300", "optimiser step budget"},
        {"consistency.lr", "0.01", "optimiser learning rate"},
        {"consistency.recentre", "true", "subtract the image of zero from pushed directions"},

        {"spatial.mass_threshold", "0.7", "grid mass fraction that counts as concentrated"},
        {"separation.threshold", "0.95", "pair fraction that counts as separated"},
    };
    return schema;
}

namespace {

const ConfigKey* find_key(const std::string& key) {
    for (const auto& k : config_schema())
        if (key == k.key) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T require(std::optional<T> v, const std::string& key, const std::string& raw) {
    if (!v) throw ConfigError(key + ": unknown value '" + raw + "'");
    return *v;
}

} // namespace

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        std::string body = hash == std::string::npos ? line : line.substr(0, hash);
        if (trim(body).empty()) continue;
        size_t eq = body.find('=');
        int col = static_cast<int>(body.find_first_not_of(" \t")) + 1;
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ":" + std::to_string(col) +
                              ": expected key = value");
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ":" + std::to_string(col) +
                              ": empty key");
        if (!find_key(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ":" + std::to_string(col) +
                              ": unknown key '" + key + "'");
        auto [it, inserted] = c.entries_.emplace(key, Entry{value, lineno, col});
        if (!inserted)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ":" + std::to_string(col) +
                              ": duplicate key '" + key + "' (first set at line " +
                              std::to_string(it->second.line) + ")");
    }
    return c;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str(), path);
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

void Config::set(const std::string& key, std::string value) {
    if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
    entries_[key] = Entry{std::move(value), 0, 0};
}

std::string Config::get_str(const std::string& key) const {
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second.value;
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'");
    return k->fallback;
}

long Config::get_int(const std::string& key) const {
    std::string s = get_str(key);
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError(key + ": '" + s + "' is not an integer");
    return v;
}

double Config::get_double(const std::string& key) const {
    std::string s = get_str(key);
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + s + "' is not a number");
    }
}

bool Config::get_bool(const std::string& key) const {
    std::string s = get_str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::string s = get_str(key);
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

nlohmann::json Config::echo() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : config_schema()) j[k.key] = get_str(k.key);
    return j;
}

DatasetConfig dataset_from_config(const Config& c) {
    std::string preset = c.get_str("dataset.preset");
    DatasetConfig cfg;
    if (preset == "simple")
        cfg = DatasetConfig::simple();
    else if (preset == "standard")
        cfg = DatasetConfig::standard();
    else
        throw ConfigError("dataset.preset: '" + preset + "' is not simple or standard");

    cfg.scale_to_side(static_cast<int>(c.get_int("dataset.side")));
    if (c.get_str("dataset.min_size") != "auto")
        cfg.min_size = static_cast<int>(c.get_int("dataset.min_size"));
    if (c.get_str("dataset.max_size") != "auto")
        cfg.max_size = static_cast<int>(c.get_int("dataset.max_size"));
    cfg.elements_per_image = static_cast<int>(c.get_int("dataset.elements"));
    cfg.min_brightness = static_cast<int>(c.get_int("dataset.min_brightness"));
    cfg.max_brightness = static_cast<int>(c.get_int("dataset.max_brightness"));
    cfg.rule = require(parse_rule(c.get_str("dataset.rule")), "dataset.rule", c.get_str("dataset.rule"));
    cfg.spatial_classes = c.get_bool("dataset.spatial_classes");
    cfg.square_axis = require(parse_axis(c.get_str("dataset.square_axis")), "dataset.square_axis",
                              c.get_str("dataset.square_axis"));
    cfg.triangle_axis = require(parse_axis(c.get_str("dataset.triangle_axis")), "dataset.triangle_axis",
                                c.get_str("dataset.triangle_axis"));
    cfg.seed = static_cast<uint64_t>(c.get_int("dataset.seed"));

    if (c.get_str("dataset.palette") != "auto") {
        cfg.palette.clear();
        for (const auto& s : c.get_list("dataset.palette"))
            cfg.palette.push_back(require(parse_colour(s), "dataset.palette", s));
        if (cfg.palette.empty()) throw ConfigError("dataset.palette: empty list");
    }
    if (c.get_str("dataset.shapes") != "auto") {
        cfg.shapes.clear();
        for (const auto& s : c.get_list("dataset.shapes"))
            cfg.shapes.push_back(require(parse_shape(s), "dataset.shapes", s));
        if (cfg.shapes.empty()) throw ConfigError("dataset.shapes: empty list");
    }
    if (c.get_str("dataset.textures") != "auto") {
        cfg.textures.clear();
        for (const auto& s : c.get_list("dataset.textures"))
            cfg.textures.push_back(require(parse_texture(s), "dataset.textures", s));
        if (cfg.textures.empty()) throw ConfigError("dataset.textures: empty list");
    }
    if (cfg.min_size > cfg.max_size) throw ConfigError("dataset.min_size exceeds dataset.max_size");
    if (cfg.max_size > cfg.image_side) throw ConfigError("dataset.max_size exceeds dataset.side");
    return cfg;
}

ModelConfig model_from_config(const Config& c, const DatasetConfig& data) {
    std::string preset = c.get_str("model.preset");
    ModelConfig mc = ModelConfig::preset(preset);
    if (c.get_str("model.channels") != "auto") {
        mc.channels.clear();
        for (const auto& s : c.get_list("model.channels")) {
            long v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size() || v <= 0)
                throw ConfigError("model.channels: '" + s + "' is not a positive integer");
            mc.channels.push_back(static_cast<int>(v));
        }
        if (mc.channels.empty()) throw ConfigError("model.channels: empty list");
    }
    mc.head_relu = c.get_bool("model.head_relu");
    mc.input_side = data.image_side;
    mc.num_classes = static_cast<int>(ClassTable::build(data).classes.size());
    return mc;
}

TrainConfig train_from_config(const Config& c) {
    TrainConfig tc;
    tc.batch_size = static_cast<int>(c.get_int("train.batch"));
    tc.lr = c.get_double("train.lr");
    tc.max_epochs = static_cast<int>(c.get_int("train.epochs"));
    tc.accuracy_threshold = c.get_double("train.threshold");
    tc.time_budget_s = c.get_double("train.time_budget_s");
    tc.seed = static_cast<uint64_t>(c.get_int("train.seed"));
    if (tc.batch_size <= 0) throw ConfigError("train.batch must be positive");
    return tc;
}

std::vector<int> layers_from_config(const Config& c, const ModelConfig& mc) {
    std::vector<int> excluded;
    for (const auto& s : c.get_list("cav.exclude_layers")) excluded.push_back(parse_layer(s));
    if (c.get_str("cav.layers") == "auto") return eligible_layers(mc, excluded);
    std::vector<int> layers;
    for (const auto& s : c.get_list("cav.layers")) layers.push_back(parse_layer(s));
    std::vector<int> ok = eligible_layers(mc, {});
    for (int l : layers)
        if (std::find(ok.begin(), ok.end(), l) == ok.end())
            throw ConfigError("cav.layers: " + layer_name(l) + " is not usable for this model");
    return layers;
}

std::vector<ConceptRef> concepts_from_config(const Config& c, const DatasetConfig& data) {
    std::vector<ConceptRef> out;
    if (c.get_str("cav.concepts") == "auto") {
        for (Colour col : data.palette) out.push_back({Concept::colour(col), Region::None});
        for (Shape s : data.shapes) out.push_back({Concept::shape(s), Region::None});
        for (Texture t : data.textures) out.push_back({Concept::texture(t), Region::None});
        return out;
    }
    for (const auto& s : c.get_list("cav.concepts")) {
        auto ref = ConceptRef::parse(s);
        if (!ref) throw ConfigError("cav.concepts: unknown concept '" + s + "'");
        out.push_back(*ref);
    }
    if (out.empty()) throw ConfigError("cav.concepts: empty list");
    return out;
}

CavTrainSpec cav_spec_from_config(const Config& c, const DatasetConfig& data,
                                  const ModelConfig& mc) {
    CavTrainSpec spec;
    spec.concepts = concepts_from_config(c, data);
    spec.layers = layers_from_config(c, mc);
    spec.r_count = static_cast<int>(c.get_int("cav.r"));
    spec.random_count = c.get_str("cav.random_count") == "auto"
                            ? spec.r_count
                            : static_cast<int>(c.get_int("cav.random_count"));
    spec.probe_count = static_cast<int>(c.get_int("cav.probe_count"));
    spec.hyper.iters = static_cast<int>(c.get_int("cav.iters"));
    spec.hyper.l2 = c.get_double("cav.l2");
    spec.hyper.train_fraction = c.get_double("cav.train_fraction");
    return spec;
}

} // namespace cavlab
