#include "cavlab/artifacts.hpp"

#include <filesystem>
#include <fstream>

#include "cavlab/errors.hpp"
#include "cavlab/tensor.hpp"

namespace fs = std::filesystem;

namespace cavlab {

std::string tool_version() { return "0.1.0"; }

nlohmann::json scene_to_json(const SceneSpec& scene) {
    nlohmann::json elems = nlohmann::json::array();
    for (const auto& e : scene.elements) {
        elems.push_back({{"colour", to_string(e.colour)},
                         {"shape", to_string(e.shape)},
                         {"texture", to_string(e.texture)},
                         {"size", e.size},
                         {"x", e.x},
                         {"y", e.y},
                         {"brightness", e.brightness},
                         {"texture_shift", e.texture_shift}});
    }
    return nlohmann::json{{"elements", std::move(elems)}};
}

namespace {
template <typename T>
T checked(std::optional<T> v, const std::string& what) {
    if (!v) throw ArtifactError("bad scene field: " + what);
    return *v;
}
} // namespace

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec scene;
    for (const auto& e : j.at("elements")) {
        ElementSpec el;
        std::string colour = e.at("colour").get<std::string>();
        std::string shape = e.at("shape").get<std::string>();
        std::string texture = e.at("texture").get<std::string>();
        el.colour = checked(parse_colour(colour), colour);
        el.shape = checked(parse_shape(shape), shape);
        el.texture = checked(parse_texture(texture), texture);
        el.size = e.at("size").get<int>();
        el.x = e.at("x").get<int>();
        el.y = e.at("y").get<int>();
        el.brightness = e.at("brightness").get<int>();
        el.texture_shift = e.at("texture_shift").get<int>();
        scene.elements.push_back(el);
    }
    return scene;
}

nlohmann::json dataset_config_to_json(const DatasetConfig& cfg) {
    auto names = [](const auto& xs) {
        std::vector<std::string> out;
        for (const auto& x : xs) out.push_back(to_string(x));
        return out;
    };
    return nlohmann::json{{"palette", names(cfg.palette)},
                          {"shapes", names(cfg.shapes)},
                          {"textures", names(cfg.textures)},
                          {"image_side", cfg.image_side},
                          {"elements_per_image", cfg.elements_per_image},
                          {"min_size", cfg.min_size},
                          {"max_size", cfg.max_size},
                          {"min_brightness", cfg.min_brightness},
                          {"max_brightness", cfg.max_brightness},
                          {"rule", to_string(cfg.rule)},
                          {"spatial_classes", cfg.spatial_classes},
                          {"square_axis", to_string(cfg.square_axis)},
                          {"triangle_axis", to_string(cfg.triangle_axis)},
                          {"seed", cfg.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    DatasetConfig cfg;
    cfg.palette.clear();
    cfg.shapes.clear();
    cfg.textures.clear();
    for (const auto& s : j.at("palette"))
        cfg.palette.push_back(checked(parse_colour(s.get<std::string>()), s.get<std::string>()));
    for (const auto& s : j.at("shapes"))
        cfg.shapes.push_back(checked(parse_shape(s.get<std::string>()), s.get<std::string>()));
    for (const auto& s : j.at("textures"))
        cfg.textures.push_back(checked(parse_texture(s.get<std::string>()), s.get<std::string>()));
    cfg.image_side = j.at("image_side").get<int>();
    cfg.elements_per_image = j.at("elements_per_image").get<int>();
    cfg.min_size = j.at("min_size").get<int>();
    cfg.max_size = j.at("max_size").get<int>();
    cfg.min_brightness = j.at("min_brightness").get<int>();
    cfg.max_brightness = j.at("max_brightness").get<int>();
    cfg.rule = checked(parse_rule(j.at("rule").get<std::string>()), j.at("rule").get<std::string>());
    cfg.spatial_classes = j.at("spatial_classes").get<bool>();
    cfg.square_axis = checked(parse_axis(j.at("square_axis").get<std::string>()),
                              j.at("square_axis").get<std::string>());
    cfg.triangle_axis = checked(parse_axis(j.at("triangle_axis").get<std::string>()),
                                j.at("triangle_axis").get<std::string>());
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
    if (!os) throw ArtifactError("short write to " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ArtifactError("cannot open " + path);
    try {
        nlohmann::json j;
        is >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(path + ": " + e.what());
    }
}

std::string json_digest(const nlohmann::json& j) {
    std::string dump = j.dump();
    return hex64(fnv1a(dump.data(), dump.size()));
}

nlohmann::json new_manifest(const std::string& stage, const Config& cfg,
                            const std::vector<std::pair<std::string, std::string>>& upstream) {
    nlohmann::json up = nlohmann::json::object();
    for (const auto& [name, digest] : upstream) up[name] = digest;
    return nlohmann::json{{"schema_version", 1},
                          {"stage", stage},
                          {"tool", {{"name", "cavlab"}, {"version", tool_version()}}},
                          {"config", cfg.echo()},
                          {"upstream", std::move(up)}};
}

std::string stage_digest(const std::string& dir) {
    std::string name = std::filesystem::path(dir).filename().string();
    size_t dash = name.rfind('-');
    return dash == std::string::npos ? name : name.substr(dash + 1);
}

ArtifactStore::ArtifactStore(std::string root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw ArtifactError("cannot create store root " + root_ + ": " + ec.message());
}

std::string ArtifactStore::dir_for(const std::string& stage, const std::string& digest) const {
    return (fs::path(root_) / (stage + "-" + digest)).string();
}

std::string ArtifactStore::open_stage(const std::string& stage, const nlohmann::json& manifest) const {
    std::string dir = dir_for(stage, json_digest(manifest));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ArtifactError("cannot create " + dir + ": " + ec.message());
    write_json_file((fs::path(dir) / "manifest.json").string(), manifest);
    return dir;
}

std::string ArtifactStore::resolve(const std::string& ref) const {
    fs::path direct = fs::path(root_) / ref;
    if (fs::is_directory(direct)) return direct.string();
    if (fs::is_directory(ref)) return ref; // absolute or cwd-relative path
    std::vector<std::string> hits;
    if (fs::is_directory(root_)) {
        for (const auto& entry : fs::directory_iterator(root_)) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            if (name.rfind(ref + "-", 0) == 0) hits.push_back(entry.path().string());
        }
    }
    if (hits.size() == 1) return hits[0];
    if (hits.empty()) throw ArtifactError("no artifact matching '" + ref + "' under " + root_);
    throw ArtifactError("ambiguous artifact '" + ref + "': " + std::to_string(hits.size()) +
                        " matches under " + root_);
}

nlohmann::json ArtifactStore::manifest_of(const std::string& dir) const {
    return read_json_file((fs::path(dir) / "manifest.json").string());
}

} // namespace cavlab
