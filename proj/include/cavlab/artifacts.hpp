#pragma once
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cavlab/config.hpp"
#include "cavlab/elements.hpp"

namespace cavlab {

nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json dataset_config_to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

std::string tool_version();

// 16 hex chars of fnv1a over the canonical dump
std::string json_digest(const nlohmann::json& j);

// stage manifest: config echo, upstream digests, tool version
nlohmann::json new_manifest(const std::string& stage, const Config& cfg,
                            const std::vector<std::pair<std::string, std::string>>& upstream);

// digest part of a <stage>-<digest> directory path
std::string stage_digest(const std::string& dir);

// content-addressed directories <root>/<stage>-<digest>
class ArtifactStore {
public:
    explicit ArtifactStore(std::string root);
    const std::string& root() const { return root_; }

    std::string dir_for(const std::string& stage, const std::string& digest) const;
    // creates the directory and writes manifest.json; returns its path
    std::string open_stage(const std::string& stage, const nlohmann::json& manifest) const;
    // resolves <stage>-<digest> or a unique <stage>-* directory; throws if absent
    std::string resolve(const std::string& ref) const;
    nlohmann::json manifest_of(const std::string& dir) const;

private:
    std::string root_;
};

} // namespace cavlab
