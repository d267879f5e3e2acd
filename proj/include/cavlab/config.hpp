#pragma once
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cavlab/cav.hpp"
#include "cavlab/elements.hpp"
#include "cavlab/model.hpp"
#include "cavlab/train.hpp"

namespace cavlab {

// one settable key with its fallback value; keys outside this table are rejected
struct ConfigKey {
    const char* key;
    const char* fallback;
    const char* doc;
};

const std::vector<ConfigKey>& config_schema();

// key = value text files, # comments, flat dotted keys
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;            // explicitly set (file or override)
    void set(const std::string& key, std::string value); // programmatic override, still schema-checked

    std::string get_str(const std::string& key) const; // set value or schema fallback
    long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;

    nlohmann::json echo() const; // every schema key with its resolved value

private:
    struct Entry {
        std::string value;
        int line = 0;
        int col = 0;
    };
    std::map<std::string, Entry> entries_;
    std::string origin_ = "<default>";
};

DatasetConfig dataset_from_config(const Config& c);
ModelConfig model_from_config(const Config& c, const DatasetConfig& data);
TrainConfig train_from_config(const Config& c);

// capture layers for a model: cav.layers, or every usable layer minus
// cav.exclude_layers when set to auto
std::vector<int> layers_from_config(const Config& c, const ModelConfig& mc);

// cav.concepts, or the dataset vocabulary when set to auto
std::vector<ConceptRef> concepts_from_config(const Config& c, const DatasetConfig& data);

CavTrainSpec cav_spec_from_config(const Config& c, const DatasetConfig& data,
                                  const ModelConfig& mc);

} // namespace cavlab
