#pragma once
#include <string>
#include <vector>

#include "json.hpp"

#include "cavlab/entanglement.hpp"
#include "cavlab/spatial.hpp"
#include "cavlab/tcav.hpp"

namespace cavlab {

std::string csv_escape(const std::string& s);
std::string format_double(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// significant rows display black, the rest red, matching the plotting convention
nlohmann::json tcav_report_json(const TcavReport& report, const nlohmann::json& manifest);
void tcav_report_csv(const std::string& path, const TcavReport& report);

nlohmann::json consistency_summary_json(const ConsistencySummary& s, const nlohmann::json& manifest);

nlohmann::json similarity_json(const SimilarityMatrix& sim, const nlohmann::json& manifest);
void similarity_csv(const std::string& path, const SimilarityMatrix& sim);

nlohmann::json grid_json(const std::string& name, int layer, const MatD& grid,
                         const nlohmann::json& manifest);
void grid_csv(const std::string& path, const MatD& grid);

// one perturbation-consistency measurement: variant is the source of v2
struct ConsistencyRow {
    std::string concept_name;
    std::string variant; // optimised, concept, projected, random_cav, random_direction
    int l1 = 0, l2 = 0;
    double mean_error = 0;
    double stderr_error = 0;
    int inputs = 0;
};

nlohmann::json consistency_errors_json(const std::vector<ConsistencyRow>& rows,
                                       const nlohmann::json& manifest);
void consistency_errors_csv(const std::string& path, const std::vector<ConsistencyRow>& rows);

// embedded report schemas, keyed by kind; emitted to files with the cli
const std::vector<std::pair<std::string, nlohmann::json>>& report_schemas();
const nlohmann::json& schema_for(const std::string& kind);

// minimal checker: type / required / properties / items / enum
void validate_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                     const std::string& where = "$");

} // namespace cavlab
