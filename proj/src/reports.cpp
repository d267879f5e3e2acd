#include "cavlab/reports.hpp"

#include <cstdio>
#include <fstream>

#include "cavlab/errors.hpp"

namespace cavlab {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream os(path);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << csv_escape(header[i]);
    os << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ArtifactError(path + ": row width " + std::to_string(row.size()) +
                                " does not match header width " + std::to_string(header.size()));
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
        os << "\n";
    }
    if (!os) throw ArtifactError("short write to " + path);
}

nlohmann::json tcav_report_json(const TcavReport& report, const nlohmann::json& manifest) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"class", r.class_name},
                        {"concept", r.concept_name},
                        {"layer", layer_name(r.layer)},
                        {"mean", r.mean},
                        {"stddev", r.stddev},
                        {"null_mean", r.null_mean},
                        {"p", r.p},
                        {"significant", r.significant},
                        {"display", r.significant ? "black" : "red"},
                        {"scores", r.scores},
                        {"random_scores", r.random_scores}});
    }
    nlohmann::json j{{"schema_version", 1},
                     {"kind", "tcav"},
                     {"p_threshold", report.p_threshold},
                     {"rows", std::move(rows)}};
    if (!manifest.is_null()) j["manifest"] = manifest;
    validate_schema(j, schema_for("tcav"));
    return j;
}

void tcav_report_csv(const std::string& path, const TcavReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : report.rows) {
        rows.push_back({r.class_name, r.concept_name, layer_name(r.layer), format_double(r.mean),
                        format_double(r.stddev), format_double(r.null_mean), format_double(r.p),
                        r.significant ? "true" : "false", r.significant ? "black" : "red"});
    }
    write_csv(path, {"class", "concept", "layer", "mean", "stddev", "null_mean", "p", "significant",
                     "display"},
              rows);
}

nlohmann::json consistency_summary_json(const ConsistencySummary& s, const nlohmann::json& manifest) {
    nlohmann::json j{{"schema_version", 1},
                     {"kind", "tcav_layer_consistency"},
                     {"concepts", s.concepts},
                     {"classes", s.classes},
                     {"scores", s.scores},
                     {"mean", s.mean},
                     {"frac_at_most_half", s.frac_at_most_half}};
    if (!manifest.is_null()) j["manifest"] = manifest;
    validate_schema(j, schema_for("tcav_layer_consistency"));
    return j;
}

nlohmann::json similarity_json(const SimilarityMatrix& sim, const nlohmann::json& manifest) {
    nlohmann::json m = nlohmann::json::array();
    for (Eigen::Index i = 0; i < sim.m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < sim.m.cols(); ++k) row.push_back(sim.m(i, k));
        m.push_back(std::move(row));
    }
    nlohmann::json j{{"schema_version", 1},
                     {"kind", "similarity"},
                     {"layer", layer_name(sim.layer)},
                     {"concepts", sim.concepts},
                     {"matrix", std::move(m)}};
    if (!manifest.is_null()) j["manifest"] = manifest;
    validate_schema(j, schema_for("similarity"));
    return j;
}

void similarity_csv(const std::string& path, const SimilarityMatrix& sim) {
    std::vector<std::string> header{"concept"};
    for (const auto& c : sim.concepts) header.push_back(c);
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < sim.m.rows(); ++i) {
        std::vector<std::string> row{sim.concepts[static_cast<size_t>(i)]};
        for (Eigen::Index k = 0; k < sim.m.cols(); ++k) row.push_back(format_double(sim.m(i, k)));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

nlohmann::json grid_json(const std::string& name, int layer, const MatD& grid,
                         const nlohmann::json& manifest) {
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < grid.cols(); ++k) row.push_back(grid(i, k));
        values.push_back(std::move(row));
    }
    nlohmann::json j{{"schema_version", 1},
                     {"kind", "grid"},
                     {"name", name},
                     {"layer", layer_name(layer)},
                     {"rows", grid.rows()},
                     {"cols", grid.cols()},
                     {"values", std::move(values)}};
    if (!manifest.is_null()) j["manifest"] = manifest;
    validate_schema(j, schema_for("grid"));
    return j;
}

void grid_csv(const std::string& path, const MatD& grid) {
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < grid.cols(); ++k) header.push_back("c" + std::to_string(k));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index k = 0; k < grid.cols(); ++k) row.push_back(format_double(grid(i, k)));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

nlohmann::json consistency_errors_json(const std::vector<ConsistencyRow>& rows,
                                       const nlohmann::json& manifest) {
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        jrows.push_back({{"concept", r.concept_name},
                         {"variant", r.variant},
                         {"from", layer_name(r.l1)},
                         {"to", layer_name(r.l2)},
                         {"mean_error", r.mean_error},
                         {"stderr", r.stderr_error},
                         {"inputs", r.inputs}});
    }
    nlohmann::json j{{"schema_version", 1}, {"kind", "consistency"}, {"rows", std::move(jrows)}};
    if (!manifest.is_null()) j["manifest"] = manifest;
    validate_schema(j, schema_for("consistency"));
    return j;
}

void consistency_errors_csv(const std::string& path, const std::vector<ConsistencyRow>& rows) {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        out.push_back({r.concept_name, r.variant, layer_name(r.l1), layer_name(r.l2),
                       format_double(r.mean_error), format_double(r.stderr_error),
                       std::to_string(r.inputs)});
    }
    write_csv(path, {"concept", "variant", "from", "to", "mean_error", "stderr", "inputs"}, out);
}

namespace {

nlohmann::json num() { return {{"type", "number"}}; }
nlohmann::json str() { return {{"type", "string"}}; }
nlohmann::json boolean() { return {{"type", "boolean"}}; }
nlohmann::json arr(nlohmann::json items) { return {{"type", "array"}, {"items", std::move(items)}}; }

nlohmann::json obj(std::vector<std::string> required, nlohmann::json props) {
    return {{"type", "object"}, {"required", std::move(required)}, {"properties", std::move(props)}};
}

std::vector<std::pair<std::string, nlohmann::json>> build_schemas() {
    std::vector<std::pair<std::string, nlohmann::json>> out;

    out.emplace_back(
        "tcav",
        obj({"schema_version", "kind", "p_threshold", "rows"},
            {{"schema_version", {{"type", "integer"}}},
             {"kind", {{"enum", {"tcav"}}}},
             {"p_threshold", num()},
             {"rows", arr(obj({"class", "concept", "layer", "mean", "stddev", "null_mean", "p",
                               "significant", "display", "scores", "random_scores"},
                              {{"class", str()},
                               {"concept", str()},
                               {"layer", str()},
                               {"mean", num()},
                               {"stddev", num()},
                               {"null_mean", num()},
                               {"p", num()},
                               {"significant", boolean()},
                               {"display", {{"enum", {"black", "red"}}}},
                               {"scores", arr(num())},
                               {"random_scores", arr(num())}}))}}));

    out.emplace_back("tcav_layer_consistency",
                     obj({"schema_version", "kind", "concepts", "classes", "scores", "mean",
                          "frac_at_most_half"},
                         {{"schema_version", {{"type", "integer"}}},
                          {"kind", {{"enum", {"tcav_layer_consistency"}}}},
                          {"concepts", arr(str())},
                          {"classes", arr(str())},
                          {"scores", arr(num())},
                          {"mean", num()},
                          {"frac_at_most_half", num()}}));

    out.emplace_back("similarity",
                     obj({"schema_version", "kind", "layer", "concepts", "matrix"},
                         {{"schema_version", {{"type", "integer"}}},
                          {"kind", {{"enum", {"similarity"}}}},
                          {"layer", str()},
                          {"concepts", arr(str())},
                          {"matrix", arr(arr(num()))}}));

    out.emplace_back("grid", obj({"schema_version", "kind", "name", "layer", "rows", "cols", "values"},
                                 {{"schema_version", {{"type", "integer"}}},
                                  {"kind", {{"enum", {"grid"}}}},
                                  {"name", str()},
                                  {"layer", str()},
                                  {"rows", {{"type", "integer"}}},
                                  {"cols", {{"type", "integer"}}},
                                  {"values", arr(arr(num()))}}));

    out.emplace_back(
        "consistency",
        obj({"schema_version", "kind", "rows"},
            {{"schema_version", {{"type", "integer"}}},
             {"kind", {{"enum", {"consistency"}}}},
             {"rows", arr(obj({"concept", "variant", "from", "to", "mean_error", "stderr", "inputs"},
                              {{"concept", str()},
                               {"variant",
                                {{"enum", {"optimised", "concept", "projected", "random_cav",
                                           "random_direction"}}}},
                               {"from", str()},
                               {"to", str()},
                               {"mean_error", num()},
                               {"stderr", num()},
                               {"inputs", {{"type", "integer"}}}}))}}));

    return out;
}

} // namespace

const std::vector<std::pair<std::string, nlohmann::json>>& report_schemas() {
    static const auto schemas = build_schemas();
    return schemas;
}

const nlohmann::json& schema_for(const std::string& kind) {
    for (const auto& [name, schema] : report_schemas())
        if (name == kind) return schema;
    throw ArtifactError("no schema named '" + kind + "'");
}

namespace {

bool type_matches(const nlohmann::json& doc, const std::string& type) {
    if (type == "object") return doc.is_object();
    if (type == "array") return doc.is_array();
    if (type == "string") return doc.is_string();
    if (type == "boolean") return doc.is_boolean();
    if (type == "integer") return doc.is_number_integer() || doc.is_number_unsigned();
    if (type == "number") return doc.is_number();
    throw ArtifactError("schema uses unsupported type '" + type + "'");
}

} // namespace

void validate_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                     const std::string& where) {
    if (schema.contains("enum")) {
        for (const auto& v : schema["enum"])
            if (doc == v) return;
        throw ArtifactError(where + ": value " + doc.dump() + " not in enum " +
                            schema["enum"].dump());
    }
    if (schema.contains("type")) {
        std::string type = schema["type"].get<std::string>();
        if (!type_matches(doc, type))
            throw ArtifactError(where + ": expected " + type + ", got " + std::string(doc.type_name()));
        if (type == "object") {
            if (schema.contains("required"))
                for (const auto& key : schema["required"])
                    if (!doc.contains(key.get<std::string>()))
                        throw ArtifactError(where + ": missing required key '" +
                                            key.get<std::string>() + "'");
            if (schema.contains("properties"))
                for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it)
                    if (doc.contains(it.key()))
                        validate_schema(doc[it.key()], it.value(), where + "." + it.key());
        } else if (type == "array" && schema.contains("items")) {
            size_t i = 0;
            for (const auto& item : doc)
                validate_schema(item, schema["items"], where + "[" + std::to_string(i++) + "]");
        }
    }
}

} // namespace cavlab
