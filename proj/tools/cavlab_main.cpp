#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cavlab/artifacts.hpp"
#include "cavlab/cav.hpp"
#include "cavlab/checkpoint.hpp"
#include "cavlab/config.hpp"
#include "cavlab/consistency.hpp"
#include "cavlab/elements.hpp"
#include "cavlab/entanglement.hpp"
#include "cavlab/errors.hpp"
#include "cavlab/image_io.hpp"
#include "cavlab/model.hpp"
#include "cavlab/reports.hpp"
#include "cavlab/spatial.hpp"
#include "cavlab/stats.hpp"
#include "cavlab/tcav.hpp"
#include "cavlab/train.hpp"

namespace fs = std::filesystem;
using namespace cavlab;

namespace {

struct CommonOpts {
    std::string store = "store";
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<long> seed;
    std::optional<std::string> layers;
    std::optional<std::string> concepts;
    std::optional<std::string> classes;
    std::optional<double> gamma;
    std::optional<long> r;
    std::optional<double> p_threshold;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--store", o.store, "artifact store directory");
    cmd->add_option("--config", o.config_path, "key = value config file");
    cmd->add_option("--set", o.sets, "override, key=value, repeatable");
    cmd->add_option("--seed", o.seed, "dataset.seed override");
    cmd->add_option("--layers", o.layers, "cav.layers override");
    cmd->add_option("--concepts", o.concepts, "cav.concepts override");
    cmd->add_option("--classes", o.classes, "tcav.classes override");
    cmd->add_option("--gamma", o.gamma, "consistency.gamma override");
    cmd->add_option("--r", o.r, "cav.r override");
    cmd->add_option("--p-threshold", o.p_threshold, "tcav.p_threshold override");
}

Config load_config(const CommonOpts& o) {
    Config cfg = o.config_path.empty() ? Config::parse_string("", "<empty>")
                                       : Config::parse_file(o.config_path);
    for (const auto& kv : o.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) cfg.set("dataset.seed", std::to_string(*o.seed));
    if (o.layers) cfg.set("cav.layers", *o.layers);
    if (o.concepts) cfg.set("cav.concepts", *o.concepts);
    if (o.classes) cfg.set("tcav.classes", *o.classes);
    if (o.gamma) cfg.set("consistency.gamma", format_double(*o.gamma));
    if (o.r) cfg.set("cav.r", std::to_string(*o.r));
    if (o.p_threshold) cfg.set("tcav.p_threshold", format_double(*o.p_threshold));
    return cfg;
}

std::string join_path(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

struct LoadedModel {
    std::string dir;
    Network net;
    DatasetConfig data;
    nlohmann::json manifest;
};

LoadedModel load_model_stage(const ArtifactStore& store, const std::string& ref) {
    LoadedModel m;
    m.dir = store.resolve(ref);
    m.manifest = store.manifest_of(m.dir);
    m.net = load_network(join_path(m.dir, "model.bin"));
    m.data = dataset_config_from_json(m.manifest.at("dataset"));
    return m;
}

int cmd_defaults() {
    for (const auto& k : config_schema())
        std::cout << k.key << " = " << k.fallback << "  # " << k.doc << "\n";
    return 0;
}

int cmd_gen(const CommonOpts& o, long export_images) {
    Config cfg = load_config(o);
    DatasetConfig data = dataset_from_config(cfg);
    ClassTable table = ClassTable::build(data);
    long train_count = cfg.get_int("dataset.train_count");
    long val_count = cfg.get_int("dataset.val_count");

    ArtifactStore store(o.store);
    nlohmann::json manifest = new_manifest("dataset", cfg, {});
    manifest["dataset"] = dataset_config_to_json(data);
    manifest["classes"] = table.names();
    manifest["train_count"] = train_count;
    manifest["val_count"] = val_count;
    std::string dir = store.open_stage("dataset", manifest);

    nlohmann::json scenes = nlohmann::json::array();
    for (long i = 0; i < train_count + val_count; ++i) {
        nlohmann::json s = scene_to_json(dataset_scene(data, i));
        s["index"] = i;
        s["split"] = i < train_count ? "train" : "val";
        s["classes"] = assign_classes(dataset_scene(data, i), table, data.image_side);
        scenes.push_back(std::move(s));
    }
    std::ofstream os(join_path(dir, "scenes.json"));
    if (!os) throw ArtifactError("cannot open scenes.json for writing");
    os << nlohmann::json{{"schema_version", 1}, {"scenes", std::move(scenes)}}.dump() << "\n";

    for (long i = 0; i < export_images && i < train_count + val_count; ++i) {
        TensorF img = render_scene(dataset_scene(data, i), data.image_side);
        write_png(join_path(dir, "image-" + std::to_string(i) + ".png"), img);
        save_tensor(join_path(dir, "image-" + std::to_string(i) + ".bin"), img);
    }
    std::cout << dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& data_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    std::string data_dir = store.resolve(data_ref);
    nlohmann::json data_manifest = store.manifest_of(data_dir);
    DatasetConfig data = dataset_config_from_json(data_manifest.at("dataset"));
    ClassTable table = ClassTable::build(data);

    ModelConfig mc = model_from_config(cfg, data);
    TrainConfig tc = train_from_config(cfg);
    long train_count = data_manifest.at("train_count").get<long>();
    long val_count = data_manifest.at("val_count").get<long>();

    nlohmann::json manifest = new_manifest("model", cfg, {{"dataset", stage_digest(data_dir)}});
    manifest["dataset"] = data_manifest.at("dataset");
    manifest["classes"] = data_manifest.at("classes");
    manifest["model"] = {{"channels", mc.channels},
                         {"input_side", mc.input_side},
                         {"num_classes", mc.num_classes},
                         {"head_relu", mc.head_relu}};
    std::string dir = store.open_stage("model", manifest);

    std::cerr << "materializing " << train_count << "+" << val_count << " images\n";
    LabelledImages train_set = materialize(data, table, 0, train_count);
    LabelledImages val_set = materialize(data, table, train_count, val_count);

    Network net = init_network(mc, tc.seed);
    TrainLog log = train_network(net, train_set, val_set, tc, [](const EpochStats& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << " train " << e.train_accuracy
                  << " val " << e.val_accuracy << "\n";
    });
    if (log.warning) std::cerr << "warning: " << log.note << "\n";

    save_network(join_path(dir, "model.bin"), net);
    save_train_log(join_path(dir, "train_log.json"), log);
    std::cout << dir << "\n";
    return 0;
}

int cmd_cav(const CommonOpts& o, const std::string& model_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    LoadedModel m = load_model_stage(store, model_ref);

    CavTrainSpec spec = cav_spec_from_config(cfg, m.data, m.net.cfg);

    nlohmann::json manifest = new_manifest("cav", cfg, {{"model", stage_digest(m.dir)}});
    manifest["dataset"] = m.manifest.at("dataset");
    std::string dir = store.open_stage("cav", manifest);

    CavStore cavs = train_cav_families(m.net, m.data, spec,
                                       [](const std::string& line) { std::cerr << line << "\n"; });
    cavs.save(join_path(dir, "cavs.bin"));

    nlohmann::json summary = nlohmann::json::array();
    for (const auto& name : cavs.concept_names()) {
        for (int l : cavs.layers()) {
            auto family = cavs.family(name, l);
            if (family.empty()) continue;
            summary.push_back({{"concept", name},
                               {"layer", layer_name(l)},
                               {"members", family.size()},
                               {"mean_test_accuracy", family_mean_test_accuracy(family)}});
        }
    }
    write_json_file(join_path(dir, "cav_summary.json"),
                    nlohmann::json{{"schema_version", 1}, {"families", std::move(summary)}});
    std::cout << dir << "\n";
    return 0;
}

struct LoadedCavs {
    std::string dir;
    CavStore cavs;
    nlohmann::json manifest;
};

LoadedCavs load_cav_stage(const ArtifactStore& store, const std::string& ref) {
    LoadedCavs c;
    c.dir = store.resolve(ref);
    c.manifest = store.manifest_of(c.dir);
    c.cavs = CavStore::load(join_path(c.dir, "cavs.bin"));
    return c;
}

std::vector<std::string> nonrandom_concepts(const CavStore& cavs) {
    std::vector<std::string> out;
    for (const auto& name : cavs.concept_names())
        if (name != "random") out.push_back(name);
    return out;
}

int cmd_tcav(const CommonOpts& o, const std::string& model_ref, const std::string& cav_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    LoadedModel m = load_model_stage(store, model_ref);
    LoadedCavs c = load_cav_stage(store, cav_ref);
    ClassTable table = ClassTable::build(m.data);

    std::vector<int> class_indices;
    if (cfg.get_str("tcav.classes") == "all") {
        for (size_t i = 0; i < table.classes.size(); ++i) class_indices.push_back(static_cast<int>(i));
    } else {
        for (const auto& name : cfg.get_list("tcav.classes")) {
            int idx = table.index_of(name);
            if (idx < 0) throw ConfigError("tcav.classes: no class named '" + name + "'");
            class_indices.push_back(idx);
        }
    }

    TcavConfig tcfg;
    tcfg.layers = c.cavs.layers();
    tcfg.p_threshold = cfg.get_double("tcav.p_threshold");
    tcfg.class_images = static_cast<int>(cfg.get_int("tcav.images"));

    nlohmann::json manifest = new_manifest(
        "tcav", cfg, {{"model", stage_digest(m.dir)}, {"cav", stage_digest(c.dir)}});
    std::string dir = store.open_stage("tcav", manifest);

    NetworkD netD = m.net.cast<double>();
    TcavReport report =
        tcav_suite(netD, c.cavs, m.data, table, class_indices, nonrandom_concepts(c.cavs), tcfg);
    write_json_file(join_path(dir, "tcav.json"), tcav_report_json(report, manifest));
    tcav_report_csv(join_path(dir, "tcav.csv"), report);

    ConsistencySummary summary = consistency_score_summary(report);
    write_json_file(join_path(dir, "layer_consistency.json"),
                    consistency_summary_json(summary, manifest));
    std::cout << dir << "\n";
    return 0;
}

int cmd_consistency(const CommonOpts& o, const std::string& model_ref, const std::string& cav_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    LoadedModel m = load_model_stage(store, model_ref);
    LoadedCavs c = load_cav_stage(store, cav_ref);

    PerturbationSpec ps;
    ps.gamma = cfg.get_double("consistency.gamma");
    ps.scaled = cfg.get_bool("consistency.scaled");
    OptimConfig oc;
    oc.lr = cfg.get_double("consistency.lr");
    oc.steps = static_cast<int>(cfg.get_int("consistency.steps"));
    bool recentre = cfg.get_bool("consistency.recentre");
    int inputs = static_cast<int>(cfg.get_int("consistency.inputs"));

    nlohmann::json manifest = new_manifest(
        "consistency", cfg, {{"model", stage_digest(m.dir)}, {"cav", stage_digest(c.dir)}});
    std::string dir = store.open_stage("consistency", manifest);

    std::vector<int> layers = c.cavs.layers();
    if (layers.size() < 2) throw ConfigError("consistency needs cavs at two or more layers");
    std::vector<SceneSpec> scenes = random_scene_set(m.data, 1000003, inputs);
    std::vector<MatF> acts = capture_scenes(m.net, scenes, m.data.image_side, layers);
    NetworkD netD = m.net.cast<double>();

    std::vector<ConsistencyRow> rows;
    std::vector<std::string> concepts = nonrandom_concepts(c.cavs);
    for (size_t li = 0; li + 1 < layers.size(); ++li) {
        int l1 = layers[li], l2 = layers[li + 1];
        LayerMap map = network_layer_map(netD, l1, l2);
        MatD A1 = acts[li].cast<double>();
        MatD A2 = acts[li + 1].cast<double>();
        PerturbationSpec spec = ps;
        spec.norm1 = mean_row_norm(A1);
        spec.norm2 = mean_row_norm(A2);

        auto push_row = [&](const std::string& cname, const std::string& variant, const VecD& v1,
                            const VecD& v2) {
            std::vector<double> errs = consistency_errors(map, A1, A2, v1, v2, spec);
            double mean = mean_of(errs);
            double sd = std::sqrt(sample_variance(errs));
            rows.push_back({cname, variant, l1, l2, mean,
                            errs.empty() ? 0.0 : sd / std::sqrt(double(errs.size())),
                            static_cast<int>(errs.size())});
        };
        auto vec_of = [](const Cav& cav) {
            VecD v(cav.v.size());
            for (size_t i = 0; i < cav.v.size(); ++i) v[static_cast<Eigen::Index>(i)] = cav.v[i];
            return v;
        };

        for (const auto& cname : concepts) {
            const Cav* c1 = c.cavs.find(cname, l1, 0);
            const Cav* c2 = c.cavs.find(cname, l2, 0);
            const Cav* c2b = c.cavs.find(cname, l2, 1);
            const Cav* r2 = c.cavs.find("random", l2, 0);
            if (!c1 || !c2) throw ArtifactError("missing cav for " + cname);
            VecD v1 = vec_of(*c1);
            std::cerr << "consistency " << layer_name(l1) << " -> " << layer_name(l2) << " "
                      << cname << "\n";

            push_row(cname, "concept", v1, vec_of(*c2));
            OptimResult opt = optimise_cav(map, A1, A2, v1, vec_of(c2b ? *c2b : *c2), spec, oc);
            push_row(cname, "optimised", v1, opt.v2);
            push_row(cname, "projected", v1, projected_cav(map, v1, recentre));
            if (r2) push_row(cname, "random_cav", v1, vec_of(*r2));
            Rng rng = Rng::stream(m.data.seed, "consistency-random", static_cast<uint64_t>(li));
            push_row(cname, "random_direction", v1, random_direction(map.out_dim, rng));
        }
    }
    write_json_file(join_path(dir, "consistency.json"), consistency_errors_json(rows, manifest));
    consistency_errors_csv(join_path(dir, "consistency.csv"), rows);
    std::cout << dir << "\n";
    return 0;
}

int cmd_entangle(const CommonOpts& o, const std::string& cav_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    LoadedCavs c = load_cav_stage(store, cav_ref);

    nlohmann::json manifest = new_manifest("entangle", cfg, {{"cav", stage_digest(c.dir)}});
    std::string dir = store.open_stage("entangle", manifest);

    std::vector<std::string> concepts = nonrandom_concepts(c.cavs);
    for (int l : c.cavs.layers()) {
        SimilarityMatrix sim = cosine_matrix(c.cavs, concepts, l);
        write_json_file(join_path(dir, "similarity-" + layer_name(l) + ".json"),
                        similarity_json(sim, manifest));
        similarity_csv(join_path(dir, "similarity-" + layer_name(l) + ".csv"), sim);
    }
    std::cout << dir << "\n";
    return 0;
}

int cmd_spatial(const CommonOpts& o, const std::string& model_ref, const std::string& cav_ref) {
    Config cfg = load_config(o);
    ArtifactStore store(o.store);
    LoadedModel m = load_model_stage(store, model_ref);
    LoadedCavs c = load_cav_stage(store, cav_ref);

    double mass_threshold = cfg.get_double("spatial.mass_threshold");
    double sep_threshold = cfg.get_double("separation.threshold");

    nlohmann::json manifest = new_manifest(
        "spatial", cfg, {{"model", stage_digest(m.dir)}, {"cav", stage_digest(c.dir)}});
    std::string dir = store.open_stage("spatial", manifest);

    nlohmann::json mass = nlohmann::json::array();
    for (const auto& cname : c.cavs.concept_names()) {
        for (int l : c.cavs.layers()) {
            auto family = c.cavs.family(cname, l);
            if (family.empty()) continue;
            MatD grid = family_mean_grid(family, m.net.cfg, GridReduction::Norm);
            std::string tag = cname + "-" + layer_name(l);
            for (char& ch : tag)
                if (ch == ' ') ch = '_';
            write_json_file(join_path(dir, "grid-" + tag + ".json"),
                            grid_json(cname, l, grid, manifest));
            grid_csv(join_path(dir, "grid-" + tag + ".csv"), grid);
            mass.push_back({{"concept", cname},
                            {"layer", layer_name(l)},
                            {"left", grid_mass_fraction(grid, Region::Left)},
                            {"right", grid_mass_fraction(grid, Region::Right)},
                            {"top", grid_mass_fraction(grid, Region::Top)},
                            {"bottom", grid_mass_fraction(grid, Region::Bottom)},
                            {"threshold", mass_threshold}});
        }
    }

    // location sensitivity of every location-free cav along both axes
    nlohmann::json dependence = nlohmann::json::array();
    std::vector<int> layers = c.cavs.layers();
    for (const auto& cname : nonrandom_concepts(c.cavs)) {
        auto ref = ConceptRef::parse(cname);
        if (!ref || ref->location != Region::None) continue;
        for (auto [mu1, mu2] : {std::pair{Region::Left, Region::Right},
                                std::pair{Region::Top, Region::Bottom}}) {
            ProbeDataset p1 = build_probe(m.data, ref->base, 0, mu1, 60);
            ProbeDataset p2 = build_probe(m.data, ref->base, 0, mu2, 60);
            std::vector<MatF> a1 = capture_scenes(m.net, p1.positives, m.data.image_side, layers);
            std::vector<MatF> a2 = capture_scenes(m.net, p2.positives, m.data.image_side, layers);
            for (size_t li = 0; li < layers.size(); ++li) {
                const Cav* cav = c.cavs.find(cname, layers[li], 0);
                if (!cav) continue;
                SpatialDependence dep =
                    spatial_dependence_test(a1[li], a2[li], *cav, sep_threshold);
                dependence.push_back({{"concept", cname},
                                      {"layer", layer_name(layers[li])},
                                      {"mu1", to_string(mu1)},
                                      {"mu2", to_string(mu2)},
                                      {"fraction", dep.fraction},
                                      {"flagged", dep.flagged}});
            }
        }
    }

    write_json_file(join_path(dir, "spatial.json"), nlohmann::json{{"schema_version", 1},
                                                                   {"mass", std::move(mass)},
                                                                   {"dependence", std::move(dependence)},
                                                                   {"manifest", manifest}});
    std::cout << dir << "\n";
    return 0;
}

int cmd_render(const CommonOpts& o, long index, const std::string& out) {
    Config cfg = load_config(o);
    DatasetConfig data = dataset_from_config(cfg);
    TensorF img = render_scene(dataset_scene(data, index), data.image_side);
    if (out.size() > 4 && out.substr(out.size() - 4) == ".png")
        write_png(out, img);
    else
        save_tensor(out, img);
    return 0;
}

int cmd_schemas(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ArtifactError("cannot create " + out_dir + ": " + ec.message());
    for (const auto& [kind, schema] : report_schemas())
        write_json_file(join_path(out_dir, kind + ".schema.json"), schema);
    return 0;
}

int cmd_validate(const std::string& kind, const std::string& file) {
    validate_schema(read_json_file(file), schema_for(kind));
    std::cout << file << " conforms to " << kind << "\n";
    return 0;
}

int cmd_theory(uint64_t seed) {
    bool all_pass = true;
    for (const auto& r : verify_theory_cases(seed)) {
        std::cout << (r.pass ? "pass" : "FAIL") << "  " << r.name << "  " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) throw NumericError("a closed-form consistency case failed");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"concept vector laboratory"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, cav_o, tcav_o, cons_o, ent_o, spat_o, render_o;
    long export_images = 0;
    std::string data_ref, model_ref, cav_ref;
    long render_index = 0;
    std::string render_out = "image.png", schema_out = "schemas";
    std::string validate_kind, validate_file;
    uint64_t theory_seed = 5;

    auto* defaults = app.add_subcommand("defaults", "print every config key with its fallback");

    auto* gen = app.add_subcommand("gen", "derive a dataset manifest");
    add_common(gen, gen_o);
    gen->add_option("--export-images", export_images, "also write the first N rendered images");

    auto* train = app.add_subcommand("train", "train a classifier on a dataset");
    add_common(train, train_o);
    train->add_option("--data", data_ref, "dataset artifact")->required();

    auto* cavc = app.add_subcommand("cav", "train concept vector families");
    add_common(cavc, cav_o);
    cavc->add_option("--model", model_ref, "model artifact")->required();

    auto* tcav = app.add_subcommand("tcav", "score concepts against classes");
    add_common(tcav, tcav_o);
    tcav->add_option("--model", model_ref, "model artifact")->required();
    tcav->add_option("--cavs", cav_ref, "cav artifact")->required();

    auto* cons = app.add_subcommand("consistency", "perturbation consistency across layers");
    add_common(cons, cons_o);
    cons->add_option("--model", model_ref, "model artifact")->required();
    cons->add_option("--cavs", cav_ref, "cav artifact")->required();

    auto* ent = app.add_subcommand("entangle", "cosine similarity between concept families");
    add_common(ent, ent_o);
    ent->add_option("--cavs", cav_ref, "cav artifact")->required();

    auto* spat = app.add_subcommand("spatial", "direction grids and location sensitivity");
    add_common(spat, spat_o);
    spat->add_option("--model", model_ref, "model artifact")->required();
    spat->add_option("--cavs", cav_ref, "cav artifact")->required();

    auto* render = app.add_subcommand("render", "render one dataset image");
    add_common(render, render_o);
    render->add_option("--index", render_index, "image index");
    render->add_option("--out", render_out, "output file, .png or raw tensor");

    auto* schemas = app.add_subcommand("schemas", "write the report schemas");
    schemas->add_option("--out", schema_out, "target directory");

    auto* validate = app.add_subcommand("validate", "check a report file against its schema");
    validate->add_option("--kind", validate_kind, "schema name")->required();
    validate->add_option("--file", validate_file, "report file")->required();

    auto* theory = app.add_subcommand("theory", "check the closed-form consistency cases");
    theory->add_option("--seed", theory_seed, "case seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (defaults->parsed()) return cmd_defaults();
        if (gen->parsed()) return cmd_gen(gen_o, export_images);
        if (train->parsed()) return cmd_train(train_o, data_ref);
        if (cavc->parsed()) return cmd_cav(cav_o, model_ref);
        if (tcav->parsed()) return cmd_tcav(tcav_o, model_ref, cav_ref);
        if (cons->parsed()) return cmd_consistency(cons_o, model_ref, cav_ref);
        if (ent->parsed()) return cmd_entangle(ent_o, cav_ref);
        if (spat->parsed()) return cmd_spatial(spat_o, model_ref, cav_ref);
        if (render->parsed()) return cmd_render(render_o, render_index, render_out);
        if (schemas->parsed()) return cmd_schemas(schema_out);
        if (validate->parsed()) return cmd_validate(validate_kind, validate_file);
        if (theory->parsed()) return cmd_theory(theory_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ArtifactError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
