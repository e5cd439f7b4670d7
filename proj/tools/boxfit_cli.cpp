// boxfit: fits box-primitive templates to point clouds, organizes shape
// collections by template structure, and transfers that structure to
// partial scans (identification, completion, part labeling).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "boxfit/classify.hpp"
#include "boxfit/collection.hpp"
#include "boxfit/energy.hpp"
#include "boxfit/fitting.hpp"
#include "boxfit/io.hpp"
#include "boxfit/scansim.hpp"
#include "boxfit/template.hpp"
#include "boxfit/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace boxfit;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 ok, 2 I/O or parse, 3 validation, 4 numerical failure.
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

struct ManifestWriter {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestWriter(const std::string& command, int argc, char** argv) {
        doc["format"] = "boxfit-manifest";
        doc["version"] = 1;
        doc["tool_version"] = kVersion;
        doc["command"] = command;
        json args = json::array();
        for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
        doc["argv"] = args;
    }

    /// Written atomically: temp file in the target directory, then rename.
    void write(const fs::path& target) {
        doc["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        fs::path tmp = target;
        tmp += ".tmp";
        {
            std::ofstream out(tmp);
            if (!out) throw IoError("cannot write manifest: " + target.string());
            out << doc.dump(2) << '\n';
        }
        fs::rename(tmp, target);
    }
};

std::string default_library_path() {
    if (const char* env = std::getenv("BOXFIT_TEMPLATE_LIBRARY")) return env;
    return "assets/templates.json";
}

EnergyWeights parse_weights(const std::string& text) {
    std::istringstream ss(text);
    EnergyWeights w;
    char c1, c2, c3;
    if (!(ss >> w.lambda_proj >> c1 >> w.lambda_bbox >> c2 >> w.lambda_min >> c3 >> w.lambda_disent) ||
        c1 != ',' || c2 != ',' || c3 != ',')
        throw ValidationError("bad --weights, expected 'proj,bbox,min,disent'");
    if (w.lambda_proj < 0 || w.lambda_bbox < 0 || w.lambda_min < 0 || w.lambda_disent < 0)
        throw ValidationError("weights must be non-negative");
    return w;
}

json weights_json(const EnergyWeights& w) {
    return {{"lambda_proj", w.lambda_proj},
            {"lambda_bbox", w.lambda_bbox},
            {"lambda_min", w.lambda_min},
            {"lambda_disent", w.lambda_disent}};
}

std::vector<std::string> node_names(const Template& t) {
    std::vector<std::string> names;
    for (const auto& n : t.nodes) names.push_back(n.name);
    return names;
}

json identification_json(const Identification& id) {
    json j;
    j["format"] = "boxfit-identification";
    j["version"] = 1;
    j["template_id"] = id.template_id;
    j["considered"] = json::array();
    for (const auto& c : id.considered)
        j["considered"].push_back(
            {{"cluster_id", c.cluster_id}, {"probability", c.probability}, {"e_total", c.fit_e_total}});
    return j;
}

struct FitOptions {
    std::string cloud_path, family, out_prefix;
    std::string library = default_library_path();
    std::string weights_arg;
    std::uint64_t seed = 1;
    int restarts = 4;
    int max_evals = 3000;
    int sample_count = 2048;
    bool normalize = true;
};

FitConfig make_fit_config(const FitOptions& opt) {
    FitConfig config;
    if (!opt.weights_arg.empty()) config.weights = parse_weights(opt.weights_arg);
    config.restarts = opt.restarts;
    config.cma.max_evals = opt.max_evals;
    config.cma.seed = opt.seed;
    config.sample_count = opt.sample_count;
    return config;
}

int run_template_validate(const std::string& library_path) {
    std::vector<Template> library;
    try {
        library = load_template_library(library_path);
    } catch (const ValidationError& e) {
        std::cerr << e.what() << '\n';
        return kExitValidation;
    }
    std::cout << "validated " << library.size() << " templates in " << library_path << '\n';
    return 0;
}

int run_fit(const FitOptions& opt, int argc, char** argv) {
    auto library = load_template_library(opt.library);
    PointCloud cloud = read_point_cloud(opt.cloud_path);
    if (opt.normalize) normalize_to_unit_cube(cloud);

    FitConfig config = make_fit_config(opt);
    auto candidates = templates_for_family(library, opt.family);
    SelectionResult sel = select_template(cloud, candidates, config);

    fs::path fit_path = opt.out_prefix + ".json";
    fs::path obj_path = opt.out_prefix + ".obj";
    save_fit_result(fit_path, sel.best);
    write_boxes_obj(obj_path, sel.best.boxes, node_names(find_template(library, sel.best.template_id)));

    std::cout << "best template " << sel.best.template_id << " e_total " << sel.best.breakdown.e_total
              << " (" << sel.best.evaluations << " evaluations)\n";
    for (const auto& r : sel.ranked)
        std::cout << "  template " << r.template_id << ": e_total " << r.breakdown.e_total << '\n';

    ManifestWriter manifest("fit", argc, argv);
    manifest.doc["inputs"] = {{"cloud", opt.cloud_path}, {"library", opt.library}};
    manifest.doc["outputs"] = {{"fit", fit_path.string()}, {"obj", obj_path.string()}};
    manifest.doc["config"] = {{"family", opt.family},
                              {"weights", weights_json(config.weights)},
                              {"restarts", config.restarts},
                              {"max_evals", config.cma.max_evals},
                              {"sample_count", config.sample_count},
                              {"normalize", opt.normalize},
                              {"seed", opt.seed}};
    manifest.write(opt.out_prefix + ".manifest.json");
    return 0;
}

struct IndexOptions {
    std::string shapes_path, out_dir;
    std::string library = default_library_path();
    std::uint64_t seed = 1;
    int restarts = 4;
    int max_evals = 3000;
    int sample_count = 2048;
    int clusters = 10;
    bool normalize = true;
};

int run_index_build(const IndexOptions& opt, int argc, char** argv) {
    auto library = load_template_library(opt.library);

    // Shape list: one "shape_id family cloud_path" per line.
    std::ifstream in(opt.shapes_path);
    if (!in) throw IoError("cannot open shape list: " + opt.shapes_path);
    std::vector<ShapeInput> shapes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ShapeInput shape;
        if (!(ss >> shape.shape_id >> shape.family >> shape.cloud_path))
            throw IoError(opt.shapes_path + ":" + std::to_string(lineno) +
                          ": expected 'shape_id family cloud_path'");
        shape.cloud = read_point_cloud(shape.cloud_path);
        if (opt.normalize) normalize_to_unit_cube(shape.cloud);
        shapes.push_back(std::move(shape));
    }

    CollectionConfig config;
    config.fit.restarts = opt.restarts;
    config.fit.cma.max_evals = opt.max_evals;
    config.fit.cma.seed = opt.seed;
    config.fit.sample_count = opt.sample_count;
    config.clusters_per_template = opt.clusters;
    config.kmeans_seed = opt.seed;

    CollectionIndex index = preprocess_collection(shapes, library, config);
    fs::create_directories(opt.out_dir);
    save_index(opt.out_dir, index);

    int failed = 0;
    for (const auto& r : index.records)
        if (!r.error.empty()) {
            ++failed;
            std::cerr << "shape " << r.shape_id << " failed: " << r.error << '\n';
        }
    std::cout << "indexed " << index.records.size() - failed << "/" << index.records.size()
              << " shapes into " << index.cluster_count() << " clusters\n";

    ManifestWriter manifest("index build", argc, argv);
    manifest.doc["inputs"] = {{"shapes", opt.shapes_path}, {"library", opt.library}};
    manifest.doc["outputs"] = {{"index", opt.out_dir}};
    manifest.doc["config"] = {{"clusters_per_template", opt.clusters},
                              {"restarts", opt.restarts},
                              {"max_evals", opt.max_evals},
                              {"sample_count", opt.sample_count},
                              {"normalize", opt.normalize},
                              {"seed", opt.seed}};
    manifest.write(fs::path(opt.out_dir) / "manifest.json");
    return 0;
}

struct ScanOptions {
    std::string cloud_path, out_path;
    std::string viewpoint_arg;
    int depth_grid = 64;
    double noise_sigma = 0.005;
    double dropout_rate = 0.1;
    std::uint64_t seed = 1;
};

int run_scan_simulate(const ScanOptions& opt, int argc, char** argv) {
    PointCloud cloud = read_point_cloud(opt.cloud_path);
    ScanConfig config;
    config.depth_grid = opt.depth_grid;
    config.noise_sigma = opt.noise_sigma;
    config.dropout_rate = opt.dropout_rate;
    config.seed = opt.seed;
    if (!opt.viewpoint_arg.empty()) {
        std::istringstream ss(opt.viewpoint_arg);
        char c1, c2;
        if (!(ss >> config.viewpoint.x >> c1 >> config.viewpoint.y >> c2 >> config.viewpoint.z) ||
            c1 != ',' || c2 != ',')
            throw ValidationError("bad --viewpoint, expected 'x,y,z'");
    }
    PointCloud scan = simulate_partial_scan(cloud, config);
    write_xyz(opt.out_path, scan);
    std::cout << "scan: " << scan.size() << " of " << cloud.size() << " points survive\n";

    ManifestWriter manifest("scan simulate", argc, argv);
    manifest.doc["inputs"] = {{"cloud", opt.cloud_path}};
    manifest.doc["outputs"] = {{"scan", opt.out_path}};
    manifest.doc["config"] = {{"viewpoint", opt.viewpoint_arg.empty() ? "random" : opt.viewpoint_arg},
                              {"depth_grid", opt.depth_grid},
                              {"noise_sigma", opt.noise_sigma},
                              {"dropout_rate", opt.dropout_rate},
                              {"seed", opt.seed}};
    manifest.write(opt.out_path + ".manifest.json");
    return 0;
}

struct TrainOptions {
    std::string index_dir, out_path;
    int epochs = 60;
    double learning_rate = 0.05;
    int batch_size = 32;
    std::uint64_t seed = 1;
    bool augment = false;
    int scans_per_shape = 4;
    int grid_resolution = 32;
    double truncation = 0.25;
    double noise_sigma = 0.005;
    double dropout = 0.1;
};

int run_classifier_train(const TrainOptions& opt, int argc, char** argv) {
    CollectionIndex index = load_index(opt.index_dir);
    if (index.cluster_count() == 0) throw ValidationError("index has no clusters");

    std::vector<std::pair<PointCloud, int>> labeled_clouds;
    for (const auto& rec : index.records) {
        if (!rec.error.empty()) continue;
        labeled_clouds.push_back({read_point_cloud(rec.cloud_path), rec.cluster});
    }
    if (labeled_clouds.empty()) throw ValidationError("index has no usable records");

    auto make_dataset = [&](std::uint64_t scan_seed) {
        std::vector<Sample> out;
        for (std::size_t i = 0; i < labeled_clouds.size(); ++i)
            for (int s = 0; s < opt.scans_per_shape; ++s) {
                ScanConfig sc;
                sc.seed = scan_seed + i * 977 + s;
                sc.noise_sigma = opt.noise_sigma;
                sc.dropout_rate = opt.dropout;
                PointCloud scan = simulate_partial_scan(labeled_clouds[i].first, sc);
                DistanceGrid grid = rasterize_distance_grid(scan, opt.grid_resolution, opt.truncation);
                out.push_back({featurize(grid), labeled_clouds[i].second});
            }
        return out;
    };

    int feature_dim = 512;
    MlpModel model = init_model({feature_dim, 256, 128, index.cluster_count()}, opt.seed);
    TrainConfig config;
    config.epochs = opt.epochs;
    config.learning_rate = opt.learning_rate;
    config.batch_size = opt.batch_size;
    config.seed = opt.seed;
    config.augment = opt.augment;

    std::vector<Sample> dataset = make_dataset(opt.seed);
    TrainStats stats =
        train(model, dataset, config,
              [&](int epoch) { return make_dataset(opt.seed + 10007 * (epoch + 1)); });
    save_model(opt.out_path, model);
    std::cout << "trained " << config.epochs << " epochs; final loss " << stats.loss.back()
              << ", accuracy " << stats.accuracy.back() << '\n';

    ManifestWriter manifest("classifier train", argc, argv);
    manifest.doc["inputs"] = {{"index", opt.index_dir}};
    manifest.doc["outputs"] = {{"model", opt.out_path}};
    manifest.doc["config"] = {{"epochs", opt.epochs},
                              {"learning_rate", opt.learning_rate},
                              {"batch_size", opt.batch_size},
                              {"augment", opt.augment},
                              {"scans_per_shape", opt.scans_per_shape},
                              {"grid_resolution", opt.grid_resolution},
                              {"truncation", opt.truncation},
                              {"seed", opt.seed}};
    manifest.write(opt.out_path + ".manifest.json");
    return 0;
}

struct RecoverOptions {
    std::string scan_path, index_dir, model_path, out_prefix;
    std::string library = default_library_path();
    int top_k = 3;
    std::uint64_t seed = 1;
    int restarts = 2;
    int max_evals = 2000;
    int grid_resolution = 32;
    double truncation = 0.25;
};

int run_recover(const RecoverOptions& opt, int argc, char** argv) {
    auto library = load_template_library(opt.library);
    CollectionIndex index = load_index(opt.index_dir);
    MlpModel model = load_model(opt.model_path);
    PointCloud scan = read_point_cloud(opt.scan_path);

    PipelineConfig config;
    config.top_k = opt.top_k;
    config.grid_resolution = opt.grid_resolution;
    config.truncation = opt.truncation;
    config.fit.restarts = opt.restarts;
    config.fit.cma.max_evals = opt.max_evals;
    config.fit.cma.seed = opt.seed;

    Recovery rec = recover_shape(scan, index, library, model, config);

    fs::path cloud_path = opt.out_prefix + "_recovered.xyzl";
    fs::path id_path = opt.out_prefix + "_identification.json";
    fs::path obj_path = opt.out_prefix + "_boxes.obj";
    write_xyz(cloud_path, rec.deformed);
    const Template& t = find_template(library, rec.identification.template_id);
    write_boxes_obj(obj_path, rec.identification.fit.boxes, node_names(t));
    {
        json j = identification_json(rec.identification);
        j["source_shape_id"] = rec.source_shape_id;
        j["ranked_sources"] = rec.ranked_sources;
        j["residual"] = rec.residual;
        std::ofstream out(id_path);
        if (!out) throw IoError("cannot write identification: " + id_path.string());
        out << j.dump(2) << '\n';
    }
    std::cout << "identified template " << rec.identification.template_id << " (" << t.name
              << "), source shape " << rec.source_shape_id << ", residual " << rec.residual << '\n';

    ManifestWriter manifest("recover", argc, argv);
    manifest.doc["inputs"] = {{"scan", opt.scan_path},
                              {"index", opt.index_dir},
                              {"model", opt.model_path},
                              {"library", opt.library}};
    manifest.doc["outputs"] = {{"recovered", cloud_path.string()},
                               {"identification", id_path.string()},
                               {"boxes", obj_path.string()}};
    manifest.doc["config"] = {{"top_k", opt.top_k},
                              {"restarts", opt.restarts},
                              {"max_evals", opt.max_evals},
                              {"grid_resolution", opt.grid_resolution},
                              {"truncation", opt.truncation},
                              {"seed", opt.seed}};
    manifest.write(opt.out_prefix + ".manifest.json");
    return 0;
}

int run_label(const FitOptions& opt, int argc, char** argv) {
    auto library = load_template_library(opt.library);
    PointCloud cloud = read_point_cloud(opt.cloud_path);
    if (opt.normalize) normalize_to_unit_cube(cloud);

    FitConfig config = make_fit_config(opt);
    auto candidates = templates_for_family(library, opt.family);
    SelectionResult sel = select_template(cloud, candidates, config);
    const Template& t = find_template(library, sel.best.template_id);
    PointCloud labeled = label_points(cloud, sel.best.boxes, t);

    fs::path out_path = opt.out_prefix + ".xyzl";
    write_xyz(out_path, labeled);
    save_fit_result(opt.out_prefix + "_fit.json", sel.best);
    std::cout << "labeled " << labeled.size() << " points with template " << t.name << " parts:";
    for (const auto& n : t.nodes) std::cout << ' ' << n.name;
    std::cout << '\n';

    ManifestWriter manifest("label", argc, argv);
    manifest.doc["inputs"] = {{"cloud", opt.cloud_path}, {"library", opt.library}};
    manifest.doc["outputs"] = {{"labeled", out_path.string()}};
    manifest.doc["config"] = {{"family", opt.family},
                              {"restarts", config.restarts},
                              {"max_evals", config.cma.max_evals},
                              {"normalize", opt.normalize},
                              {"seed", opt.seed}};
    manifest.write(opt.out_prefix + ".manifest.json");
    return 0;
}

void add_fit_flags(CLI::App* cmd, FitOptions& opt) {
    cmd->add_option("--cloud", opt.cloud_path, "input point cloud (.xyz/.ply)")->required();
    cmd->add_option("--family", opt.family, "shape family (selects candidate templates)")->required();
    cmd->add_option("--library", opt.library, "template library path");
    cmd->add_option("--weights", opt.weights_arg, "energy weights 'proj,bbox,min,disent'");
    cmd->add_option("--seed", opt.seed, "random seed");
    cmd->add_option("--restarts", opt.restarts, "optimizer restarts per template");
    cmd->add_option("--max-evals", opt.max_evals, "objective evaluations per restart");
    cmd->add_option("--samples", opt.sample_count, "cloud resample count");
    cmd->add_flag("--no-normalize{false}", opt.normalize, "skip unit-cube normalization");
    cmd->add_option("--out", opt.out_prefix, "output prefix")->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"boxfit: structure-aware box-template fitting for point clouds"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // template validate
    auto* tmpl_cmd = app.add_subcommand("template", "template library tools");
    tmpl_cmd->require_subcommand(1);
    std::string validate_library;
    auto* validate_cmd = tmpl_cmd->add_subcommand("validate", "validate a template library");
    validate_cmd->add_option("library", validate_library, "library path")->required();

    FitOptions fit_opt;
    auto* fit_cmd = app.add_subcommand("fit", "fit family templates to a cloud, keep the best");
    add_fit_flags(fit_cmd, fit_opt);

    IndexOptions index_opt;
    auto* index_cmd = app.add_subcommand("index", "collection index tools");
    index_cmd->require_subcommand(1);
    auto* index_build = index_cmd->add_subcommand("build", "fit and cluster a shape collection");
    index_build->add_option("--shapes", index_opt.shapes_path, "shape list: 'id family cloud_path' per line")
        ->required();
    index_build->add_option("--library", index_opt.library, "template library path");
    index_build->add_option("--out", index_opt.out_dir, "output index directory")->required();
    index_build->add_option("--clusters", index_opt.clusters, "clusters per template");
    index_build->add_option("--seed", index_opt.seed, "random seed");
    index_build->add_option("--restarts", index_opt.restarts, "optimizer restarts per template");
    index_build->add_option("--max-evals", index_opt.max_evals, "objective evaluations per restart");
    index_build->add_option("--samples", index_opt.sample_count, "cloud resample count");
    index_build->add_flag("--no-normalize{false}", index_opt.normalize, "skip unit-cube normalization");

    ScanOptions scan_opt;
    auto* scan_cmd = app.add_subcommand("scan", "partial-scan tools");
    scan_cmd->require_subcommand(1);
    auto* scan_sim = scan_cmd->add_subcommand("simulate", "simulate a partial scan of a cloud");
    scan_sim->add_option("--cloud", scan_opt.cloud_path, "input point cloud")->required();
    scan_sim->add_option("--out", scan_opt.out_path, "output scan path")->required();
    scan_sim->add_option("--viewpoint", scan_opt.viewpoint_arg, "view direction 'x,y,z' (default random)");
    scan_sim->add_option("--depth-grid", scan_opt.depth_grid, "depth buffer resolution");
    scan_sim->add_option("--noise", scan_opt.noise_sigma, "Gaussian jitter sigma");
    scan_sim->add_option("--dropout", scan_opt.dropout_rate, "point dropout rate");
    scan_sim->add_option("--seed", scan_opt.seed, "random seed");

    TrainOptions train_opt;
    auto* cls_cmd = app.add_subcommand("classifier", "cluster classifier tools");
    cls_cmd->require_subcommand(1);
    auto* cls_train = cls_cmd->add_subcommand("train", "train the cluster classifier on an index");
    cls_train->add_option("--index", train_opt.index_dir, "index directory")->required();
    cls_train->add_option("--out", train_opt.out_path, "output model path")->required();
    cls_train->add_option("--epochs", train_opt.epochs, "training epochs");
    cls_train->add_option("--lr", train_opt.learning_rate, "learning rate");
    cls_train->add_option("--batch", train_opt.batch_size, "batch size");
    cls_train->add_option("--seed", train_opt.seed, "random seed");
    cls_train->add_flag("--augment", train_opt.augment, "regenerate scans each epoch");
    cls_train->add_option("--scans-per-shape", train_opt.scans_per_shape, "simulated scans per shape");
    cls_train->add_option("--grid-res", train_opt.grid_resolution, "distance grid resolution");
    cls_train->add_option("--truncation", train_opt.truncation, "distance grid truncation");

    RecoverOptions rec_opt;
    auto* rec_cmd = app.add_subcommand("recover", "identify, complete and label a partial scan");
    rec_cmd->add_option("--scan", rec_opt.scan_path, "partial scan path")->required();
    rec_cmd->add_option("--index", rec_opt.index_dir, "index directory")->required();
    rec_cmd->add_option("--model", rec_opt.model_path, "classifier model path")->required();
    rec_cmd->add_option("--library", rec_opt.library, "template library path");
    rec_cmd->add_option("--out", rec_opt.out_prefix, "output prefix")->required();
    rec_cmd->add_option("--top-k", rec_opt.top_k, "clusters to consider");
    rec_cmd->add_option("--seed", rec_opt.seed, "random seed");
    rec_cmd->add_option("--restarts", rec_opt.restarts, "optimizer restarts per cluster");
    rec_cmd->add_option("--max-evals", rec_opt.max_evals, "objective evaluations per restart");
    rec_cmd->add_option("--grid-res", rec_opt.grid_resolution, "distance grid resolution");
    rec_cmd->add_option("--truncation", rec_opt.truncation, "distance grid truncation");

    FitOptions label_opt;
    auto* label_cmd = app.add_subcommand("label", "fit a template and label the cloud's parts");
    add_fit_flags(label_cmd, label_opt);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) return run_template_validate(validate_library);
        if (fit_cmd->parsed()) return run_fit(fit_opt, argc, argv);
        if (index_build->parsed()) return run_index_build(index_opt, argc, argv);
        if (scan_sim->parsed()) return run_scan_simulate(scan_opt, argc, argv);
        if (cls_train->parsed()) return run_classifier_train(train_opt, argc, argv);
        if (rec_cmd->parsed()) return run_recover(rec_opt, argc, argv);
        if (label_cmd->parsed()) return run_label(label_opt, argc, argv);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
