#include "boxfit/collection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "boxfit/rng.hpp"

namespace boxfit {

using nlohmann::json;

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

const ShapeRecord& CollectionIndex::record(const std::string& shape_id) const {
    for (const auto& r : records)
        if (r.shape_id == shape_id) return r;
    throw ValidationError("unknown shape id '" + shape_id + "'");
}

KmeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, std::uint64_t seed) {
    if (vectors.empty()) throw ValidationError("kmeans: empty input");
    std::size_t dim = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != dim) throw ValidationError("kmeans: dimension mismatch");
    if (k < 1) throw ValidationError("kmeans: k must be >= 1");
    k = std::min<int>(k, int(vectors.size()));

    Rng rng(seed);
    KmeansResult result;

    // k-means++ seeding.
    result.centroids.push_back(vectors[rng.uniform_index(vectors.size())]);
    std::vector<double> d2(vectors.size());
    while (int(result.centroids.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : result.centroids) best = std::min(best, sq_distance(vectors[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_index(vectors.size());
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = vectors.size() - 1;
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        result.centroids.push_back(vectors[pick]);
    }

    result.assignments.assign(vectors.size(), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = sq_distance(vectors[i], result.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (best != result.assignments[i]) {
                result.assignments[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            int c = result.assignments[i];
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) sums[c][j] += vectors[i][j];
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j) result.centroids[c][j] = sums[c][j] / counts[c];
    }

    result.inertia = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        result.inertia += sq_distance(vectors[i], result.centroids[result.assignments[i]]);
    return result;
}

CollectionIndex build_index_from_records(std::vector<ShapeRecord> records, int clusters_per_template,
                                         std::uint64_t kmeans_seed) {
    CollectionIndex index;
    index.cluster_model.clusters_per_template = clusters_per_template;

    // Group fitted records per template, preserving input order.
    std::map<int, std::vector<std::size_t>> by_template;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].error.empty()) by_template[records[i].fit.template_id].push_back(i);

    int next_global = 0;
    for (auto& [template_id, members] : by_template) {
        std::vector<std::vector<double>> vectors;
        vectors.reserve(members.size());
        for (auto i : members) vectors.push_back(records[i].fit.params);

        KmeansResult km = kmeans(vectors, clusters_per_template, kmeans_seed + std::uint64_t(template_id));

        TemplateClusters tc;
        tc.template_id = template_id;
        tc.first_global_id = next_global;
        tc.centroids = km.centroids;
        tc.members.resize(km.centroids.size());
        for (std::size_t m = 0; m < members.size(); ++m) {
            records[members[m]].cluster = next_global + km.assignments[m];
            tc.members[km.assignments[m]].push_back(records[members[m]].shape_id);
        }
        for (std::size_t c = 0; c < km.centroids.size(); ++c) index.cluster_to_template.push_back(template_id);
        next_global += int(km.centroids.size());
        index.cluster_model.per_template.push_back(std::move(tc));
    }

    index.records = std::move(records);
    return index;
}

CollectionIndex preprocess_collection(const std::vector<ShapeInput>& shapes,
                                      const std::vector<Template>& library,
                                      const CollectionConfig& config) {
    // Warm-start pool: per (family, template) the most recent successful params.
    std::map<std::pair<std::string, int>, std::vector<ParamVector>> warm_pool;

    std::vector<ShapeRecord> records;
    for (const auto& shape : shapes) {
        ShapeRecord rec;
        rec.shape_id = shape.shape_id;
        rec.family = shape.family;
        rec.cloud_path = shape.cloud_path;
        try {
            auto candidates = templates_for_family(library, shape.family);
            FitResult best;
            best.breakdown.e_total = std::numeric_limits<double>::infinity();
            std::size_t best_nodes = 0;
            for (const auto& t : candidates) {
                std::vector<ParamVector> inits;
                auto it = warm_pool.find({shape.family, t.template_id});
                if (it != warm_pool.end()) {
                    std::size_t take = std::min<std::size_t>(it->second.size(), config.warm_starts_per_fit);
                    inits.assign(it->second.end() - take, it->second.end());
                }
                FitResult fit = fit_template(shape.cloud, t, inits, config.fit);
                bool better = fit.breakdown.e_total < best.breakdown.e_total - 1e-12 ||
                              (std::abs(fit.breakdown.e_total - best.breakdown.e_total) <= 1e-12 &&
                               fit.boxes.size() < best_nodes);
                if (better) {
                    best = fit;
                    best_nodes = fit.boxes.size();
                }
            }
            rec.fit = best;
            warm_pool[{shape.family, best.template_id}].push_back(best.params);
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        records.push_back(std::move(rec));
    }
    return build_index_from_records(std::move(records), config.clusters_per_template, config.kmeans_seed);
}

namespace {

const TemplateClusters& clusters_for_template(const CollectionIndex& index, int template_id) {
    for (const auto& tc : index.cluster_model.per_template)
        if (tc.template_id == template_id) return tc;
    throw ValidationError("no clusters for template id " + std::to_string(template_id));
}

}  // namespace

int assign_cluster(const CollectionIndex& index, int template_id, const ParamVector& params) {
    const auto& tc = clusters_for_template(index, template_id);
    if (!tc.centroids.empty() && tc.centroids.front().size() != params.size())
        throw ValidationError("assign_cluster: parameter dimension mismatch");
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < tc.centroids.size(); ++c) {
        double d = sq_distance(params, tc.centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = int(c);
        }
    }
    return tc.first_global_id + best;
}

int cluster_template(const CollectionIndex& index, int cluster_id) {
    if (cluster_id < 0 || cluster_id >= index.cluster_count())
        throw ValidationError("unknown cluster id " + std::to_string(cluster_id));
    return index.cluster_to_template[cluster_id];
}

const std::vector<double>& cluster_centroid(const CollectionIndex& index, int cluster_id) {
    int template_id = cluster_template(index, cluster_id);
    const auto& tc = clusters_for_template(index, template_id);
    return tc.centroids[cluster_id - tc.first_global_id];
}

std::vector<std::string> retrieve_nearest(const CollectionIndex& index,
                                          const std::vector<int>& cluster_ids,
                                          const ParamVector& query_params) {
    if (cluster_ids.empty()) throw ValidationError("retrieve_nearest: empty cluster list");
    int template_id = cluster_template(index, cluster_ids.front());
    for (int c : cluster_ids)
        if (cluster_template(index, c) != template_id)
            throw ValidationError("retrieve_nearest: clusters span multiple templates");

    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& rec : index.records) {
        if (!rec.error.empty()) continue;
        if (std::find(cluster_ids.begin(), cluster_ids.end(), rec.cluster) == cluster_ids.end()) continue;
        if (rec.fit.params.size() != query_params.size())
            throw ValidationError("retrieve_nearest: parameter dimension mismatch");
        ranked.push_back({sq_distance(rec.fit.params, query_params), rec.shape_id});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& [d, id] : ranked) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json point_to_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }
Point3 point_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json fit_to_json(const FitResult& fit) {
    json j;
    j["format"] = "boxfit-fit";
    j["version"] = 1;
    j["template_id"] = fit.template_id;
    j["params"] = fit.params;
    j["boxes"] = json::array();
    for (const auto& b : fit.boxes)
        j["boxes"].push_back({{"center", point_to_json(b.center)}, {"size", point_to_json(b.size)}});
    j["breakdown"] = {{"e_proj", fit.breakdown.e_proj},
                      {"e_bbox", fit.breakdown.e_bbox},
                      {"e_min", fit.breakdown.e_min},
                      {"e_disent", fit.breakdown.e_disent},
                      {"e_total", fit.breakdown.e_total}};
    j["evaluations"] = fit.evaluations;
    j["init_source"] = fit.init_source == InitSource::Default      ? "default"
                       : fit.init_source == InitSource::WarmStart ? "warm_start"
                                                                   : "cluster_mean";
    return j;
}

FitResult fit_from_json(const json& j) {
    FitResult fit;
    fit.template_id = j.at("template_id").get<int>();
    fit.params = j.at("params").get<std::vector<double>>();
    for (const auto& bj : j.at("boxes")) {
        AABox b;
        b.center = point_from_json(bj.at("center"));
        b.size = point_from_json(bj.at("size"));
        fit.boxes.push_back(b);
    }
    const auto& br = j.at("breakdown");
    fit.breakdown.e_proj = br.at("e_proj").get<double>();
    fit.breakdown.e_bbox = br.at("e_bbox").get<double>();
    fit.breakdown.e_min = br.at("e_min").get<double>();
    fit.breakdown.e_disent = br.at("e_disent").get<double>();
    fit.breakdown.e_total = br.at("e_total").get<double>();
    fit.evaluations = j.value("evaluations", 0);
    std::string src = j.value("init_source", "default");
    fit.init_source = src == "warm_start"    ? InitSource::WarmStart
                      : src == "cluster_mean" ? InitSource::ClusterMean
                                              : InitSource::Default;
    return fit;
}

}  // namespace

void save_fit_result(const std::filesystem::path& path, const FitResult& fit) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write fit result: " + path.string());
    out << fit_to_json(fit).dump(2) << '\n';
}

FitResult load_fit_result(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fit result: " + path.string());
    json j;
    try {
        in >> j;
        if (j.value("format", "") != "boxfit-fit") throw IoError(path.string() + ": not a fit result document");
        return fit_from_json(j);
    } catch (const json::exception& e) {
        throw IoError("fit result parse error in " + path.string() + ": " + e.what());
    }
}

void save_index(const std::filesystem::path& dir, const CollectionIndex& index) {
    std::filesystem::create_directories(dir / "fits");
    json manifest;
    manifest["format"] = "boxfit-index";
    manifest["version"] = 1;
    manifest["clusters_per_template"] = index.cluster_model.clusters_per_template;
    manifest["cluster_to_template"] = index.cluster_to_template;
    manifest["records"] = json::array();
    for (const auto& rec : index.records) {
        json rj;
        rj["shape_id"] = rec.shape_id;
        rj["family"] = rec.family;
        rj["cloud_path"] = rec.cloud_path;
        rj["cluster"] = rec.cluster;
        if (!rec.error.empty()) rj["error"] = rec.error;
        manifest["records"].push_back(rj);
        if (rec.error.empty()) save_fit_result(dir / "fits" / (rec.shape_id + ".json"), rec.fit);
    }
    manifest["clusters"] = json::array();
    for (const auto& tc : index.cluster_model.per_template) {
        json tj;
        tj["template_id"] = tc.template_id;
        tj["first_global_id"] = tc.first_global_id;
        tj["centroids"] = tc.centroids;
        tj["members"] = tc.members;
        manifest["clusters"].push_back(tj);
    }
    std::ofstream out(dir / "index.json");
    if (!out) throw IoError("cannot write index manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

CollectionIndex load_index(const std::filesystem::path& dir) {
    std::ifstream in(dir / "index.json");
    if (!in) throw IoError("cannot open index manifest: " + (dir / "index.json").string());
    json manifest;
    try {
        in >> manifest;
        if (manifest.value("format", "") != "boxfit-index")
            throw IoError(dir.string() + ": not an index directory");

        CollectionIndex index;
        index.cluster_model.clusters_per_template = manifest.at("clusters_per_template").get<int>();
        index.cluster_to_template = manifest.at("cluster_to_template").get<std::vector<int>>();
        for (const auto& rj : manifest.at("records")) {
            ShapeRecord rec;
            rec.shape_id = rj.at("shape_id").get<std::string>();
            rec.family = rj.at("family").get<std::string>();
            rec.cloud_path = rj.at("cloud_path").get<std::string>();
            rec.cluster = rj.at("cluster").get<int>();
            rec.error = rj.value("error", "");
            if (rec.error.empty()) rec.fit = load_fit_result(dir / "fits" / (rec.shape_id + ".json"));
            index.records.push_back(std::move(rec));
        }
        for (const auto& tj : manifest.at("clusters")) {
            TemplateClusters tc;
            tc.template_id = tj.at("template_id").get<int>();
            tc.first_global_id = tj.at("first_global_id").get<int>();
            tc.centroids = tj.at("centroids").get<std::vector<std::vector<double>>>();
            tc.members = tj.at("members").get<std::vector<std::vector<std::string>>>();
            index.cluster_model.per_template.push_back(std::move(tc));
        }
        return index;
    } catch (const json::exception& e) {
        throw IoError("index parse error in " + dir.string() + ": " + e.what());
    }
}

}  // namespace boxfit
