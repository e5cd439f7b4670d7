#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "boxfit/fitting.hpp"
#include "boxfit/geometry.hpp"
#include "boxfit/template.hpp"

namespace boxfit {

struct ShapeRecord {
    std::string shape_id;
    std::string family;
    std::string cloud_path;   // may be empty for in-memory collections
    FitResult fit;
    std::string error;        // non-empty: fit failed, record quarantined
    int cluster = -1;         // global cluster id
};

/// Clusters of one template's fitted parameter vectors.
struct TemplateClusters {
    int template_id = -1;
    int first_global_id = 0;  // global id of centroid 0
    std::vector<std::vector<double>> centroids;
    std::vector<std::vector<std::string>> members;  // shape ids per cluster
};

struct ClusterModel {
    int clusters_per_template = 10;
    std::vector<TemplateClusters> per_template;
};

struct CollectionIndex {
    std::vector<ShapeRecord> records;
    ClusterModel cluster_model;
    std::vector<int> cluster_to_template;  // global cluster id -> template id

    int cluster_count() const { return int(cluster_to_template.size()); }
    const ShapeRecord& record(const std::string& shape_id) const;
};

struct CollectionConfig {
    FitConfig fit;
    int clusters_per_template = 10;
    int warm_starts_per_fit = 2;  // prior same-family successes reused as inits
    std::uint64_t kmeans_seed = 7;
};

struct ShapeInput {
    std::string shape_id;
    std::string family;
    std::string cloud_path;
    PointCloud cloud;
};

struct KmeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignments;
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; runs to an assignment fixpoint or
/// 100 iterations. k is reduced to |vectors| when larger.
KmeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, std::uint64_t seed);

/// Fits every shape (candidates: its family's templates, warm-started from
/// prior same-family successes in input order), then clusters per template.
CollectionIndex preprocess_collection(const std::vector<ShapeInput>& shapes,
                                      const std::vector<Template>& library,
                                      const CollectionConfig& config);

/// Builds the cluster model and global ids over already-fitted records.
CollectionIndex build_index_from_records(std::vector<ShapeRecord> records, int clusters_per_template,
                                         std::uint64_t kmeans_seed);

/// Nearest centroid among the template's clusters (lowest global id on ties).
int assign_cluster(const CollectionIndex& index, int template_id, const ParamVector& params);

/// Shapes in the listed clusters ranked by parameter-space distance to the query.
std::vector<std::string> retrieve_nearest(const CollectionIndex& index,
                                          const std::vector<int>& cluster_ids,
                                          const ParamVector& query_params);

int cluster_template(const CollectionIndex& index, int cluster_id);
const std::vector<double>& cluster_centroid(const CollectionIndex& index, int cluster_id);

void save_index(const std::filesystem::path& dir, const CollectionIndex& index);
CollectionIndex load_index(const std::filesystem::path& dir);

void save_fit_result(const std::filesystem::path& path, const FitResult& fit);
FitResult load_fit_result(const std::filesystem::path& path);

}  // namespace boxfit
