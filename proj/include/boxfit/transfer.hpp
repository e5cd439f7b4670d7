#pragma once

#include <functional>
#include <string>
#include <vector>

#include "boxfit/classify.hpp"
#include "boxfit/collection.hpp"
#include "boxfit/fitting.hpp"
#include "boxfit/geometry.hpp"
#include "boxfit/template.hpp"

namespace boxfit {

struct PipelineConfig {
    FitConfig fit;
    int grid_resolution = 32;
    double truncation = 0.25;
    int top_k = 3;
};

struct ConsideredCluster {
    int cluster_id = -1;
    double probability = 0.0;
    double fit_e_total = 0.0;
};

struct Identification {
    int template_id = -1;
    FitResult fit;
    std::vector<ConsideredCluster> considered;
};

/// Rasterizes the scan, predicts cluster probabilities, fits the templates of
/// the top-k clusters (warm-started from each cluster's mean parameter
/// vector) and returns the e_total-argmin fit.
Identification identify_partial(const PointCloud& scan, const CollectionIndex& index,
                                const std::vector<Template>& library, const MlpModel& model,
                                const PipelineConfig& config);

/// Maps p through the diagonal affine transform taking b1 onto b2.
/// Degenerate b1 axes map with ratio 1.
Point3 box_affine_map(const AABox& b1, const AABox& b2, const Point3& p);

/// Blends the per-box affine maps with Gaussian solid-distance weights, then
/// scales the result per axis into the target boxes' bounding box.
std::vector<Point3> deform(const std::vector<Point3>& points, const std::vector<AABox>& source_boxes,
                           const std::vector<AABox>& target_boxes);

struct Recovery {
    std::string source_shape_id;
    PointCloud deformed;  // labeled by nearest target box
    double residual = 0.0;  // mean scan-to-recovery nearest distance
    Identification identification;
    std::vector<std::string> ranked_sources;
};

using CloudLoader = std::function<PointCloud(const ShapeRecord&)>;

/// Identification, retrieval over the considered clusters that share the
/// identified template, and deformation of the top-ranked source shape onto
/// the partial scan's fitted boxes.
Recovery recover_shape(const PointCloud& scan, const CollectionIndex& index,
                       const std::vector<Template>& library, const MlpModel& model,
                       const PipelineConfig& config, const CloudLoader& load_cloud = nullptr);

/// Labels each point with the index of the nearest box (lowest index wins ties).
PointCloud label_points(const PointCloud& cloud, const std::vector<AABox>& boxes, const Template& t);

/// Mean over `from` points of the distance to the nearest `to` point.
double mean_nearest_distance(const PointCloud& from, const PointCloud& to);

}  // namespace boxfit
