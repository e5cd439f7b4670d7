#include "boxfit/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "boxfit/io.hpp"

namespace boxfit {

Identification identify_partial(const PointCloud& scan, const CollectionIndex& index,
                                const std::vector<Template>& library, const MlpModel& model,
                                const PipelineConfig& config) {
    if (scan.empty()) throw ValidationError("identify_partial: empty scan");
    if (model.output_dim() != index.cluster_count())
        throw ValidationError("identify_partial: model output does not match index cluster count");

    DistanceGrid grid = rasterize_distance_grid(scan, config.grid_resolution, config.truncation);
    std::vector<double> probs = predict(model, grid);
    std::vector<int> clusters = top_k(probs, std::min(config.top_k, index.cluster_count()));

    Identification id;
    double best = std::numeric_limits<double>::infinity();
    for (int c : clusters) {
        const Template& t = find_template(library, cluster_template(index, c));
        FitResult fit = fit_template(scan, t, {cluster_centroid(index, c)}, config.fit,
                                     InitSource::ClusterMean);
        id.considered.push_back({c, probs[c], fit.breakdown.e_total});
        if (fit.breakdown.e_total < best) {
            best = fit.breakdown.e_total;
            id.fit = std::move(fit);
            id.template_id = t.template_id;
        }
    }
    return id;
}

Point3 box_affine_map(const AABox& b1, const AABox& b2, const Point3& p) {
    Point3 out;
    for (int a = 0; a < 3; ++a) {
        double ratio = b1.size[a] > 0.0 ? b2.size[a] / b1.size[a] : 1.0;
        out[a] = b2.center[a] + ratio * (p[a] - b1.center[a]);
    }
    return out;
}

std::vector<Point3> deform(const std::vector<Point3>& points, const std::vector<AABox>& source_boxes,
                           const std::vector<AABox>& target_boxes) {
    if (source_boxes.size() != target_boxes.size())
        throw ValidationError("deform: box count mismatch");
    if (source_boxes.empty()) throw ValidationError("deform: empty box lists");

    std::vector<Point3> out;
    out.reserve(points.size());
    std::vector<double> d(source_boxes.size());
    for (const auto& q : points) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < source_boxes.size(); ++i) {
            d[i] = point_to_box_distance(q, source_boxes[i]);
            dmin = std::min(dmin, d[i]);
        }
        // Weights are normalized by the largest one (exp(-(d^2 - dmin^2)))
        // so the denominator stays well conditioned far from all boxes.
        Point3 num;
        double den = 1e-12;
        for (std::size_t i = 0; i < source_boxes.size(); ++i) {
            double w = std::exp(-(d[i] * d[i] - dmin * dmin));
            num = num + box_affine_map(source_boxes[i], target_boxes[i], q) * w;
            den += w;
        }
        out.push_back(num * (1.0 / den));
    }

    // Global per-axis scaling into the target template bounding box.
    if (!out.empty()) {
        AABox target_bbox = template_bounding_box(target_boxes);
        PointCloud tmp;
        tmp.points = out;
        AABox deformed_bbox = bounding_box(tmp);
        for (auto& p : out)
            for (int a = 0; a < 3; ++a) {
                if (deformed_bbox.size[a] > 0.0) {
                    double s = target_bbox.size[a] / deformed_bbox.size[a];
                    p[a] = target_bbox.min(a) + s * (p[a] - deformed_bbox.min(a));
                } else {
                    p[a] = target_bbox.center[a];
                }
            }
    }
    return out;
}

double mean_nearest_distance(const PointCloud& from, const PointCloud& to) {
    if (from.empty() || to.empty()) throw ValidationError("mean_nearest_distance: empty cloud");
    double sum = 0.0;
    for (const auto& p : from.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to.points) best = std::min(best, distance(p, q));
        sum += best;
    }
    return sum / double(from.size());
}

Recovery recover_shape(const PointCloud& scan, const CollectionIndex& index,
                       const std::vector<Template>& library, const MlpModel& model,
                       const PipelineConfig& config, const CloudLoader& load_cloud) {
    Recovery rec;
    rec.identification = identify_partial(scan, index, library, model, config);

    std::vector<int> search_clusters;
    for (const auto& c : rec.identification.considered)
        if (cluster_template(index, c.cluster_id) == rec.identification.template_id)
            search_clusters.push_back(c.cluster_id);

    rec.ranked_sources = retrieve_nearest(index, search_clusters, rec.identification.fit.params);
    if (rec.ranked_sources.empty())
        throw ValidationError("recover_shape: no collection shapes in the considered clusters");
    rec.source_shape_id = rec.ranked_sources.front();

    const ShapeRecord& source = index.record(rec.source_shape_id);
    PointCloud source_cloud =
        load_cloud ? load_cloud(source) : read_point_cloud(source.cloud_path);

    std::vector<Point3> deformed =
        deform(source_cloud.points, source.fit.boxes, rec.identification.fit.boxes);
    PointCloud deformed_cloud;
    deformed_cloud.points = std::move(deformed);
    const Template& t = find_template(library, rec.identification.template_id);
    rec.deformed = label_points(deformed_cloud, rec.identification.fit.boxes, t);
    rec.residual = mean_nearest_distance(scan, rec.deformed);
    return rec;
}

PointCloud label_points(const PointCloud& cloud, const std::vector<AABox>& boxes, const Template& t) {
    if (boxes.empty()) throw ValidationError("label_points: empty box list");
    if (int(boxes.size()) != t.node_count())
        throw ValidationError("label_points: box count does not match template");
    PointCloud out = cloud;
    out.labels.assign(cloud.size(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int label = 0;
        for (std::size_t b = 0; b < boxes.size(); ++b) {
            double d = point_to_box_distance(cloud.points[i], boxes[b]);
            if (d < best) {
                best = d;
                label = int(b);
            }
        }
        out.labels[i] = label;
    }
    return out;
}

}  // namespace boxfit
