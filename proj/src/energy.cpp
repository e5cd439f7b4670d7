#include "boxfit/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace boxfit {

double e_proj(const PointCloud& cloud, const std::vector<AABox>& boxes) {
    if (cloud.empty()) throw ValidationError("e_proj: empty cloud");
    if (boxes.empty()) throw ValidationError("e_proj: empty box list");

    // Hot loop of the fitting objective: compare squared distances against
    // precomputed box bounds and take one square root per point.
    struct Bounds {
        double lo[3], hi[3];
    };
    std::vector<Bounds> bounds(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            bounds[i].lo[a] = boxes[i].min(a);
            bounds[i].hi[a] = boxes[i].max(a);
        }

    double sum = 0.0;
    for (const auto& p : cloud.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : bounds) {
            double sq = 0.0;
            for (int a = 0; a < 3; ++a) {
                double d = std::max({b.lo[a] - p[a], p[a] - b.hi[a], 0.0});
                sq += d * d;
            }
            if (sq < best) {
                best = sq;
                if (best == 0.0) break;
            }
        }
        sum += std::sqrt(best);
    }
    return sum;
}

double e_bbox(const PointCloud& cloud, const std::vector<AABox>& boxes) {
    if (cloud.empty()) throw ValidationError("e_bbox: empty cloud");
    if (boxes.empty()) throw ValidationError("e_bbox: empty box list");
    return std::abs(box_volume(template_bounding_box(boxes)) - box_volume(bounding_box(cloud)));
}

double e_min(const std::vector<AABox>& boxes) {
    if (boxes.empty()) throw ValidationError("e_min: empty box list");
    double sum = 0.0;
    for (const auto& b : boxes) sum += box_volume(b);
    return sum;
}

double e_disent(const std::vector<AABox>& boxes) {
    if (boxes.empty()) throw ValidationError("e_disent: empty box list");
    double sum = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j)
            sum += 2.0 * box_intersection_volume(boxes[i], boxes[j]);
    return sum;
}

EnergyBreakdown e_total(const PointCloud& cloud, const std::vector<AABox>& boxes,
                        const EnergyWeights& w) {
    EnergyBreakdown b;
    b.e_proj = e_proj(cloud, boxes);
    b.e_bbox = e_bbox(cloud, boxes);
    b.e_min = e_min(boxes);
    b.e_disent = e_disent(boxes);
    b.e_total = w.lambda_proj * b.e_proj + w.lambda_bbox * b.e_bbox + w.lambda_min * b.e_min +
                w.lambda_disent * b.e_disent;
    return b;
}

EnergyBreakdown e_total(const PointCloud& cloud, const Template& t, const ParamVector& params,
                        const EnergyWeights& weights) {
    return e_total(cloud, decode(t, params), weights);
}

}  // namespace boxfit
