#include "boxfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "boxfit/rng.hpp"

namespace boxfit {

double distance(const Point3& a, const Point3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double point_to_box_distance(const Point3& p, const AABox& b) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        double lo = b.min(a), hi = b.max(a);
        double d = 0.0;
        if (p[a] < lo)
            d = lo - p[a];
        else if (p[a] > hi)
            d = p[a] - hi;
        d2 += d * d;
    }
    return std::sqrt(d2);
}

double box_volume(const AABox& b) { return b.size.x * b.size.y * b.size.z; }

double box_intersection_volume(const AABox& a, const AABox& b) {
    double vol = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
        double lo = std::max(a.min(ax), b.min(ax));
        double hi = std::min(a.max(ax), b.max(ax));
        if (hi <= lo) return 0.0;
        vol *= hi - lo;
    }
    return vol;
}

AABox bounding_box(const PointCloud& cloud) {
    if (cloud.empty()) throw ValidationError("bounding_box: empty cloud");
    Point3 lo = cloud.points.front(), hi = lo;
    for (const auto& p : cloud.points) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    AABox b;
    b.center = (lo + hi) * 0.5;
    b.size = hi - lo;
    return b;
}

AABox template_bounding_box(const std::vector<AABox>& boxes) {
    if (boxes.empty()) throw ValidationError("template_bounding_box: empty box list");
    Point3 lo, hi;
    for (int a = 0; a < 3; ++a) {
        lo[a] = boxes.front().min(a);
        hi[a] = boxes.front().max(a);
    }
    for (const auto& b : boxes) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], b.min(a));
            hi[a] = std::max(hi[a], b.max(a));
        }
    }
    AABox out;
    out.center = (lo + hi) * 0.5;
    out.size = hi - lo;
    return out;
}

DistanceGrid rasterize_distance_grid(const PointCloud& cloud, int resolution, double truncation) {
    if (cloud.empty()) throw ValidationError("rasterize_distance_grid: empty cloud");
    if (resolution < 2) throw ValidationError("rasterize_distance_grid: resolution must be >= 2");
    if (!(truncation > 0.0)) throw ValidationError("rasterize_distance_grid: truncation must be > 0");

    AABox bbox = bounding_box(cloud);
    double extent = std::max({bbox.size.x, bbox.size.y, bbox.size.z, 1e-6});
    // One padding cell on each side: resolution cells span extent + 2 cells.
    double cell = extent / std::max(resolution - 2, 1);

    DistanceGrid grid;
    grid.nx = grid.ny = grid.nz = resolution;
    grid.cell_size = cell;
    grid.truncation = truncation;
    grid.origin = bbox.center - Point3{1.0, 1.0, 1.0} * (0.5 * resolution * cell);
    grid.values.assign(std::size_t(resolution) * resolution * resolution, truncation);

    // Splat each point into the cells it can influence (within truncation,
    // measured center-to-point, so inflate the index window by one cell).
    double reach = truncation + cell;
    for (const auto& p : cloud.points) {
        int i0 = std::max(0, int(std::floor((p.x - reach - grid.origin.x) / cell)));
        int j0 = std::max(0, int(std::floor((p.y - reach - grid.origin.y) / cell)));
        int k0 = std::max(0, int(std::floor((p.z - reach - grid.origin.z) / cell)));
        int i1 = std::min(resolution - 1, int(std::floor((p.x + reach - grid.origin.x) / cell)));
        int j1 = std::min(resolution - 1, int(std::floor((p.y + reach - grid.origin.y) / cell)));
        int k1 = std::min(resolution - 1, int(std::floor((p.z + reach - grid.origin.z) / cell)));
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    double d = distance(grid.cell_center(i, j, k), p);
                    double& v = grid.at(i, j, k);
                    if (d < v) v = d;
                }
    }
    return grid;
}

NormalizeTransform normalize_to_unit_cube(PointCloud& cloud) {
    AABox bbox = bounding_box(cloud);
    double extent = std::max({bbox.size.x, bbox.size.y, bbox.size.z});
    NormalizeTransform t;
    t.offset = bbox.center;
    t.scale = extent > 0.0 ? 1.0 / extent : 1.0;
    for (auto& p : cloud.points) p = (p - t.offset) * t.scale;
    return t;
}

PointCloud sample_boxes_surface(const std::vector<AABox>& boxes, int count, std::uint64_t seed) {
    if (boxes.empty()) throw ValidationError("sample_boxes_surface: empty box list");
    // Cumulative face areas: 6 faces per box.
    std::vector<double> cum;
    cum.reserve(boxes.size() * 6);
    double total = 0.0;
    for (const auto& b : boxes) {
        double axy = b.size.x * b.size.y;
        double ayz = b.size.y * b.size.z;
        double azx = b.size.z * b.size.x;
        for (double a : {ayz, ayz, azx, azx, axy, axy}) {
            total += a;
            cum.push_back(total);
        }
    }
    if (total <= 0.0) throw ValidationError("sample_boxes_surface: all boxes degenerate");

    Rng rng(seed);
    PointCloud out;
    out.points.reserve(count);
    out.labels.reserve(count);
    for (int s = 0; s < count; ++s) {
        double r = rng.uniform() * total;
        std::size_t f = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
        if (f >= cum.size()) f = cum.size() - 1;
        std::size_t bi = f / 6;
        int face = int(f % 6);
        int axis = face / 2;         // face normal axis
        int side = face % 2;         // 0 = min face, 1 = max face
        const AABox& b = boxes[bi];
        Point3 p = b.center;
        p[axis] = side ? b.max(axis) : b.min(axis);
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        p[u] = rng.uniform(b.min(u), b.max(u));
        p[v] = rng.uniform(b.min(v), b.max(v));
        out.points.push_back(p);
        out.labels.push_back(int(bi));
    }
    return out;
}

PointCloud farthest_point_subsample(const PointCloud& cloud, int target_count, std::uint64_t seed) {
    if (cloud.empty()) throw ValidationError("farthest_point_subsample: empty cloud");
    std::size_t n = cloud.size();
    if (int(n) <= target_count) return cloud;

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(target_count);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());

    std::size_t cur = rng.uniform_index(n);
    chosen.push_back(cur);
    for (int s = 1; s < target_count; ++s) {
        std::size_t far_idx = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = distance(cloud.points[i], cloud.points[cur]);
            if (d < best[i]) best[i] = d;
            if (best[i] > far_d) {
                far_d = best[i];
                far_idx = i;
            }
        }
        cur = far_idx;
        chosen.push_back(cur);
    }

    PointCloud out;
    out.points.reserve(chosen.size());
    if (cloud.has_labels()) out.labels.reserve(chosen.size());
    for (auto i : chosen) {
        out.points.push_back(cloud.points[i]);
        if (cloud.has_labels()) out.labels.push_back(cloud.labels[i]);
    }
    return out;
}

}  // namespace boxfit
