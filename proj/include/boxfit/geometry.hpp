#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace boxfit {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int axis) { return (&x)[axis]; }
    double operator[](int axis) const { return (&x)[axis]; }

    Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
    bool operator==(const Point3& o) const = default;
};

double distance(const Point3& a, const Point3& b);

/// Point cloud with optional per-point part labels (empty or one per point).
struct PointCloud {
    std::vector<Point3> points;
    std::vector<int> labels;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_labels() const { return !labels.empty(); }
};

/// Axis-aligned box given by its center and full edge lengths.
struct AABox {
    Point3 center;
    Point3 size;  // lx, ly, lz >= 0

    double min(int axis) const { return center[axis] - 0.5 * size[axis]; }
    double max(int axis) const { return center[axis] + 0.5 * size[axis]; }
    bool operator==(const AABox& o) const = default;
};

/// Truncated unsigned distance field on a regular cubic grid.
struct DistanceGrid {
    int nx = 0, ny = 0, nz = 0;
    Point3 origin;     // min corner of the grid
    double cell_size = 0.0;
    double truncation = 0.0;
    std::vector<double> values;  // x-fastest, then y, then z

    double& at(int i, int j, int k) { return values[std::size_t(k * ny + j) * nx + i]; }
    double at(int i, int j, int k) const { return values[std::size_t(k * ny + j) * nx + i]; }
    Point3 cell_center(int i, int j, int k) const {
        return {origin.x + (i + 0.5) * cell_size,
                origin.y + (j + 0.5) * cell_size,
                origin.z + (k + 0.5) * cell_size};
    }
};

/// Euclidean distance from p to the solid box (0 inside or on the boundary).
double point_to_box_distance(const Point3& p, const AABox& b);

double box_volume(const AABox& b);
double box_intersection_volume(const AABox& a, const AABox& b);

/// Tightest axis-aligned box containing all points. Throws on empty cloud.
AABox bounding_box(const PointCloud& cloud);

/// Tightest axis-aligned box containing every box in the list. Throws on empty list.
AABox template_bounding_box(const std::vector<AABox>& boxes);

/// Truncated distance field over the cloud's bounding box padded by one cell.
/// Each cell holds min(truncation, distance from cell center to nearest point).
DistanceGrid rasterize_distance_grid(const PointCloud& cloud, int resolution, double truncation);

/// Uniformly scales and centers the cloud into the unit cube at the origin.
/// Returns the applied transform as (scale, offset): p' = (p - offset) * scale.
struct NormalizeTransform {
    double scale = 1.0;
    Point3 offset;
};
NormalizeTransform normalize_to_unit_cube(PointCloud& cloud);

/// Samples points uniformly (area-weighted) on the union of the boxes' surfaces.
/// Labels each sample with the index of the box it was drawn from.
PointCloud sample_boxes_surface(const std::vector<AABox>& boxes, int count, std::uint64_t seed);

/// Deterministic farthest-point subsample to at most target_count points.
PointCloud farthest_point_subsample(const PointCloud& cloud, int target_count, std::uint64_t seed);

}  // namespace boxfit
