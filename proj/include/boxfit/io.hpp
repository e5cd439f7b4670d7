#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "boxfit/geometry.hpp"

namespace boxfit {

/// Triangle mesh: vertices plus faces as vertex-index triples (fans for polygons).
struct Mesh {
    std::vector<Point3> vertices;
    std::vector<std::array<int, 3>> faces;
};

/// Reads a point cloud by extension: .xyz / .xyzl (ASCII) or .ply
/// (ASCII or binary_little_endian, vertex positions only).
PointCloud read_point_cloud(const std::filesystem::path& path);

PointCloud read_xyz(const std::filesystem::path& path);
PointCloud read_ply(const std::filesystem::path& path);

/// Writes "x y z" per line, or "x y z label" when the cloud is labeled.
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

Mesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

/// Writes each box as 12 triangles, one OBJ group per name (or "box<i>").
void write_boxes_obj(const std::filesystem::path& path, const std::vector<AABox>& boxes,
                     const std::vector<std::string>& names = {});

}  // namespace boxfit
