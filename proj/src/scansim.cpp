#include "boxfit/scansim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "boxfit/rng.hpp"

namespace boxfit {

namespace {

double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Point3 normalized(const Point3& v) {
    double n = std::sqrt(dot(v, v));
    if (n <= 0.0) throw ValidationError("simulate_partial_scan: zero-length viewpoint");
    return v * (1.0 / n);
}

}  // namespace

PointCloud simulate_partial_scan(const PointCloud& cloud, const ScanConfig& config) {
    if (cloud.empty()) throw ValidationError("simulate_partial_scan: empty cloud");
    if (config.depth_grid < 1) throw ValidationError("simulate_partial_scan: depth_grid must be >= 1");
    if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0)
        throw ValidationError("simulate_partial_scan: dropout_rate must be in [0, 1)");

    Rng rng(config.seed);

    Point3 dir = config.viewpoint;
    if (dir == Point3{}) {
        // Uniform on the upper hemisphere (+Y up).
        double y = rng.uniform();
        double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        double phi = 2.0 * 3.14159265358979323846 * rng.uniform();
        dir = {r * std::cos(phi), y, r * std::sin(phi)};
    }
    dir = normalized(dir);

    // Orthonormal tangent basis for the image plane.
    Point3 ref = std::abs(dir.y) < 0.9 ? Point3{0, 1, 0} : Point3{1, 0, 0};
    Point3 u{dir.y * ref.z - dir.z * ref.y, dir.z * ref.x - dir.x * ref.z, dir.x * ref.y - dir.y * ref.x};
    u = normalized(u);
    Point3 v{dir.y * u.z - dir.z * u.y, dir.z * u.x - dir.x * u.z, dir.x * u.y - dir.y * u.x};

    std::vector<double> us(cloud.size()), vs(cloud.size()), depth(cloud.size());
    double ulo = std::numeric_limits<double>::infinity(), uhi = -ulo;
    double vlo = ulo, vhi = -ulo;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        us[i] = dot(cloud.points[i], u);
        vs[i] = dot(cloud.points[i], v);
        depth[i] = dot(cloud.points[i], dir);  // camera along +dir; larger is nearer
        ulo = std::min(ulo, us[i]);
        uhi = std::max(uhi, us[i]);
        vlo = std::min(vlo, vs[i]);
        vhi = std::max(vhi, vs[i]);
    }
    double cell_u = std::max(uhi - ulo, 1e-12) / config.depth_grid;
    double cell_v = std::max(vhi - vlo, 1e-12) / config.depth_grid;

    // Depth buffer: nearest point index per cell (first index wins ties).
    std::vector<int> buffer(std::size_t(config.depth_grid) * config.depth_grid, -1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        int ci = std::min(config.depth_grid - 1, int((us[i] - ulo) / cell_u));
        int cj = std::min(config.depth_grid - 1, int((vs[i] - vlo) / cell_v));
        int& slot = buffer[std::size_t(cj) * config.depth_grid + ci];
        if (slot < 0 || depth[i] > depth[slot]) slot = int(i);
    }

    PointCloud out;
    bool labeled = cloud.has_labels();
    for (int slot : buffer) {
        if (slot < 0) continue;
        if (config.dropout_rate > 0.0 && rng.uniform() < config.dropout_rate) continue;
        Point3 p = cloud.points[slot];
        if (config.noise_sigma > 0.0) {
            p.x += config.noise_sigma * rng.normal();
            p.y += config.noise_sigma * rng.normal();
            p.z += config.noise_sigma * rng.normal();
        }
        out.points.push_back(p);
        if (labeled) out.labels.push_back(cloud.labels[slot]);
    }
    if (out.empty()) throw ValidationError("simulate_partial_scan: degenerate scan, all points culled");
    return out;
}

}  // namespace boxfit
