#pragma once

#include <cstdint>

#include "boxfit/geometry.hpp"

namespace boxfit {

struct ScanConfig {
    Point3 viewpoint;           // zero vector: seeded-random upper hemisphere
    int depth_grid = 64;
    double noise_sigma = 0.005;
    double dropout_rate = 0.1;  // in [0, 1)
    std::uint64_t seed = 0;
};

/// Simulates a single-view partial scan: orthographic depth-buffer culling
/// along the viewpoint (nearest point per depth-grid cell survives), then
/// Gaussian jitter and random dropout. Throws if nothing survives.
PointCloud simulate_partial_scan(const PointCloud& cloud, const ScanConfig& config);

}  // namespace boxfit
