#pragma once

#include <vector>

#include "boxfit/geometry.hpp"
#include "boxfit/template.hpp"

namespace boxfit {

struct EnergyWeights {
    double lambda_proj = 0.3;
    double lambda_bbox = 1.0;
    double lambda_min = 0.8;
    double lambda_disent = 0.4;
};

struct EnergyBreakdown {
    double e_proj = 0.0;
    double e_bbox = 0.0;
    double e_min = 0.0;
    double e_disent = 0.0;
    double e_total = 0.0;
};

/// Sum over cloud points of the distance to the nearest box.
double e_proj(const PointCloud& cloud, const std::vector<AABox>& boxes);

/// Absolute volume difference between the boxes' bounding box and the cloud's.
double e_bbox(const PointCloud& cloud, const std::vector<AABox>& boxes);

/// Total volume of all boxes.
double e_min(const std::vector<AABox>& boxes);

/// Ordered double sum of pairwise overlap volumes (each pair counted twice).
double e_disent(const std::vector<AABox>& boxes);

EnergyBreakdown e_total(const PointCloud& cloud, const std::vector<AABox>& boxes,
                        const EnergyWeights& weights);

EnergyBreakdown e_total(const PointCloud& cloud, const Template& t, const ParamVector& params,
                        const EnergyWeights& weights);

}  // namespace boxfit
