#pragma once

#include <string>
#include <vector>

#include "boxfit/cmaes.hpp"
#include "boxfit/energy.hpp"
#include "boxfit/geometry.hpp"
#include "boxfit/template.hpp"

namespace boxfit {

enum class InitSource { Default, WarmStart, ClusterMean };

struct FitResult {
    int template_id = -1;
    ParamVector params;
    std::vector<AABox> boxes;
    EnergyBreakdown breakdown;
    int evaluations = 0;
    InitSource init_source = InitSource::Default;
};

struct FitConfig {
    EnergyWeights weights;
    int restarts = 4;
    CmaConfig cma{.population_size = 0, .sigma0 = 0.15, .max_evals = 4500, .seed = 1};
    int sample_count = 2048;
};

/// Heuristic initialization. Starting from the cloud's bounding box, each node
/// keeps the core of its region after carving a slab off every face a child
/// attaches to; children recurse into their slabs (mirror-group members into
/// their own quadrant of it) and every box shrinks to the points it contains.
ParamVector default_init(const PointCloud& cloud, const Template& t);

/// Multi-start CMA-ES fit. Runs one optimization per supplied init (tagged
/// `init_label`) plus default inits up to config.restarts, and returns the
/// minimum-e_total result. Restart seeds are config.cma.seed + restart index.
FitResult fit_template(const PointCloud& cloud, const Template& t,
                       const std::vector<ParamVector>& inits, const FitConfig& config,
                       InitSource init_label = InitSource::WarmStart);

/// Fits every candidate and returns all results sorted ascending by e_total;
/// ties within 1e-12 break toward the template with fewer boxes.
struct SelectionResult {
    FitResult best;
    std::vector<FitResult> ranked;
};
SelectionResult select_template(const PointCloud& cloud, const std::vector<Template>& candidates,
                                const FitConfig& config);

/// Deterministic resampling applied before fitting (farthest-point subsample
/// to config.sample_count, seeded with config.cma.seed).
PointCloud resample_for_fitting(const PointCloud& cloud, const FitConfig& config);

}  // namespace boxfit
