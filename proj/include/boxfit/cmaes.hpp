#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace boxfit {

struct CmaConfig {
    int population_size = 0;  // 0: default 4 + floor(3 ln n)
    double sigma0 = 0.3;
    int max_evals = 10000;
    double target_f = -1e300;
    std::uint64_t seed = 0;
};

struct CmaResult {
    std::vector<double> best_x;
    double best_f = 0.0;
    int evaluations = 0;
    bool converged = false;             // target_f reached
    std::vector<double> history;        // running best_f per generation
    std::vector<double> min_eigenvalue; // smallest covariance eigenvalue per generation
};

using Objective = std::function<double(const std::vector<double>&)>;

/// (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and rank-1 +
/// rank-mu covariance updates. Non-finite objective values are treated as a
/// 1e12 penalty. Deterministic given the seed.
CmaResult cma_minimize(const Objective& objective, const std::vector<double>& x0,
                       const CmaConfig& config);

}  // namespace boxfit
