#include "boxfit/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "boxfit/geometry.hpp"
#include "boxfit/rng.hpp"

namespace boxfit {

namespace {
constexpr double kPenalty = 1e12;
constexpr double kSigmaFloor = 1e-14;
constexpr double kMaxCondition = 1e14;
}  // namespace

CmaResult cma_minimize(const Objective& objective, const std::vector<double>& x0,
                       const CmaConfig& config) {
    const int n = int(x0.size());
    if (n < 1) throw ValidationError("cma_minimize: dimension must be >= 1");
    if (!(config.sigma0 > 0.0)) throw ValidationError("cma_minimize: sigma0 must be > 0");
    if (config.max_evals <= 0) throw ValidationError("cma_minimize: max_evals must be > 0");
    if (config.population_size != 0 && config.population_size < 4)
        throw ValidationError("cma_minimize: population_size must be >= 4");

    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    const int lambda =
        config.population_size > 0 ? config.population_size : 4 + int(std::floor(3.0 * std::log(double(n))));
    const int mu = lambda / 2;

    VectorXd weights(mu);
    for (int i = 0; i < mu; ++i) weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    weights /= weights.sum();
    const double mueff = 1.0 / weights.squaredNorm();

    const double cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n);
    const double cs = (mueff + 2.0) / (n + mueff + 5.0);
    const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mueff);
    const double cmu = std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) * (n + 2.0) + mueff));
    const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + cs;
    const double chi_n = std::sqrt(double(n)) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * double(n) * n));

    VectorXd mean = Eigen::Map<const VectorXd>(x0.data(), n);
    double sigma = config.sigma0;
    MatrixXd cov = MatrixXd::Identity(n, n);
    VectorXd path_sigma = VectorXd::Zero(n);
    VectorXd path_cov = VectorXd::Zero(n);
    MatrixXd eig_basis = MatrixXd::Identity(n, n);
    VectorXd eig_sqrt = VectorXd::Ones(n);

    Rng rng(config.seed);
    CmaResult result;
    result.best_f = std::numeric_limits<double>::infinity();

    auto eval = [&](const VectorXd& x) {
        std::vector<double> xv(x.data(), x.data() + n);
        double f = objective(xv);
        if (!std::isfinite(f)) f = kPenalty;
        ++result.evaluations;
        if (f < result.best_f) {
            result.best_f = f;
            result.best_x = xv;
        }
        return f;
    };

    std::vector<VectorXd> ys(lambda), xs(lambda);
    std::vector<double> fs(lambda);

    while (result.evaluations < config.max_evals) {
        int evaluated = 0;
        for (int k = 0; k < lambda && result.evaluations < config.max_evals; ++k) {
            VectorXd z(n);
            for (int i = 0; i < n; ++i) z[i] = rng.normal();
            ys[k] = eig_basis * (eig_sqrt.asDiagonal() * z);
            xs[k] = mean + sigma * ys[k];
            fs[k] = eval(xs[k]);
            ++evaluated;
        }
        result.history.push_back(result.best_f);

        if (evaluated < mu) break;  // ran out of budget mid-generation

        std::vector<int> order(evaluated);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });

        VectorXd y_weighted = VectorXd::Zero(n);
        for (int i = 0; i < mu; ++i) y_weighted += weights[i] * ys[order[i]];
        mean += sigma * y_weighted;

        // C^{-1/2} y_w via the cached eigendecomposition.
        VectorXd c_inv_sqrt_y = eig_basis * (eig_sqrt.cwiseInverse().asDiagonal() * (eig_basis.transpose() * y_weighted));
        path_sigma = (1.0 - cs) * path_sigma + std::sqrt(cs * (2.0 - cs) * mueff) * c_inv_sqrt_y;

        double gen_count = double(result.history.size());
        double hsig_denom = std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen_count));
        bool hsig = path_sigma.norm() / hsig_denom / chi_n < 1.4 + 2.0 / (n + 1.0);

        path_cov = (1.0 - cc) * path_cov + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * y_weighted;

        MatrixXd rank_mu = MatrixXd::Zero(n, n);
        for (int i = 0; i < mu; ++i) rank_mu += weights[i] * (ys[order[i]] * ys[order[i]].transpose());
        double c1a = c1 * (1.0 - (hsig ? 0.0 : cc * (2.0 - cc)));
        cov = (1.0 - c1a - cmu) * cov + c1 * (path_cov * path_cov.transpose()) + cmu * rank_mu;
        cov = 0.5 * (cov + cov.transpose().eval());  // keep exactly symmetric

        sigma *= std::exp((cs / damps) * (path_sigma.norm() / chi_n - 1.0));

        Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success) throw NumericError("cma_minimize: eigendecomposition failed");
        VectorXd evals = solver.eigenvalues();
        result.min_eigenvalue.push_back(evals.minCoeff());
        // Guard against numerical loss of definiteness.
        double floor_eig = std::max(evals.maxCoeff(), 1e-300) * 1e-20;
        for (int i = 0; i < n; ++i) evals[i] = std::max(evals[i], floor_eig);
        eig_basis = solver.eigenvectors();
        eig_sqrt = evals.cwiseSqrt();

        if (result.best_f <= config.target_f) {
            result.converged = true;
            break;
        }
        if (sigma * eig_sqrt.maxCoeff() < kSigmaFloor) break;
        if (evals.maxCoeff() / evals.minCoeff() > kMaxCondition) break;
    }

    if (result.best_f <= config.target_f) result.converged = true;
    if (result.best_x.empty()) {
        // max_evals smaller than one sample; evaluate the start point.
        result.best_x = x0;
        result.best_f = objective(x0);
        if (!std::isfinite(result.best_f)) result.best_f = kPenalty;
        result.evaluations = std::max(result.evaluations, 1);
    }
    return result;
}

}  // namespace boxfit
