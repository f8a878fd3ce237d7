#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wetrial/rng.hpp"
#include "wetrial/stat_math.hpp"
#include "wetrial/trial.hpp"

namespace wetrial {

// P(d(A) < d(B)) where d is the standardised distance to the target and A, B
// are independent Gaussian posteriors. Monte Carlo over all coordinates but
// A's first; that one is integrated exactly given the others, which keeps the
// estimator unbiased with a much smaller variance than plain counting.
double mv_superiority_prob(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& post_cov_a,
                           const Eigen::VectorXd& target_a, const Eigen::VectorXd& inv_sd_a,
                           const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& post_cov_b,
                           const Eigen::VectorXd& target_b, const Eigen::VectorXd& inv_sd_b, std::uint64_t draws,
                           Stream& rng);

// Posterior probability that the selected best arm is closer to its target
// than the selected second best. Scalar endpoints use quadrature; vector
// endpoints need the per-arm covariances and use `draws` posterior draws from
// the statistic sub-stream of `seed`.
double superiority_statistic(const TrialOutcome& outcome, const std::vector<Eigen::MatrixXd>& covariances = {},
                             std::uint64_t seed = 1, std::uint64_t draws = 100'000);

class InfeasibleCalibration : public std::runtime_error {
public:
    InfeasibleCalibration(const std::string& what, double lowest, double highest)
        : std::runtime_error(what), lowest_(lowest), highest_(highest) {}
    double lowest() const noexcept { return lowest_; }
    double highest() const noexcept { return highest_; }

private:
    double lowest_, highest_;
};

// The ceil((1 - alpha) M)-th order statistic of the samples.
double upper_quantile(std::vector<double> samples, double alpha);

// Fraction of samples strictly above eta.
double exceedance_rate(std::span<const double> samples, double eta);

enum class ControlRule { strong, average };

struct NullScenarioSet {
    std::vector<Scenario> scenarios;
    std::vector<double> weights;  // empty = equal weights

    // Warnings for members violating the null or lying more than ten
    // standard deviations from the target.
    std::vector<std::string> validate() const;
};

struct CutoffCalibration {
    ControlRule rule = ControlRule::average;
    double alpha = 0.05;
    int replicas = 0;
    std::uint64_t seed = 0;
    std::string design;
    std::vector<std::string> scenario_names;
    std::vector<double> weights;
    std::vector<double> individual;  // per-scenario cut-offs
    std::vector<double> realised;    // per-scenario exceedance at eta
    double eta = 0.0;
    double realised_mean = 0.0;  // weighted mean of `realised`
};

double calibrate_individual(std::span<const double> statistics, double alpha);
double calibrate_individual(const Scenario& null_scenario, const TrialConfig& config, double alpha, int replicas,
                            int threads = 0);

// Calibration from stored per-scenario statistics (rows = scenarios).
// The average rule bisects over the pooled sample values for the smallest eta
// whose weighted exceedance does not exceed alpha. The exceedance is a step
// function of eta, so this is exact and never anti-conservative.
CutoffCalibration calibrate_from_samples(ControlRule rule, const std::vector<std::vector<double>>& statistics,
                                         std::vector<double> weights, double alpha);

// Simulates `replicas` trials per null scenario (scenario s uses seed
// derive_seed(config.seed, s)) and calibrates.
CutoffCalibration calibrate(ControlRule rule, const NullScenarioSet& nulls, const TrialConfig& config, double alpha,
                            int replicas, int threads = 0);

// Per-scenario statistics used by calibrate().
std::vector<std::vector<double>> null_statistics(const NullScenarioSet& nulls, const TrialConfig& config,
                                                 int replicas, int threads = 0);

double type_i_rate(const Scenario& null_scenario, const TrialConfig& config, double eta, int replicas,
                   int threads = 0);

// c_i = (i sqrt(c_max) / (G - 1))^2, i = 0..G-1.
std::vector<double> quadratic_offsets(double c_max, int points);

// All arms at target + c with the given sigmas, one scenario per c.
NullScenarioSet univariate_null_grid(std::span<const double> offsets, std::span<const double> sigma, double target,
                                     VarianceMode variance = VarianceMode::known);
// Cartesian product of offsets and sigma patterns.
NullScenarioSet sigma_cross_null_grid(std::span<const double> offsets, const std::vector<std::vector<double>>& sigmas,
                                      double target, VarianceMode variance = VarianceMode::unknown);
// All arms at target + (c1, c2) with covariance cov, one scenario per element
// of the Cartesian product c1 x c2.
NullScenarioSet bivariate_null_grid(std::span<const double> c1, std::span<const double> c2, std::size_t arms,
                                    const Eigen::MatrixXd& cov, const Eigen::VectorXd& target);

// 6 x 6 grid for two endpoints: c1 = 0, 2, .., 10 sd of the first endpoint,
// c2 = 1/6, .., 1 of 9.375 sd of the second (36 scenarios).
NullScenarioSet default_bivariate_nulls(std::size_t arms, const Eigen::MatrixXd& cov, const Eigen::VectorXd& target);

}  // namespace wetrial
