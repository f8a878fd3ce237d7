#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wetrial/policies.hpp"
#include "wetrial/rng.hpp"
#include "wetrial/stat_math.hpp"

namespace wetrial {

enum class VarianceMode { known, unknown };

struct ArmTruth {
    double mean = 0.0;
    double sigma = 1.0;
    double target = 0.0;
};

struct MvArmTruth {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd target;
};

// Ground truth for one simulated setting. Exactly one of `arms` (scalar
// endpoint) and `mv_arms` (vector endpoint, known covariance) is populated.
struct Scenario {
    std::string name;
    std::vector<ArmTruth> arms;
    std::vector<MvArmTruth> mv_arms;
    VarianceMode variance = VarianceMode::known;

    std::size_t size() const noexcept { return multivariate() ? mv_arms.size() : arms.size(); }
    bool multivariate() const noexcept { return !mv_arms.empty(); }
    int dimension() const noexcept { return multivariate() ? static_cast<int>(mv_arms.front().mean.size()) : 1; }
    void validate() const;
};

struct TrialConfig {
    int total = 100;
    PolicySpec policy;
    std::uint64_t seed = 1;
    std::shared_ptr<const GittinsTable> gittins;
    // When false the superiority statistic is skipped (NaN in the outcome).
    bool compute_statistic = true;
    // Posterior draws for the vector-endpoint statistic.
    std::uint64_t mv_draws = 100'000;
};

struct TrialOutcome {
    std::vector<std::uint32_t> allocations;  // 0-based arm of each patient
    std::vector<ArmState> arms;
    std::vector<MvArmState> mv_arms;
    std::vector<std::uint32_t> counts;
    // Observed responses in patient order (scalar or vector endpoint).
    std::vector<double> responses;
    std::vector<Eigen::VectorXd> mv_responses;
    std::size_t best = 0;
    std::size_t second = 1;
    double statistic = 0.0;
};

// Sum over coordinates of |mean - target| / sqrt(cov_ll).
double standardised_distance(const Eigen::VectorXd& mean, const Eigen::VectorXd& target,
                             const Eigen::VectorXd& inv_sd);

// Best and second-best arm by |mean - target| (scalar) or the standardised
// distance (vector), exact ties split uniformly with rng.
std::pair<std::size_t, std::size_t> select_best(std::span<const ArmState> arms, Stream& rng);
std::pair<std::size_t, std::size_t> select_best(std::span<const MvArmState> arms,
                                                std::span<const Eigen::VectorXd> inv_sd, Stream& rng);
std::pair<std::size_t, std::size_t> rank_two(std::span<const double> distance, Stream& rng);

// True best and second-best arms of a scenario; ties split with the truth
// sub-stream of `seed`.
std::pair<std::size_t, std::size_t> true_best(const Scenario& scenario, std::uint64_t seed);

// Allocation and bookkeeping shared by simulated trials and live sessions.
// Patient t (1-based) draws from the allocation sub-stream index t; final
// selection uses the selection sub-stream and the vector statistic the
// statistic sub-stream, all keyed by the trial seed.
class TrialState {
public:
    // Scalar endpoint: targets per arm, sigma per arm when known.
    TrialState(std::vector<double> targets, std::vector<std::optional<double>> sigma, const TrialConfig& config);
    // Vector endpoint with known covariances.
    TrialState(std::vector<Eigen::VectorXd> targets, std::vector<Eigen::MatrixXd> covariances,
               const TrialConfig& config);

    static TrialState for_scenario(const Scenario& scenario, const TrialConfig& config);

    std::size_t size() const noexcept { return allocator_.arms(); }
    bool multivariate() const noexcept { return !covariances_.empty(); }
    int patients() const noexcept { return static_cast<int>(allocations_.size()); }
    int total() const noexcept { return allocator_.total(); }
    bool complete() const noexcept { return patients() >= total(); }
    bool in_burn_in() const noexcept { return allocator_.in_burn_in(patients() + 1); }
    const Allocator& allocator() const noexcept { return allocator_; }
    std::uint64_t seed() const noexcept { return seed_; }

    // Arm for the next patient. Deterministic: repeated calls agree.
    std::size_t recommend() const;
    // Allocation scores for the next patient (see Allocator::scores).
    std::vector<double> scores() const;

    void record(std::size_t arm, double value);
    void record(std::size_t arm, const Eigen::VectorXd& value);

    const std::vector<ArmState>& arms() const noexcept { return arms_; }
    const std::vector<MvArmState>& mv_arms() const noexcept { return mv_arms_; }
    const std::vector<std::uint32_t>& allocations() const noexcept { return allocations_; }
    const std::vector<Eigen::MatrixXd>& covariances() const noexcept { return covariances_; }

    // Selection and, when requested, the superiority statistic.
    TrialOutcome finish(bool compute_statistic, std::uint64_t mv_draws) const;

private:
    Allocator allocator_;
    std::uint64_t seed_;
    std::vector<ArmState> arms_;
    std::vector<MvArmState> mv_arms_;
    std::vector<Eigen::MatrixXd> covariances_;
    std::vector<Eigen::VectorXd> inv_sd_;
    std::vector<std::uint32_t> allocations_;
};

// Runs one trial to completion. Deterministic in (scenario, config).
TrialOutcome simulate_trial(const Scenario& scenario, const TrialConfig& config);

// Compact per-replica record kept by replicate().
struct ReplicaSummary {
    double best_share = 0.0;  // fraction of patients on the true best arm
    double statistic = 0.0;
    std::uint32_t best = 0;
    std::uint32_t second = 0;
};

struct OperatingCharacteristics {
    int replicas = 0;
    double pb = 0.0;     // % of patients on the true best arm
    double pb_se = 0.0;  // standard error of pb over replicas
    double cs_best = 0.0;       // % replicas with the best arm identified
    double cs_best_two = 0.0;   // % replicas with both best arms identified
    std::optional<double> power_conditional;  // undefined without correct identifications
    double power_two_components = 0.0;
    double rejection_rate = 0.0;
    double eta = 0.5;
};

// Replica m runs with seed derive_seed(config.seed, m).
std::vector<ReplicaSummary> run_replicas(const Scenario& scenario, const TrialConfig& config, int replicas,
                                         int threads = 0);

OperatingCharacteristics summarise(std::span<const ReplicaSummary> runs, std::pair<std::size_t, std::size_t> truth,
                                   double eta);

OperatingCharacteristics replicate(const Scenario& scenario, const TrialConfig& config, int replicas, double eta,
                                   int threads = 0);

}  // namespace wetrial
