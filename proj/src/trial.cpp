#include "wetrial/trial.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wetrial/inference.hpp"
#include "wetrial/parallel.hpp"

namespace wetrial {

void Scenario::validate() const {
    const std::string where = name.empty() ? "scenario" : "scenario '" + name + "'";
    if (!arms.empty() && !mv_arms.empty()) throw std::invalid_argument(where + ": mixes scalar and vector arms");
    if (size() < 2) throw std::invalid_argument(where + ": needs at least two arms");
    for (const auto& a : arms) {
        if (!std::isfinite(a.mean) || !std::isfinite(a.target))
            throw std::invalid_argument(where + ": arm means and targets must be finite");
        if (!(a.sigma > 0.0) || !std::isfinite(a.sigma))
            throw std::invalid_argument(where + ": arm sigma must be positive");
    }
    if (multivariate()) {
        if (variance != VarianceMode::known)
            throw std::invalid_argument(where + ": vector endpoints support known covariance only");
        const auto q = mv_arms.front().mean.size();
        for (const auto& a : mv_arms) {
            if (a.mean.size() != q || a.target.size() != q || a.cov.rows() != q || a.cov.cols() != q)
                throw std::invalid_argument(where + ": inconsistent endpoint dimensions");
            Eigen::LLT<Eigen::MatrixXd> llt(a.cov);
            if (llt.info() != Eigen::Success || !a.cov.isApprox(a.cov.transpose()))
                throw std::invalid_argument(where + ": covariance must be symmetric positive definite");
        }
    }
}

double standardised_distance(const Eigen::VectorXd& mean, const Eigen::VectorXd& target,
                             const Eigen::VectorXd& inv_sd) {
    return (mean - target).cwiseAbs().cwiseProduct(inv_sd).sum();
}

std::pair<std::size_t, std::size_t> rank_two(std::span<const double> distance, Stream& rng) {
    const std::size_t k = distance.size();
    if (k < 2) throw std::invalid_argument("selection needs at least two arms");
    const std::size_t best = pick_extreme(distance, true, rng);
    std::vector<double> rest(distance.begin(), distance.end());
    rest[best] = std::numeric_limits<double>::infinity();
    return {best, pick_extreme(rest, true, rng)};
}

std::pair<std::size_t, std::size_t> select_best(std::span<const ArmState> arms, Stream& rng) {
    std::vector<double> d(arms.size());
    for (std::size_t j = 0; j < arms.size(); ++j) {
        if (arms[j].count == 0) throw InsufficientData("arm " + std::to_string(j + 1) + " has no observations");
        d[j] = std::abs(arms[j].mean - arms[j].target);
    }
    return rank_two(d, rng);
}

std::pair<std::size_t, std::size_t> select_best(std::span<const MvArmState> arms,
                                                std::span<const Eigen::VectorXd> inv_sd, Stream& rng) {
    std::vector<double> d(arms.size());
    for (std::size_t j = 0; j < arms.size(); ++j) {
        if (arms[j].count == 0) throw InsufficientData("arm " + std::to_string(j + 1) + " has no observations");
        d[j] = standardised_distance(arms[j].mean, arms[j].target, inv_sd[j]);
    }
    return rank_two(d, rng);
}

std::pair<std::size_t, std::size_t> true_best(const Scenario& scenario, std::uint64_t seed) {
    std::vector<double> d(scenario.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (scenario.multivariate()) {
            const auto& a = scenario.mv_arms[j];
            d[j] = standardised_distance(a.mean, a.target, a.cov.diagonal().cwiseSqrt().cwiseInverse());
        } else {
            d[j] = std::abs(scenario.arms[j].mean - scenario.arms[j].target);
        }
    }
    Stream rng(seed, StreamPurpose::truth, 0);
    return rank_two(d, rng);
}

// ---------------------------------------------------------------------------
// TrialState
// ---------------------------------------------------------------------------

TrialState::TrialState(std::vector<double> targets, std::vector<std::optional<double>> sigma,
                       const TrialConfig& config)
    : allocator_(config.policy, targets.size(), config.total, config.gittins), seed_(config.seed) {
    if (sigma.size() != targets.size()) throw std::invalid_argument("one sigma entry per arm is required");
    const bool unknown = std::any_of(sigma.begin(), sigma.end(), [](const auto& s) { return !s.has_value(); });
    if (unknown && config.policy.burn_in < 2)
        throw std::invalid_argument("unknown variances need a burn-in of at least 2");
    arms_.resize(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) {
        if (sigma[j] && !(*sigma[j] > 0.0)) throw std::invalid_argument("known sigma must be positive");
        arms_[j].target = targets[j];
        arms_[j].sigma_known = sigma[j];
    }
    allocations_.reserve(static_cast<std::size_t>(config.total));
}

TrialState::TrialState(std::vector<Eigen::VectorXd> targets, std::vector<Eigen::MatrixXd> covariances,
                       const TrialConfig& config)
    : allocator_(config.policy, targets.size(), config.total, config.gittins, covariances),
      seed_(config.seed),
      covariances_(std::move(covariances)) {
    if (covariances_.size() != targets.size()) throw std::invalid_argument("one covariance per arm is required");
    mv_arms_.resize(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) {
        mv_arms_[j].target = targets[j];
        mv_arms_[j].mean = Eigen::VectorXd::Zero(targets[j].size());
        inv_sd_.push_back(covariances_[j].diagonal().cwiseSqrt().cwiseInverse());
    }
    allocations_.reserve(static_cast<std::size_t>(config.total));
}

TrialState TrialState::for_scenario(const Scenario& scenario, const TrialConfig& config) {
    if (scenario.multivariate()) {
        std::vector<Eigen::VectorXd> targets;
        std::vector<Eigen::MatrixXd> covs;
        for (const auto& a : scenario.mv_arms) {
            targets.push_back(a.target);
            covs.push_back(a.cov);
        }
        return TrialState(std::move(targets), std::move(covs), config);
    }
    std::vector<double> targets;
    std::vector<std::optional<double>> sigma;
    for (const auto& a : scenario.arms) {
        targets.push_back(a.target);
        sigma.push_back(scenario.variance == VarianceMode::known ? std::optional<double>(a.sigma) : std::nullopt);
    }
    return TrialState(std::move(targets), std::move(sigma), config);
}

std::size_t TrialState::recommend() const {
    if (complete()) throw std::logic_error("trial already has all N patients");
    const int t = patients() + 1;
    Stream rng(seed_, StreamPurpose::allocation, static_cast<std::uint32_t>(t));
    return multivariate() ? allocator_.next(std::span<const MvArmState>(mv_arms_), t, rng)
                          : allocator_.next(std::span<const ArmState>(arms_), t, rng);
}

std::vector<double> TrialState::scores() const {
    const int t = std::min(patients() + 1, total());
    if (multivariate()) {
        for (const auto& a : mv_arms_)
            if (a.count == 0) return std::vector<double>(size(), std::numeric_limits<double>::quiet_NaN());
        return allocator_.scores(std::span<const MvArmState>(mv_arms_), t);
    }
    for (const auto& a : arms_)
        if (!a.has_posterior()) return std::vector<double>(size(), std::numeric_limits<double>::quiet_NaN());
    Stream rng(seed_, StreamPurpose::allocation, static_cast<std::uint32_t>(t));
    return allocator_.scores(std::span<const ArmState>(arms_), t, rng);
}

void TrialState::record(std::size_t arm, double value) {
    if (multivariate()) throw std::invalid_argument("vector-endpoint trial needs a vector outcome");
    if (arm >= size()) throw std::out_of_range("unknown arm " + std::to_string(arm + 1));
    if (complete()) throw std::logic_error("trial already has all N patients");
    arms_[arm] = update_arm(arms_[arm], value);
    allocations_.push_back(static_cast<std::uint32_t>(arm));
}

void TrialState::record(std::size_t arm, const Eigen::VectorXd& value) {
    if (!multivariate()) throw std::invalid_argument("scalar-endpoint trial needs a scalar outcome");
    if (arm >= size()) throw std::out_of_range("unknown arm " + std::to_string(arm + 1));
    if (complete()) throw std::logic_error("trial already has all N patients");
    if (value.size() != mv_arms_[arm].target.size()) throw std::invalid_argument("outcome dimension mismatch");
    mv_arms_[arm] = update_arm(mv_arms_[arm], value);
    allocations_.push_back(static_cast<std::uint32_t>(arm));
}

TrialOutcome TrialState::finish(bool compute_statistic, std::uint64_t mv_draws) const {
    TrialOutcome out;
    out.allocations = allocations_;
    out.arms = arms_;
    out.mv_arms = mv_arms_;
    out.counts.assign(size(), 0);
    for (auto a : allocations_) ++out.counts[a];
    Stream sel(seed_, StreamPurpose::selection, 0);
    std::tie(out.best, out.second) = multivariate() ? select_best(std::span<const MvArmState>(mv_arms_), inv_sd_, sel)
                                                    : select_best(std::span<const ArmState>(arms_), sel);
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    if (compute_statistic) {
        if (multivariate()) {
            Stream rng(seed_, StreamPurpose::statistic, 0);
            const auto& a = mv_arms_[out.best];
            const auto& b = mv_arms_[out.second];
            out.statistic = mv_superiority_prob(a.mean, covariances_[out.best] / a.count, a.target, inv_sd_[out.best],
                                                b.mean, covariances_[out.second] / b.count, b.target,
                                                inv_sd_[out.second], mv_draws, rng);
        } else {
            out.statistic = folded_superiority_prob(posterior(arms_[out.best]), posterior(arms_[out.second]),
                                                    arms_[out.best].target, Quadrature{});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

TrialOutcome simulate_trial(const Scenario& scenario, const TrialConfig& config) {
    scenario.validate();
    TrialState state = TrialState::for_scenario(scenario, config);
    std::vector<Eigen::MatrixXd> chol;
    if (scenario.multivariate())
        for (const auto& a : scenario.mv_arms) chol.push_back(Eigen::LLT<Eigen::MatrixXd>(a.cov).matrixL());
    Eigen::VectorXd z(scenario.dimension());
    std::vector<double> responses;
    std::vector<Eigen::VectorXd> mv_responses;
    for (int t = 1; t <= config.total; ++t) {
        const std::size_t arm = state.recommend();
        Stream rng(config.seed, StreamPurpose::response, static_cast<std::uint32_t>(t));
        if (scenario.multivariate()) {
            for (int l = 0; l < z.size(); ++l) z[l] = rng.normal();
            mv_responses.push_back(scenario.mv_arms[arm].mean + chol[arm] * z);
            state.record(arm, mv_responses.back());
        } else {
            const auto& a = scenario.arms[arm];
            responses.push_back(a.mean + a.sigma * rng.normal());
            state.record(arm, responses.back());
        }
    }
    auto out = state.finish(config.compute_statistic, config.mv_draws);
    out.responses = std::move(responses);
    out.mv_responses = std::move(mv_responses);
    return out;
}

std::vector<ReplicaSummary> run_replicas(const Scenario& scenario, const TrialConfig& config, int replicas,
                                         int threads) {
    if (replicas < 1) throw std::invalid_argument("at least one replica is required");
    scenario.validate();
    const auto truth = true_best(scenario, config.seed);
    std::vector<ReplicaSummary> out(static_cast<std::size_t>(replicas));
    parallel_for(out.size(), threads, [&](std::size_t m) {
        TrialConfig c = config;
        c.seed = derive_seed(config.seed, m);
        const auto o = simulate_trial(scenario, c);
        out[m].best_share = static_cast<double>(o.counts[truth.first]) / config.total;
        out[m].statistic = o.statistic;
        out[m].best = static_cast<std::uint32_t>(o.best);
        out[m].second = static_cast<std::uint32_t>(o.second);
    });
    return out;
}

OperatingCharacteristics summarise(std::span<const ReplicaSummary> runs, std::pair<std::size_t, std::size_t> truth,
                                   double eta) {
    if (runs.empty()) throw std::invalid_argument("no replicas to summarise");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    OperatingCharacteristics oc;
    oc.replicas = static_cast<int>(runs.size());
    oc.eta = eta;
    double sum = 0.0, sumsq = 0.0;
    std::size_t first = 0, both = 0, reject = 0, reject_both = 0;
    for (const auto& r : runs) {
        sum += r.best_share;
        sumsq += r.best_share * r.best_share;
        const bool hit1 = r.best == truth.first;
        const bool hit2 = hit1 && r.second == truth.second;
        const bool rej = r.statistic > eta;
        first += hit1;
        both += hit2;
        reject += rej;
        reject_both += rej && hit2;
    }
    const double m = static_cast<double>(runs.size());
    const double mean = sum / m;
    const double var = runs.size() > 1 ? std::max(0.0, (sumsq - m * mean * mean) / (m - 1.0)) : 0.0;
    oc.pb = 100.0 * mean;
    oc.pb_se = 100.0 * std::sqrt(var / m);
    oc.cs_best = 100.0 * first / m;
    oc.cs_best_two = 100.0 * both / m;
    oc.rejection_rate = reject / m;
    oc.power_two_components = reject_both / m;
    if (both > 0) oc.power_conditional = static_cast<double>(reject_both) / both;
    return oc;
}

OperatingCharacteristics replicate(const Scenario& scenario, const TrialConfig& config, int replicas, double eta,
                                   int threads) {
    const auto runs = run_replicas(scenario, config, replicas, threads);
    return summarise(runs, true_best(scenario, config.seed), eta);
}

}  // namespace wetrial
