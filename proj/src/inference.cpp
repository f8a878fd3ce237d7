#include "wetrial/inference.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wetrial/parallel.hpp"

namespace wetrial {

double mv_superiority_prob(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& post_cov_a,
                           const Eigen::VectorXd& target_a, const Eigen::VectorXd& inv_sd_a,
                           const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& post_cov_b,
                           const Eigen::VectorXd& target_b, const Eigen::VectorXd& inv_sd_b, std::uint64_t draws,
                           Stream& rng) {
    const auto q = mean_a.size();
    if (q < 1 || mean_b.size() != q || post_cov_a.rows() != q || post_cov_b.rows() != q)
        throw std::invalid_argument("superiority statistic: dimension mismatch");
    if (draws == 0) throw std::invalid_argument("superiority statistic: draws must be positive");
    const auto r = q - 1;

    // A_0 | A_rest ~ N(mean_a0 + beta' (A_rest - mean_rest), cond_var).
    Eigen::MatrixXd l_rest;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(r);
    double cond_var = post_cov_a(0, 0);
    if (r > 0) {
        const Eigen::MatrixXd c11 = post_cov_a.bottomRightCorner(r, r);
        const Eigen::VectorXd c10 = post_cov_a.col(0).tail(r);
        Eigen::LLT<Eigen::MatrixXd> llt(c11);
        if (llt.info() != Eigen::Success) throw std::invalid_argument("posterior covariance is not positive definite");
        beta = llt.solve(c10);
        cond_var -= c10.dot(beta);
        l_rest = llt.matrixL();
    }
    if (!(cond_var > 0.0)) throw std::invalid_argument("posterior covariance is not positive definite");
    Eigen::LLT<Eigen::MatrixXd> llt_b(post_cov_b);
    if (llt_b.info() != Eigen::Success) throw std::invalid_argument("posterior covariance is not positive definite");
    const Eigen::MatrixXd l_b = llt_b.matrixL();
    // Regression of A_0 on the rest, expressed in the standard normals z.
    const Eigen::VectorXd beta_z = r > 0 ? Eigen::VectorXd(l_rest.transpose() * beta) : Eigen::VectorXd();
    const double cond_sd = std::sqrt(cond_var);
    const double w0 = inv_sd_a[0];

    std::vector<double> z(static_cast<std::size_t>(r)), w(static_cast<std::size_t>(q));
    double total = 0.0;
    for (std::uint64_t i = 0; i < draws; ++i) {
        for (auto& v : z) v = rng.normal();
        for (auto& v : w) v = rng.normal();
        double budget = 0.0;
        for (Eigen::Index l = 0; l < q; ++l) {
            double x = mean_b[l];
            for (Eigen::Index m = 0; m <= l; ++m) x += l_b(l, m) * w[m];
            budget += std::abs(x - target_b[l]) * inv_sd_b[l];
        }
        double cond_mean = mean_a[0];
        for (Eigen::Index l = 0; l < r; ++l) {
            double x = mean_a[l + 1];
            for (Eigen::Index m = 0; m <= l; ++m) x += l_rest(l, m) * z[m];
            budget -= std::abs(x - target_a[l + 1]) * inv_sd_a[l + 1];
            cond_mean += beta_z[l] * z[l];
        }
        if (budget <= 0.0) continue;
        const double half = budget / w0;
        total += normal_cdf((target_a[0] + half - cond_mean) / cond_sd) -
                 normal_cdf((target_a[0] - half - cond_mean) / cond_sd);
    }
    return std::clamp(total / static_cast<double>(draws), 0.0, 1.0);
}

double superiority_statistic(const TrialOutcome& outcome, const std::vector<Eigen::MatrixXd>& covariances,
                             std::uint64_t seed, std::uint64_t draws) {
    if (outcome.mv_arms.empty()) {
        const auto& a = outcome.arms.at(outcome.best);
        const auto& b = outcome.arms.at(outcome.second);
        return folded_superiority_prob(posterior(a), posterior(b), a.target, Quadrature{});
    }
    if (covariances.size() != outcome.mv_arms.size())
        throw std::invalid_argument("vector-endpoint statistic needs one covariance per arm");
    const auto& a = outcome.mv_arms.at(outcome.best);
    const auto& b = outcome.mv_arms.at(outcome.second);
    const auto& ca = covariances[outcome.best];
    const auto& cb = covariances[outcome.second];
    Stream rng(seed, StreamPurpose::statistic, 0);
    return mv_superiority_prob(a.mean, ca / a.count, a.target, ca.diagonal().cwiseSqrt().cwiseInverse(), b.mean,
                               cb / b.count, b.target, cb.diagonal().cwiseSqrt().cwiseInverse(), draws, rng);
}

// ---------------------------------------------------------------------------
// Cut-offs
// ---------------------------------------------------------------------------

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
}

std::string describe(const Scenario& s, std::size_t index) {
    if (!s.name.empty()) return s.name;
    return "null#" + std::to_string(index);
}

}  // namespace

double upper_quantile(std::vector<double> samples, double alpha) {
    check_alpha(alpha);
    if (samples.empty()) throw std::invalid_argument("no samples");
    const auto m = samples.size();
    auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(m) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, m);
    std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(k - 1), samples.end());
    return samples[k - 1];
}

double exceedance_rate(std::span<const double> samples, double eta) {
    if (samples.empty()) return 0.0;
    const auto n = std::count_if(samples.begin(), samples.end(), [eta](double v) { return v > eta; });
    return static_cast<double>(n) / static_cast<double>(samples.size());
}

std::vector<std::string> NullScenarioSet::validate() const {
    std::vector<std::string> warnings;
    if (!weights.empty() && weights.size() != scenarios.size())
        throw std::invalid_argument("null set: one weight per scenario is required");
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const auto& sc = scenarios[s];
        sc.validate();
        if (sc.multivariate()) {
            double sd_max = 0.0;
            for (const auto& a : sc.mv_arms) sd_max = std::max(sd_max, a.cov.diagonal().cwiseSqrt().maxCoeff());
            const Eigen::VectorXd off0 = (sc.mv_arms[0].mean - sc.mv_arms[0].target).cwiseAbs();
            bool equal = true, far = false;
            for (const auto& a : sc.mv_arms) {
                const Eigen::VectorXd off = (a.mean - a.target).cwiseAbs();
                equal = equal && (off - off0).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, off0.maxCoeff());
                far = far || off.maxCoeff() > 10.0 * sd_max;
            }
            if (!equal) warnings.push_back(describe(sc, s) + ": arms are not equidistant from the target");
            if (far) warnings.push_back(describe(sc, s) + ": mean lies more than 10 sd from the target");
        } else {
            double sd_max = 0.0;
            for (const auto& a : sc.arms) sd_max = std::max(sd_max, a.sigma);
            const double off0 = std::abs(sc.arms[0].mean - sc.arms[0].target);
            bool equal = true, far = false;
            for (const auto& a : sc.arms) {
                const double off = std::abs(a.mean - a.target);
                equal = equal && std::abs(off - off0) <= 1e-12 * std::max(1.0, off0);
                far = far || off > 10.0 * sd_max;
            }
            if (!equal) warnings.push_back(describe(sc, s) + ": arms are not equidistant from the target");
            if (far) warnings.push_back(describe(sc, s) + ": mean lies more than 10 sd from the target");
        }
    }
    return warnings;
}

double calibrate_individual(std::span<const double> statistics, double alpha) {
    return upper_quantile(std::vector<double>(statistics.begin(), statistics.end()), alpha);
}

double calibrate_individual(const Scenario& null_scenario, const TrialConfig& config, double alpha, int replicas,
                            int threads) {
    check_alpha(alpha);
    const auto runs = run_replicas(null_scenario, config, replicas, threads);
    std::vector<double> pi(runs.size());
    for (std::size_t m = 0; m < runs.size(); ++m) pi[m] = runs[m].statistic;
    return upper_quantile(std::move(pi), alpha);
}

CutoffCalibration calibrate_from_samples(ControlRule rule, const std::vector<std::vector<double>>& statistics,
                                         std::vector<double> weights, double alpha) {
    check_alpha(alpha);
    const std::size_t s_count = statistics.size();
    if (s_count == 0) throw std::invalid_argument("null scenario set is empty");
    if (weights.empty()) weights.assign(s_count, 1.0 / static_cast<double>(s_count));
    if (weights.size() != s_count) throw std::invalid_argument("one weight per null scenario is required");
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(wsum > 0.0) || std::any_of(weights.begin(), weights.end(), [](double w) { return !(w >= 0.0); }))
        throw std::invalid_argument("weights must be nonnegative with a positive sum");
    for (auto& w : weights) w /= wsum;

    CutoffCalibration cal;
    cal.rule = rule;
    cal.alpha = alpha;
    cal.weights = weights;
    std::size_t m_max = 0;
    for (const auto& row : statistics) {
        if (row.empty()) throw std::invalid_argument("null scenario without statistics");
        cal.individual.push_back(calibrate_individual(row, alpha));
        m_max = std::max(m_max, row.size());
    }
    cal.replicas = static_cast<int>(m_max);

    // Each row sorted once; the exceedance count at eta is a binary search.
    std::vector<std::vector<double>> sorted = statistics;
    for (auto& row : sorted) std::sort(row.begin(), row.end());
    auto rate = [&](double eta) {
        double r = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
            const auto above = sorted[s].end() - std::upper_bound(sorted[s].begin(), sorted[s].end(), eta);
            r += weights[s] * static_cast<double>(above) / static_cast<double>(sorted[s].size());
        }
        return r;
    };

    if (rule == ControlRule::strong) {
        cal.eta = *std::max_element(cal.individual.begin(), cal.individual.end());
    } else {
        // Candidate cut-offs are the pooled sample values below 1; rate() is
        // nonincreasing along them, so bisect for the first one at or below
        // alpha. Landing on a sample value keeps the rule conservative.
        std::vector<double> pool;
        for (const auto& row : sorted)
            for (double v : row)
                if (v < 1.0) pool.push_back(v);
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
        const double lowest = pool.empty() ? rate(std::nextafter(1.0, 0.0)) : rate(pool.back());
        if (pool.empty() || lowest > alpha) {
            std::ostringstream msg;
            msg << "average-rule calibration infeasible: attainable type-I rates lie in [" << lowest
                << ", 1], requested alpha=" << alpha;
            throw InfeasibleCalibration(msg.str(), lowest, 1.0);
        }
        std::size_t lo = 0, hi = pool.size() - 1;
        if (rate(pool[lo]) <= alpha) {
            hi = lo;
        } else {
            while (hi - lo > 1) {
                const std::size_t mid = lo + (hi - lo) / 2;
                (rate(pool[mid]) <= alpha ? hi : lo) = mid;
            }
        }
        cal.eta = pool[hi];
    }
    for (std::size_t s = 0; s < s_count; ++s) {
        cal.realised.push_back(exceedance_rate(statistics[s], cal.eta));
        cal.realised_mean += weights[s] * cal.realised.back();
    }
    return cal;
}

std::vector<std::vector<double>> null_statistics(const NullScenarioSet& nulls, const TrialConfig& config,
                                                 int replicas, int threads) {
    if (nulls.scenarios.empty()) throw std::invalid_argument("null scenario set is empty");
    if (replicas < 1) throw std::invalid_argument("at least one replica is required");
    const std::size_t s_count = nulls.scenarios.size();
    const auto m_count = static_cast<std::size_t>(replicas);
    for (const auto& s : nulls.scenarios) s.validate();
    std::vector<std::vector<double>> pi(s_count, std::vector<double>(m_count));
    TrialConfig base = config;
    base.compute_statistic = true;
    // Flattened over (scenario, replica) so that small null sets still spread
    // across all workers.
    parallel_for(s_count * m_count, threads, [&](std::size_t i) {
        const std::size_t s = i / m_count, m = i % m_count;
        TrialConfig c = base;
        c.seed = derive_seed(derive_seed(config.seed, s), m);
        pi[s][m] = simulate_trial(nulls.scenarios[s], c).statistic;
    });
    return pi;
}

CutoffCalibration calibrate(ControlRule rule, const NullScenarioSet& nulls, const TrialConfig& config, double alpha,
                            int replicas, int threads) {
    check_alpha(alpha);
    const auto pi = null_statistics(nulls, config, replicas, threads);
    auto cal = calibrate_from_samples(rule, pi, nulls.weights, alpha);
    cal.seed = config.seed;
    cal.design = policy_label(config.policy);
    for (std::size_t s = 0; s < nulls.scenarios.size(); ++s)
        cal.scenario_names.push_back(describe(nulls.scenarios[s], s));
    return cal;
}

double type_i_rate(const Scenario& null_scenario, const TrialConfig& config, double eta, int replicas, int threads) {
    const auto runs = run_replicas(null_scenario, config, replicas, threads);
    std::size_t above = 0;
    for (const auto& r : runs) above += r.statistic > eta;
    return static_cast<double>(above) / static_cast<double>(runs.size());
}

// ---------------------------------------------------------------------------
// Null grids
// ---------------------------------------------------------------------------

std::vector<double> quadratic_offsets(double c_max, int points) {
    if (!(c_max > 0.0)) throw std::invalid_argument("c_max must be positive");
    if (points < 2) throw std::invalid_argument("a quadratic grid needs at least two points");
    std::vector<double> c(static_cast<std::size_t>(points));
    const double root = std::sqrt(c_max);
    for (int i = 0; i < points; ++i) {
        const double x = i * root / (points - 1);
        c[static_cast<std::size_t>(i)] = x * x;
    }
    c.back() = c_max;
    return c;
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

NullScenarioSet univariate_null_grid(std::span<const double> offsets, std::span<const double> sigma, double target,
                                     VarianceMode variance) {
    return sigma_cross_null_grid(offsets, {std::vector<double>(sigma.begin(), sigma.end())}, target, variance);
}

NullScenarioSet sigma_cross_null_grid(std::span<const double> offsets, const std::vector<std::vector<double>>& sigmas,
                                      double target, VarianceMode variance) {
    NullScenarioSet set;
    for (const auto& pattern : sigmas) {
        for (double c : offsets) {
            Scenario s;
            s.variance = variance;
            s.name = "c=" + num(c);
            if (sigmas.size() > 1) {
                s.name += " sigma=(";
                for (std::size_t j = 0; j < pattern.size(); ++j) s.name += (j ? "," : "") + num(pattern[j]);
                s.name += ")";
            }
            for (double sd : pattern) s.arms.push_back({target + c, sd, target});
            set.scenarios.push_back(std::move(s));
        }
    }
    return set;
}

NullScenarioSet bivariate_null_grid(std::span<const double> c1, std::span<const double> c2, std::size_t arms,
                                    const Eigen::MatrixXd& cov, const Eigen::VectorXd& target) {
    if (target.size() != 2 || cov.rows() != 2) throw std::invalid_argument("bivariate grid needs q = 2");
    NullScenarioSet set;
    for (double a : c1) {
        for (double b : c2) {
            Scenario s;
            s.name = "c=(" + num(a) + "," + num(b) + ")";
            const Eigen::VectorXd mean = target + Eigen::Vector2d(a, b);
            for (std::size_t j = 0; j < arms; ++j) s.mv_arms.push_back({mean, cov, target});
            set.scenarios.push_back(std::move(s));
        }
    }
    return set;
}

NullScenarioSet default_bivariate_nulls(std::size_t arms, const Eigen::MatrixXd& cov, const Eigen::VectorXd& target) {
    // c1 spans 0..10 sd of the first endpoint; c2 spans 1/6..1 of 9.375 sd of
    // the second (75 for sd 8) and never sits on the target, where every
    // adaptive rule degenerates to CB-like lock-in.
    const double sd1 = std::sqrt(cov(0, 0)), sd2 = std::sqrt(cov(1, 1));
    std::vector<double> c1(6), c2(6);
    for (std::size_t i = 0; i < 6; ++i) {
        c1[i] = 10.0 * sd1 * static_cast<double>(i) / 5.0;
        c2[i] = 9.375 * sd2 * static_cast<double>(i + 1) / 6.0;
    }
    return bivariate_null_grid(c1, c2, arms, cov, target);
}

}  // namespace wetrial
