#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wetrial/info_gain.hpp"
#include "wetrial/rng.hpp"
#include "wetrial/stat_math.hpp"

namespace wetrial {

struct FixedRandomisation {};
struct CurrentBelief {};
enum class TsMode { argmax, sample };
struct ThompsonSampling {
    int draws = 1000;
    TsMode mode = TsMode::argmax;
};
struct SymmetricGittins {
    double d = 0.99;
};
struct TargetedGittins {
    double d = 0.99;
};
struct WeSymmetric {
    double p = 1.0;
    double kappa = 0.55;
};
struct WeAsymmetric {
    double a = 1.0;
    double b = 1.0;
    double kappa = 1.0;
};
struct WeMultivariate {
    double kappa = 0.5;
};

using PolicyKind = std::variant<FixedRandomisation, CurrentBelief, ThompsonSampling, SymmetricGittins, TargetedGittins,
                                WeSymmetric, WeAsymmetric, WeMultivariate>;

struct PolicySpec {
    PolicyKind kind = FixedRandomisation{};
    int burn_in = 1;
    bool allow_small_kappa = false;
};

// Short label such as "FR", "WE(1,0.55)" or "TS".
std::string policy_label(const PolicySpec& spec);

// Standardised Gittins index for one discount factor. Lookup is linear in 1/n
// between tabulated sample sizes and constant outside the table.
class GittinsTable {
public:
    GittinsTable(double d, std::vector<std::uint32_t> n, std::vector<double> g);

    // Text format: a "d=<value>" header line, then whitespace-separated "n g"
    // pairs. Lines starting with '#' are ignored.
    static GittinsTable parse(std::istream& in, const std::string& origin = "<stream>");
    static GittinsTable load(const std::filesystem::path& path);
    static GittinsTable zero(double d);

    double d() const noexcept { return d_; }
    double operator()(std::uint32_t n) const;

private:
    double d_;
    std::vector<std::uint32_t> n_;
    std::vector<double> g_;
};

class MissingGittinsTable : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Estimated P(arm j is closest to its target) from joint posterior draws.
// Throws std::invalid_argument for draws < 100.
std::vector<double> ts_best_probabilities(std::span<const ArmState> arms, int draws, Stream& rng);

// Normalised p_j^c; arms with p_j = 0 keep weight 0.
std::vector<double> ts_adjust(std::span<const double> best_prob, double c);

// Index among `scores` of the smallest (minimise) or largest value, exact ties
// split uniformly with rng. The rng is only consumed when a tie occurs.
std::size_t pick_extreme(std::span<const double> scores, bool minimise, Stream& rng);

// Stateless allocation rule bound to one trial's shape. Caches n^kappa for
// n = 0..N and, for vector endpoints, the Cholesky factor of every arm's
// covariance.
class Allocator {
public:
    Allocator(PolicySpec spec, std::size_t arms, int total, std::shared_ptr<const GittinsTable> gittins = nullptr,
              const std::vector<Eigen::MatrixXd>& covariances = {});

    const PolicySpec& spec() const noexcept { return spec_; }
    std::size_t arms() const noexcept { return arms_; }
    int total() const noexcept { return total_; }
    bool in_burn_in(int t) const noexcept;
    int burn_in_patients() const noexcept;

    // Arm (0-based) for patient t (1-based).
    std::size_t next(std::span<const ArmState> arms, int t, Stream& rng) const;
    std::size_t next(std::span<const MvArmState> arms, int t, Stream& rng) const;

    // Per-arm score driving the adaptive phase: the information gain for WE
    // designs, the index quantity for SGI/TGI, |mean - target| for CB and the
    // adjusted best probabilities for TS. FR has no score (all zeros).
    std::vector<double> scores(std::span<const ArmState> arms, int t, Stream& rng) const;
    std::vector<double> scores(std::span<const MvArmState> arms, int t) const;
    bool maximises() const noexcept;

private:
    double gittins(std::uint32_t n) const;

    PolicySpec spec_;
    std::size_t arms_;
    int total_;
    std::shared_ptr<const GittinsTable> gittins_;
    std::vector<double> n_pow_;
    std::vector<MultivariateGain> mv_gain_;
    std::vector<Eigen::VectorXd> mv_scale_;  // 1 / sqrt(diag cov)
};

// One-shot form of Allocator::next for a univariate state.
std::size_t next_arm(const PolicySpec& spec, std::span<const ArmState> arms, int t, int total, Stream& rng,
                     std::shared_ptr<const GittinsTable> gittins = nullptr);

}  // namespace wetrial
