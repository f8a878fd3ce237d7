#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

namespace wetrial {

// Raised when a posterior is requested for an arm without enough data to
// estimate its variance (unknown-variance mode needs two observations).
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Standard normal special functions.
//
// normal_cdf uses erfc, accurate to a few ulp on |z| <= 8 and well beyond.
// log_normal_cdf and the Mills-ratio helpers switch to a continued fraction
// for z < -8 so they stay finite for arbitrarily negative z.
// ---------------------------------------------------------------------------
double normal_pdf(double z) noexcept;
double normal_cdf(double z) noexcept;
double log_normal_cdf(double z) noexcept;
// phi(z) / Phi(z), the inverse Mills ratio of the lower tail.
double inverse_mills_lower(double z) noexcept;

struct GaussianPosterior {
    double mean = 0.0;
    double variance = 1.0;

    double sd() const;
};

// Sufficient statistics of one arm. m2 is the running sum of squared
// deviations, so the unbiased variance is m2 / (count - 1).
struct ArmState {
    std::uint32_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    std::optional<double> sigma_known;
    double target = 0.0;

    // Plug-in standard deviation: sigma_known, or the unbiased sample sd.
    double sigma() const;
    bool has_posterior() const noexcept;
};

// Single-pass Welford update. Throws std::invalid_argument on non-finite x.
ArmState update_arm(ArmState state, double x);

// Vector-endpoint arm with known covariance. Only the running mean is kept.
struct MvArmState {
    std::uint32_t count = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd target;
};

MvArmState update_arm(MvArmState state, const Eigen::VectorXd& x);

// N(mean, sigma^2 / n) under the flat prior. Throws InsufficientData when
// count == 0, or count < 2 with unknown variance.
GaussianPosterior posterior(const ArmState& state);

enum class TruncationSide { left_of, right_of };

struct TruncatedMoments {
    double mean;
    double variance;
};

// Moments of N(mu, sigma^2) restricted to x <= bound (left_of) or x > bound
// (right_of).
TruncatedMoments truncated_normal_moments(double mu, double sigma, TruncationSide side, double bound);

struct Quadrature {
    double abs_tol = 1e-8;
};
struct MonteCarlo {
    std::uint64_t draws = 1'000'000;
    std::uint64_t seed = 1;
};
using SuperiorityMethod = std::variant<Quadrature, MonteCarlo>;

// P(|A - target| < |B - target|) for independent A ~ a, B ~ b.
double folded_superiority_prob(const GaussianPosterior& a, const GaussianPosterior& b, double target,
                               const SuperiorityMethod& method = Quadrature{});

}  // namespace wetrial
