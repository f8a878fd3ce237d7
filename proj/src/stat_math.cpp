#include "wetrial/stat_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "wetrial/quadrature.hpp"
#include "wetrial/rng.hpp"

namespace wetrial {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kTailSwitch = 8.0;

// Backward evaluation of the Laplace continued fraction for the Mills ratio,
//   R(x) = 1 / (x + 1/(x + 2/(x + 3/(x + ...)))),
// returning c1 = 1/(x + c2) and c2 = 2/(x + c3). Then 1/R(x) = x + c1.
struct MillsTail {
    double c1, c2;
};

MillsTail mills_tail(double x) {
    double c = 0.0;
    double c2 = 0.0;
    for (int k = 120; k >= 1; --k) {
        if (k == 1) c2 = c;
        c = k / (x + c);
    }
    return {c, c2};
}

}  // namespace

double normal_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z * kInvSqrt2); }

double log_normal_cdf(double z) noexcept {
    if (z > 0.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
    if (z >= -kTailSwitch) return std::log(normal_cdf(z));
    const auto t = mills_tail(-z);
    return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-z + t.c1);
}

double inverse_mills_lower(double z) noexcept {
    if (z >= -kTailSwitch) return normal_pdf(z) / normal_cdf(z);
    return -z + mills_tail(-z).c1;
}

double GaussianPosterior::sd() const { return std::sqrt(variance); }

double ArmState::sigma() const {
    if (sigma_known) return *sigma_known;
    if (count < 2) throw InsufficientData("unknown variance needs at least two observations");
    return std::sqrt(m2 / (count - 1));
}

bool ArmState::has_posterior() const noexcept { return sigma_known ? count >= 1 : count >= 2; }

ArmState update_arm(ArmState state, double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("observation must be finite");
    ++state.count;
    const double delta = x - state.mean;
    state.mean += delta / state.count;
    state.m2 += delta * (x - state.mean);
    return state;
}

MvArmState update_arm(MvArmState state, const Eigen::VectorXd& x) {
    if (!x.allFinite()) throw std::invalid_argument("observation must be finite");
    if (state.count == 0) state.mean = Eigen::VectorXd::Zero(x.size());
    if (state.mean.size() != x.size()) throw std::invalid_argument("observation dimension mismatch");
    ++state.count;
    state.mean += (x - state.mean) / state.count;
    return state;
}

GaussianPosterior posterior(const ArmState& state) {
    if (state.count == 0) throw InsufficientData("arm has no observations");
    const double s = state.sigma();
    GaussianPosterior p{state.mean, s * s / state.count};
    if (!(p.variance > 0.0) || !std::isfinite(p.variance) || !std::isfinite(p.mean))
        throw InsufficientData("degenerate posterior variance (constant observations?)");
    return p;
}

TruncatedMoments truncated_normal_moments(double mu, double sigma, TruncationSide side, double bound) {
    if (!(sigma > 0.0)) throw std::invalid_argument("truncated_normal_moments: sigma must be positive");
    if (side == TruncationSide::right_of) {
        // X > bound  <=>  -X < -bound
        auto m = truncated_normal_moments(-mu, sigma, TruncationSide::left_of, -bound);
        return {-m.mean, m.variance};
    }
    const double z = (bound - mu) / sigma;
    double lambda, factor;
    if (z >= -kTailSwitch) {
        lambda = normal_pdf(z) / normal_cdf(z);
        factor = 1.0 - z * lambda - lambda * lambda;
    } else {
        // With x = -z, lambda = x + c1 and 1 + x*lambda - lambda^2 reduces to
        // (c2 (x + c2) - 1) / (x + c2)^2, free of cancellation.
        const double x = -z;
        const auto t = mills_tail(x);
        lambda = x + t.c1;
        const double d = x + t.c2;
        factor = (t.c2 * d - 1.0) / (d * d);
    }
    return {mu - sigma * lambda, sigma * sigma * factor};
}

double folded_superiority_prob(const GaussianPosterior& a, const GaussianPosterior& b, double target,
                               const SuperiorityMethod& method) {
    if (!(a.variance > 0.0) || !(b.variance > 0.0)) throw std::invalid_argument("posterior variance must be positive");
    const double sa = a.sd(), sb = b.sd();
    const double da = a.mean - target;

    if (const auto* mc = std::get_if<MonteCarlo>(&method)) {
        Stream rng(mc->seed, StreamPurpose::statistic, 0);
        std::uint64_t wins = 0;
        for (std::uint64_t i = 0; i < mc->draws; ++i) {
            const double xa = da + sa * rng.normal();
            const double xb = b.mean - target + sb * rng.normal();
            wins += std::abs(xa) < std::abs(xb);
        }
        return static_cast<double>(wins) / static_cast<double>(mc->draws);
    }

    const double tol = std::get<Quadrature>(method).abs_tol;
    // Integrate over u = (B - mean_B) / sd_B; B's tail mass beyond 8.5 sd is < 2e-17.
    auto integrand = [&](double u) {
        const double r = std::abs(b.mean + sb * u - target);
        const double p = normal_cdf((r - da) / sa) - normal_cdf((-r - da) / sa);
        return normal_pdf(u) * p;
    };
    constexpr double span = 8.5;
    std::vector<double> breaks{-span};
    const double kink = (target - b.mean) / sb;
    // |B - target| crosses |mean_A - target| where A's cdf terms switch on.
    for (double u : {kink, kink - std::abs(da) / sb, kink + std::abs(da) / sb})
        if (u > -span && u < span) breaks.push_back(u);
    breaks.push_back(span);
    std::sort(breaks.begin(), breaks.end());
    const double p = integrate_adaptive(integrand, breaks, tol);
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace wetrial
