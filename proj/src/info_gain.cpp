#include "wetrial/info_gain.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wetrial/stat_math.hpp"

namespace wetrial {

namespace {

void check_kappa(double kappa, bool allow_small) {
    if (!std::isfinite(kappa)) throw std::invalid_argument("kappa must be finite");
    if (kappa < 0.5 && !allow_small)
        throw std::invalid_argument("kappa < 0.5 requires an explicit override (got " + std::to_string(kappa) + ")");
}

void check_arm(double sigma, int n) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive and finite");
    if (n < 1) throw std::invalid_argument("n must be at least 1");
}

}  // namespace

SymmetricGainParams::SymmetricGainParams(double p, double kappa, bool allow_small_kappa) : p_(p), kappa_(kappa) {
    if (!std::isfinite(p)) throw std::invalid_argument("p must be finite");
    check_kappa(kappa, allow_small_kappa);
}

void AsymmetricGainParams::validate() const {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("asymmetric weight needs a > 0 and b > 0");
    if (!std::isfinite(kappa)) throw std::invalid_argument("kappa must be finite");
}

double gaussian_kernel_gain(double mean, double posterior_var, double kernel_var, double target) {
    const double r = posterior_var / (posterior_var + kernel_var);
    const double d = target - mean;
    return 0.5 * r - 0.5 * (d * d / posterior_var) * r * r;
}

double symmetric_gain(double mean, double sigma, int n, double target, const SymmetricGainParams& params) {
    check_arm(sigma, n);
    return symmetric_gain_cached(target - mean, sigma, n, std::pow(sigma, 2.0 - params.p()),
                                 std::pow(static_cast<double>(n), params.kappa()));
}

double asymmetric_gain(double mean, double sigma, int n, double target, const AsymmetricGainParams& params) {
    check_arm(sigma, n);
    params.validate();
    const double post_var = sigma * sigma / n;
    const double n_pow = std::pow(static_cast<double>(n), params.kappa);
    const double d = target - mean;

    struct Piece {
        double log_weight;
        double second_moment;  // E[(mu - mean)^2] under the truncated piece
    };
    auto piece = [&](double scale, TruncationSide side) {
        const double kernel_var = scale * scale * sigma * sigma / n_pow;
        const double tilde_mean = (mean * kernel_var + target * post_var) / (kernel_var + post_var);
        const double tilde_var = kernel_var * post_var / (kernel_var + post_var);
        const double tilde_sd = std::sqrt(tilde_var);
        const double z = (target - tilde_mean) / tilde_sd;
        // log D = log sd~ - (target - mean)^2 / (2 (kv + pv)) + log P(piece side); the
        // factor exp(-mean^2 / (2 pv)) shared by both pieces is dropped.
        const double log_mass = side == TruncationSide::left_of ? log_normal_cdf(z) : log_normal_cdf(-z);
        const double log_weight = std::log(tilde_sd) - 0.5 * d * d / (kernel_var + post_var) + log_mass;
        const auto m = truncated_normal_moments(tilde_mean, tilde_sd, side, target);
        const double off = m.mean - mean;
        return Piece{log_weight, m.variance + off * off};
    };
    const Piece lo = piece(params.a, TruncationSide::left_of);
    const Piece hi = piece(params.b, TruncationSide::right_of);

    const double top = std::max(lo.log_weight, hi.log_weight);
    const double wl = std::exp(lo.log_weight - top);
    const double wh = std::exp(hi.log_weight - top);
    const double gain = 0.5 - (lo.second_moment * wl + hi.second_moment * wh) / ((wl + wh) * 2.0 * post_var);
    if (!std::isfinite(gain))
        throw std::overflow_error("asymmetric gain is not finite for mean=" + std::to_string(mean) +
                                  " sigma=" + std::to_string(sigma) + " n=" + std::to_string(n));
    return gain;
}

double asymmetric_gain_argmax(double sigma, int n, double target, const AsymmetricGainParams& params, double x_tol) {
    const double sd = sigma / std::sqrt(static_cast<double>(n));
    auto f = [&](double x) { return asymmetric_gain(x, sigma, n, target, params); };
    // Coarse scan over +-6 posterior sd, then golden section around the best node.
    constexpr int nodes = 1200;
    const double lo = target - 6.0 * sd, step = 12.0 * sd / nodes;
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= nodes; ++i) {
        const double v = f(lo + i * step);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = lo + (best - 1) * step, b = lo + (best + 1) * step;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > x_tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

double optimal_b(double a, double tol) {
    if (!(a > std::sqrt(2.0)))
        throw NoOptimalB("no b* in (0, a) exists unless a > sqrt(2) (got a=" + std::to_string(a) + ")");
    if (!(tol > 0.0)) throw std::invalid_argument("optimal_b: tol must be positive");
    // The maximiser location is invariant to sigma, n and target when kappa = 1;
    // work in standard units.
    auto offset = [&](double b) {
        return asymmetric_gain_argmax(1.0, 1, 0.0, AsymmetricGainParams{a, b, 1.0}, std::min(1e-6, tol * 1e-2));
    };
    // b = a is the trivial symmetric root; scan (0, a) below it for a sign change.
    constexpr int scan = 200;
    double prev_b = a * 1.0 / scan, prev_f = offset(prev_b);
    for (int k = 2; k < scan; ++k) {
        const double b = a * k / scan;
        const double fb = offset(b);
        if (prev_f == 0.0) return prev_b;
        if ((prev_f < 0.0) != (fb < 0.0)) {
            double lo = prev_b, hi = b, flo = prev_f;
            while (hi - lo > tol) {
                const double mid = 0.5 * (lo + hi);
                const double fm = offset(mid);
                if ((fm < 0.0) == (flo < 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev_b = b;
        prev_f = fb;
    }
    throw NoOptimalB("no sign change of the maximiser offset found in (0, a) for a=" + std::to_string(a));
}

MultivariateGain::MultivariateGain(const Eigen::MatrixXd& cov, double kappa, bool allow_small_kappa)
    : kappa_(kappa), q_(static_cast<int>(cov.rows())) {
    check_kappa(kappa, allow_small_kappa);
    if (cov.rows() != cov.cols() || cov.rows() == 0) throw std::invalid_argument("covariance must be square");
    const double scale = cov.cwiseAbs().maxCoeff();
    if (!((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, scale)))
        throw std::invalid_argument("covariance must be symmetric");
    llt_.compute(cov);
    if (llt_.info() != Eigen::Success) throw std::invalid_argument("covariance is not positive definite");
}

double MultivariateGain::quadratic_form(const Eigen::VectorXd& deviation) const {
    return llt_.matrixL().solve(deviation).squaredNorm();
}

double MultivariateGain::operator()(const Eigen::VectorXd& mean, const Eigen::VectorXd& target, int n) const {
    if (mean.size() != q_ || target.size() != q_) throw std::invalid_argument("dimension mismatch");
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    const double nk = std::pow(static_cast<double>(n), kappa_);
    const double denom = nk + n;
    const double shrink = nk * std::sqrt(static_cast<double>(n)) / denom;
    return 0.5 * q_ * nk / denom - 0.5 * quadratic_form(target - mean) * shrink * shrink;
}

double multivariate_gain(const MultivariateGainInputs& in) {
    return MultivariateGain(in.cov, in.kappa, in.allow_small_kappa)(in.mean, in.target, in.n);
}

}  // namespace wetrial
