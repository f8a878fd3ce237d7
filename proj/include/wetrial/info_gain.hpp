#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <stdexcept>

namespace wetrial {

class NoOptimalB : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Exponents of the symmetric Gaussian weight, whose kernel variance is
// sigma^p / n^kappa. kappa below 0.5 is rejected unless explicitly allowed.
class SymmetricGainParams {
public:
    SymmetricGainParams(double p, double kappa, bool allow_small_kappa = false);
    double p() const noexcept { return p_; }
    double kappa() const noexcept { return kappa_; }

private:
    double p_;
    double kappa_;
};

// Piecewise weight with kernel variance a^2 sigma^2 / n^kappa below the target
// and b^2 sigma^2 / n^kappa above it.
struct AsymmetricGainParams {
    double a = 1.0;
    double b = 1.0;
    double kappa = 1.0;

    void validate() const;
};

// Gain of a Gaussian kernel of variance kernel_var centred on target, for a
// N(mean, posterior_var) posterior:
//   r/2 - ((target - mean)^2 / posterior_var) r^2 / 2,  r = pv / (pv + kv).
double gaussian_kernel_gain(double mean, double posterior_var, double kernel_var, double target);

double symmetric_gain(double mean, double sigma, int n, double target, const SymmetricGainParams& params);

// Same quantity with sigma^(2-p) and n^kappa supplied by the caller; the trial
// loop caches both.
inline double symmetric_gain_cached(double deviation, double sigma, int n, double sigma_pow, double n_pow) {
    const double r = sigma_pow * n_pow / (sigma_pow * n_pow + n);
    const double z = deviation / sigma;
    return 0.5 * r - 0.5 * z * z * n * r * r;
}

// Throws std::overflow_error if the result is not finite.
double asymmetric_gain(double mean, double sigma, int n, double target, const AsymmetricGainParams& params);

// b in (0, a) that puts the maximiser of the asymmetric gain on the target
// (kappa = 1). Throws NoOptimalB for a <= sqrt(2).
double optimal_b(double a, double tol = 1e-4);

// Maximiser over the sample mean of the asymmetric gain, found on a grid
// followed by golden-section refinement to x_tol.
double asymmetric_gain_argmax(double sigma, int n, double target, const AsymmetricGainParams& params,
                              double x_tol = 1e-6);

struct MultivariateGainInputs {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd target;
    int n = 1;
    double kappa = 0.5;
    bool allow_small_kappa = false;
};

double multivariate_gain(const MultivariateGainInputs& in);

// Holds the Cholesky factor of one arm's covariance for repeated evaluation.
class MultivariateGain {
public:
    MultivariateGain(const Eigen::MatrixXd& cov, double kappa, bool allow_small_kappa = false);

    // (target - mean)' cov^{-1} (target - mean)
    double quadratic_form(const Eigen::VectorXd& deviation) const;
    double operator()(const Eigen::VectorXd& mean, const Eigen::VectorXd& target, int n) const;

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double kappa_;
    int q_;
};

}  // namespace wetrial
