#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "wetrial/info_gain.hpp"

using namespace wetrial;
using Catch::Approx;

namespace {

// h(pi) - h^phi(pi) for the N(xbar, sigma^2/n) posterior and a weight
// proportional to exp(-(mu - g)^2 / (2 v(mu))), where v is kernel_lo below the
// target and kernel_hi above it. Both entropies by Simpson integration.
double entropy_gain_oracle(double xbar, double sigma, int n, double g, double kernel_lo, double kernel_hi) {
    const double s2 = sigma * sigma / n, s = std::sqrt(s2);
    auto log_post = [&](double mu) { return -0.5 * std::log(2 * std::numbers::pi * s2) - (mu - xbar) * (mu - xbar) / (2 * s2); };
    auto kernel = [&](double mu) {
        const double v = mu < g ? kernel_lo : kernel_hi;
        return std::exp(-(mu - g) * (mu - g) / (2 * v));
    };
    const double lo = xbar - 14 * s, hi = xbar + 14 * s;
    const int panels = 200000;
    const double h = (hi - lo) / panels;
    double mass = 0, wlog = 0, plog = 0;
    for (int i = 0; i <= panels; ++i) {
        const double mu = lo + i * h;
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double lp = log_post(mu), p = std::exp(lp);
        mass += w * kernel(mu) * p;
        wlog += w * kernel(mu) * p * lp;
        plog += w * p * lp;
    }
    // Normalising C so that the weighted posterior integrates to one.
    return -plog * h / 3 + (wlog / mass);
}

}  // namespace

TEST_CASE("symmetric gain worked values", "[info_gain]") {
    for (double sigma : {0.3, 1.0, 5.0}) CHECK(symmetric_gain(0.0, sigma, 1, 0.0, {2, 1}) == Approx(0.25).margin(1e-15));
    CHECK(symmetric_gain(1.0, 2.0, 4, 0.0, {2, 1}) == Approx(0.125).margin(1e-15));
    CHECK(symmetric_gain(0.0, 2.0, 4, 0.0, {1, 0.5}) == Approx(0.25).margin(1e-15));
}

TEST_CASE("symmetric gain matches the weighted-entropy definition", "[info_gain]") {
    struct Case {
        double xbar, sigma;
        int n;
        double g, p, kappa;
    };
    for (const auto& c : std::vector<Case>{{0.3, 2, 5, 0, 1, 0.55},
                                           {-1.2, 1.5, 12, 0.4, 2, 0.7},
                                           {3.9, 4, 30, 0, 1, 0.8},
                                           {10, 3, 1, 11, 2, 1.1},
                                           {0, 0.5, 50, 0, 1.5, 1.5}}) {
        const double kv = std::pow(c.sigma, c.p) / std::pow(c.n, c.kappa);
        const double oracle = entropy_gain_oracle(c.xbar, c.sigma, c.n, c.g, kv, kv);
        CHECK(symmetric_gain(c.xbar, c.sigma, c.n, c.g, {c.p, c.kappa}) == Approx(oracle).margin(1e-7));
    }
}

TEST_CASE("symmetric gain is maximised at the target", "[info_gain][property]") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> sig(0.2, 10), tgt(-5, 5), pp(0, 3), kk(0.5, 1.5);
    std::uniform_int_distribution<int> nn(1, 200);
    for (int trial = 0; trial < 500; ++trial) {
        const double sigma = sig(gen), g = tgt(gen), p = pp(gen), kappa = kk(gen);
        const int n = nn(gen);
        const double at = symmetric_gain(g, sigma, n, g, {p, kappa});
        for (double eps : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
            REQUIRE(symmetric_gain(g + eps, sigma, n, g, {p, kappa}) < at);
            REQUIRE(symmetric_gain(g - eps, sigma, n, g, {p, kappa}) < at);
        }
    }
}

TEST_CASE("symmetric gain is nondecreasing in sigma for p in {1, 2}", "[info_gain][property]") {
    for (double p : {1.0, 2.0})
        for (double kappa : {0.5, 0.8, 1.2})
            for (int n : {1, 5, 40}) {
                double prev = -INFINITY;
                for (double sigma = 0.5; sigma <= 20.0; sigma += 0.05) {
                    const double v = symmetric_gain(0.1, sigma, n, 0.0, {p, kappa});
                    REQUIRE(v >= prev - 1e-15);
                    prev = v;
                }
            }
}

TEST_CASE("symmetric gain at the target is monotone in n", "[info_gain][property]") {
    // At the target the gain is r/2 with r = 1 / (1 + n^(1-kappa) sigma^(p-2)):
    // nonincreasing for 0.5 <= kappa <= 1, increasing for kappa > 1.
    for (double p : {0.0, 1.0, 2.0})
        for (double kappa : {0.5, 0.75, 1.0, 1.2, 1.5})
            for (double sigma : {0.5, 2.0, 4.0}) {
                double prev = symmetric_gain(0.0, sigma, 1, 0.0, {p, kappa});
                for (int n = 2; n <= 500; ++n) {
                    const double v = symmetric_gain(0.0, sigma, n, 0.0, {p, kappa});
                    if (kappa <= 1.0) REQUIRE(v <= prev + 1e-15);
                    else REQUIRE(v > prev);
                    prev = v;
                }
            }
}

TEST_CASE("symmetric gain away from the target eventually decreases in n", "[info_gain][property]") {
    for (double p : {1.0, 2.0})
        for (double kappa : {0.55, 0.8, 1.1, 1.5}) {
            double prev = symmetric_gain(0.5, 2.0, 50, 0.0, {p, kappa});
            for (int n = 51; n <= 500; ++n) {
                const double v = symmetric_gain(0.5, 2.0, n, 0.0, {p, kappa});
                REQUIRE(v < prev);
                prev = v;
            }
        }
}

TEST_CASE("kappa below one half needs an explicit override", "[info_gain]") {
    CHECK_THROWS_AS(SymmetricGainParams(1, 0.4), std::invalid_argument);
    CHECK_NOTHROW(SymmetricGainParams(1, 0.4, true));
    CHECK_NOTHROW(SymmetricGainParams(1, 0.5));
}

TEST_CASE("asymmetric gain matches the weighted-entropy definition", "[info_gain]") {
    struct Case {
        double xbar, sigma;
        int n;
        double g, a, b, kappa;
    };
    for (const auto& c : std::vector<Case>{{0.0, 1, 1, 0, 2.236, 1.0262, 1},
                                           {0.5, 2, 5, 0, 2, 0.5, 1},
                                           {-1.0, 1.5, 10, 0.3, 0.7, 1.9, 0.8},
                                           {4, 3, 3, 2, 3, 1, 1.2}}) {
        const double kv = c.sigma * c.sigma / std::pow(c.n, c.kappa);
        const double oracle = entropy_gain_oracle(c.xbar, c.sigma, c.n, c.g, c.a * c.a * kv, c.b * c.b * kv);
        CHECK(asymmetric_gain(c.xbar, c.sigma, c.n, c.g, {c.a, c.b, c.kappa}) == Approx(oracle).margin(1e-7));
    }
}

TEST_CASE("asymmetric gain with a = b reduces to the Gaussian kernel", "[info_gain]") {
    for (double xbar : {-3.0, -0.2, 0.0, 0.7, 2.5})
        for (double sigma : {0.5, 2.0})
            for (int n : {1, 7, 40})
                for (double kappa : {0.5, 1.0, 1.3}) {
                    // a = b = 1 is the symmetric p = 2 family.
                    CHECK(asymmetric_gain(xbar, sigma, n, 0.0, {1, 1, kappa}) ==
                          Approx(symmetric_gain(xbar, sigma, n, 0.0, {2, kappa})).margin(1e-8));
                    for (double a : {0.5, 2.0}) {
                        const double kv = a * a * sigma * sigma / std::pow(n, kappa);
                        CHECK(asymmetric_gain(xbar, sigma, n, 0.0, {a, a, kappa}) ==
                              Approx(gaussian_kernel_gain(xbar, sigma * sigma / n, kv, 0.0)).margin(1e-8));
                    }
                }
}

TEST_CASE("asymmetric gain reports overflow instead of NaN", "[info_gain]") {
    bool finite_or_threw = true;
    for (double dev : {5.0, 8.0, 20.0, 60.0, 400.0}) {
        try {
            const double v = asymmetric_gain(dev, 1.0, 1, 0.0, {3, 0.5, 1});
            finite_or_threw = finite_or_threw && std::isfinite(v);
        } catch (const std::overflow_error&) {
        }
    }
    CHECK(finite_or_threw);
}

TEST_CASE("optimal b", "[info_gain]") {
    CHECK_THROWS_AS(optimal_b(1.0), NoOptimalB);
    CHECK_THROWS_AS(optimal_b(std::sqrt(2.0)), NoOptimalB);
    CHECK_THROWS_AS(optimal_b(0.5), NoOptimalB);

    // Frozen from the weighted-entropy oracle: the unique b in (0, a) that puts
    // the maximiser on the target.
    CHECK(optimal_b(1.5) == Approx(1.3372).margin(2e-4));
    CHECK(optimal_b(2.0) == Approx(1.0871).margin(2e-4));
    CHECK(optimal_b(2.236) == Approx(1.0262).margin(2e-4));
    CHECK(optimal_b(3.0) == Approx(0.9192).margin(2e-4));
    CHECK(optimal_b(4.0) == Approx(0.8611).margin(2e-4));

    for (double a : {1.5, 2.236, 3.0}) {
        const double b = optimal_b(a, 1e-6);
        CHECK(b > 0.0);
        CHECK(b < a);
        CHECK(asymmetric_gain_argmax(1.0, 1, 0.0, {a, b, 1.0}) == Approx(0.0).margin(1e-4));
        // Independent check of the stationary point with the entropy oracle.
        const double h = 1e-3;
        const double left = entropy_gain_oracle(-h, 1, 1, 0, a * a, b * b);
        const double mid = entropy_gain_oracle(0, 1, 1, 0, a * a, b * b);
        const double right = entropy_gain_oracle(h, 1, 1, 0, a * a, b * b);
        CHECK(mid >= left - 1e-9);
        CHECK(mid >= right - 1e-9);
    }
}

TEST_CASE("asymmetric maximiser location does not depend on sigma, n or target", "[info_gain][property]") {
    const AsymmetricGainParams params{2.236, 0.906, 1.0};
    const double reference = asymmetric_gain_argmax(1.0, 1, 0.0, params);
    for (double sigma : {1.0, 2.0, 4.0})
        for (int n : {5, 10, 20})
            for (double g : {-2.0, 0.0, 3.0}) {
                const double x = asymmetric_gain_argmax(sigma, n, g, params);
                CHECK((x - g) / (sigma / std::sqrt(n)) == Approx(reference).margin(1e-4));
            }
}

TEST_CASE("multivariate gain", "[info_gain]") {
    SECTION("one dimension coincides with the symmetric p = 2 gain") {
        for (double xbar : {-2.0, 0.0, 0.4, 3.3})
            for (double sigma : {0.5, 1.0, 3.0})
                for (int n : {1, 4, 33})
                    for (double kappa : {0.5, 0.75, 1.1}) {
                        MultivariateGainInputs in{Eigen::VectorXd::Constant(1, xbar),
                                                  Eigen::MatrixXd::Constant(1, 1, sigma * sigma),
                                                  Eigen::VectorXd::Constant(1, 0.3), n, kappa};
                        CHECK(multivariate_gain(in) ==
                              Approx(symmetric_gain(xbar, sigma, n, 0.3, {2, kappa})).margin(1e-12));
                    }
    }
    SECTION("worked values") {
        Eigen::MatrixXd cov(2, 2);
        cov << 4, 0, 0, 64;
        Eigen::VectorXd g(2), x(2);
        g << 0, 100;
        CHECK(multivariate_gain({g, cov, g, 1, 0.5}) == Approx(0.5).margin(1e-15));
        x << 1, 92;  // x - g = (1, -8)
        MultivariateGain mg(cov, 0.75);
        CHECK(mg.quadratic_form(g - x) == Approx(1.25).margin(1e-12));
        for (int n : {1, 6, 50}) {
            const double nk = std::pow(n, 0.75);
            const double expected = nk / (nk + n) - 0.5 * 1.25 * std::pow(std::pow(n, 1.25) / (nk + n), 2);
            CHECK(mg(x, g, n) == Approx(expected).margin(1e-12));
        }
    }
    SECTION("permutation invariance") {
        Eigen::MatrixXd cov(3, 3);
        cov << 4, 1, 0.5, 1, 9, -2, 0.5, -2, 16;
        Eigen::VectorXd x(3), g(3);
        x << 1, -2, 0.5;
        g << 0.2, 0.1, 3;
        Eigen::PermutationMatrix<3> perm;
        perm.indices() << 2, 0, 1;
        const Eigen::MatrixXd pc = perm * cov * perm.transpose();
        CHECK(multivariate_gain({perm * x, pc, perm * g, 7, 0.6}) ==
              Approx(multivariate_gain({x, cov, g, 7, 0.6})).margin(1e-12));
    }
    SECTION("non positive-definite covariance is rejected") {
        Eigen::MatrixXd cov(2, 2);
        cov << 1, 2, 2, 1;
        CHECK_THROWS(multivariate_gain({Eigen::VectorXd::Zero(2), cov, Eigen::VectorXd::Zero(2), 1, 0.5}));
    }
}

TEST_CASE("bivariate gain maximised over the correlation", "[info_gain][property]") {
    // rho* = sign(d1 d2) min(|d1/d2 sqrt(s22/s11)|, |d2/d1 sqrt(s11/s22)|), 0/0 := 0.
    auto closed_form = [](double d1, double d2, double s11, double s22) {
        if (d1 == 0.0 || d2 == 0.0) return 0.0;
        const double r = std::abs(d1 / d2 * std::sqrt(s22 / s11));
        return (d1 * d2 > 0 ? 1.0 : -1.0) * std::min(r, 1.0 / r);
    };
    struct Case {
        double x1, x2, s11, s22;
    };
    for (const auto& c : std::vector<Case>{{2, 2, 4, 4},
                                           {2, -2, 4, 4},
                                           {0, -10, 4, 4},
                                           {1, 3, 4, 5},
                                           {-1.5, 2, 2, 9},
                                           {3, 0.5, 1, 1}}) {
        const Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
        Eigen::VectorXd x(2);
        x << c.x1, c.x2;
        double best_rho = 0, best = -INFINITY;
        for (int i = -999; i <= 999; ++i) {
            const double rho = i * 1e-3;
            Eigen::MatrixXd cov(2, 2);
            const double off = rho * std::sqrt(c.s11 * c.s22);
            cov << c.s11, off, off, c.s22;
            const double v = multivariate_gain({x, cov, g, 10, 0.75});
            if (v > best + 1e-14) {
                best = v;
                best_rho = rho;
            }
        }
        const double expected = closed_form(g(0) - c.x1, g(1) - c.x2, c.s11, c.s22);
        INFO("x=(" << c.x1 << "," << c.x2 << ")");
        if (expected == 0.0) {
            // Symmetric in rho: the grid maximiser is at 0 or the gain is flat.
            Eigen::MatrixXd c0(2, 2);
            c0 << c.s11, 0, 0, c.s22;
            CHECK(best == Approx(multivariate_gain({x, c0, g, 10, 0.75})).margin(1e-12));
        } else {
            CHECK(std::abs(best_rho - std::clamp(expected, -0.999, 0.999)) <= 1e-3 + 1e-12);
        }
    }
}
