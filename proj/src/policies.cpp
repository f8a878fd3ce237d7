#include "wetrial/policies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace wetrial {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::string policy_label(const PolicySpec& spec) {
    return std::visit(overloaded{
                          [](const FixedRandomisation&) { return std::string("FR"); },
                          [](const CurrentBelief&) { return std::string("CB"); },
                          [](const ThompsonSampling& ts) {
                              return std::string(ts.mode == TsMode::argmax ? "TS" : "TS-sample");
                          },
                          [](const SymmetricGittins&) { return std::string("SGI"); },
                          [](const TargetedGittins&) { return std::string("TGI"); },
                          [](const WeSymmetric& w) { return "WE(" + fmt_num(w.p) + "," + fmt_num(w.kappa) + ")"; },
                          [](const WeAsymmetric& w) {
                              return "WE-asym(" + fmt_num(w.a) + "," + fmt_num(w.b) + "," + fmt_num(w.kappa) + ")";
                          },
                          [](const WeMultivariate& w) { return "WE(" + fmt_num(w.kappa) + ")"; },
                      },
                      spec.kind);
}

// ---------------------------------------------------------------------------
// Gittins tables
// ---------------------------------------------------------------------------

GittinsTable::GittinsTable(double d, std::vector<std::uint32_t> n, std::vector<double> g)
    : d_(d), n_(std::move(n)), g_(std::move(g)) {
    if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("Gittins table: d must lie in (0, 1)");
    if (n_.empty() || n_.size() != g_.size()) throw std::invalid_argument("Gittins table: needs matching n and g rows");
    for (std::size_t i = 0; i < n_.size(); ++i) {
        if (n_[i] == 0) throw std::invalid_argument("Gittins table: n must be positive");
        if (!std::isfinite(g_[i])) throw std::invalid_argument("Gittins table: non-finite index value");
        if (i > 0 && n_[i] <= n_[i - 1]) throw std::invalid_argument("Gittins table: n must be strictly increasing");
        if (i > 0 && g_[i] > g_[i - 1]) throw std::invalid_argument("Gittins table: index must be nonincreasing in n");
    }
}

GittinsTable GittinsTable::parse(std::istream& in, const std::string& origin) {
    std::string line;
    std::optional<double> d;
    std::vector<std::uint32_t> n;
    std::vector<double> g;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (!d) {
            const auto eq = line.find('=');
            if (line.compare(first, 1, "d") != 0 || eq == std::string::npos)
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected header 'd=<value>'");
            try {
                d = std::stod(line.substr(eq + 1));
            } catch (const std::exception&) {
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad discount value");
            }
            continue;
        }
        std::istringstream row(line);
        long long nn;
        double gg;
        if (!(row >> nn >> gg) || nn <= 0)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected '<n> <g>'");
        n.push_back(static_cast<std::uint32_t>(nn));
        g.push_back(gg);
    }
    if (!d) throw std::invalid_argument(origin + ": missing 'd=<value>' header");
    return GittinsTable(*d, std::move(n), std::move(g));
}

GittinsTable GittinsTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open Gittins table " + path.string());
    return parse(in, path.string());
}

GittinsTable GittinsTable::zero(double d) { return GittinsTable(d, {1}, {0.0}); }

double GittinsTable::operator()(std::uint32_t n) const {
    if (n <= n_.front()) return g_.front();
    if (n >= n_.back()) return g_.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(n_.begin(), n_.end(), n) - n_.begin());
    const std::size_t lo = hi - 1;
    if (n_[lo] == n) return g_[lo];
    const double u_lo = 1.0 / n_[lo], u_hi = 1.0 / n_[hi], u = 1.0 / n;
    const double w = (u - u_lo) / (u_hi - u_lo);
    return g_[lo] + w * (g_[hi] - g_[lo]);
}

// ---------------------------------------------------------------------------
// Thompson sampling
// ---------------------------------------------------------------------------

std::vector<double> ts_best_probabilities(std::span<const ArmState> arms, int draws, Stream& rng) {
    if (draws < 100) throw std::invalid_argument("Thompson sampling needs at least 100 posterior draws");
    const std::size_t k = arms.size();
    if (k == 1) return {1.0};
    std::vector<GaussianPosterior> post;
    post.reserve(k);
    for (const auto& a : arms) post.push_back(posterior(a));
    std::vector<double> sd(k);
    for (std::size_t j = 0; j < k; ++j) sd[j] = post[j].sd();
    std::vector<std::uint32_t> wins(k, 0);
    for (int i = 0; i < draws; ++i) {
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const double dist = std::abs(post[j].mean + sd[j] * rng.normal() - arms[j].target);
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        ++wins[best];
    }
    std::vector<double> p(k);
    for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<double>(wins[j]) / draws;
    return p;
}

std::vector<double> ts_adjust(std::span<const double> best_prob, double c) {
    std::vector<double> w(best_prob.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (best_prob[j] > 0.0) w[j] = std::pow(best_prob[j], c);
        total += w[j];
    }
    for (auto& x : w) x /= total;
    return w;
}

std::size_t pick_extreme(std::span<const double> scores, bool minimise, Stream& rng) {
    std::size_t best = 0, ties = 1;
    for (std::size_t j = 1; j < scores.size(); ++j) {
        const double s = scores[j], b = scores[best];
        if (minimise ? s < b : s > b) {
            best = j;
            ties = 1;
        } else if (s == b) {
            ++ties;
        }
    }
    if (ties == 1) return best;
    std::uint32_t pick = rng.below(static_cast<std::uint32_t>(ties));
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (scores[j] == scores[best] && pick-- == 0) return j;
    return best;
}

// ---------------------------------------------------------------------------
// Allocator
// ---------------------------------------------------------------------------

Allocator::Allocator(PolicySpec spec, std::size_t arms, int total, std::shared_ptr<const GittinsTable> gittins,
                     const std::vector<Eigen::MatrixXd>& covariances)
    : spec_(std::move(spec)), arms_(arms), total_(total), gittins_(std::move(gittins)) {
    if (arms_ < 1) throw std::invalid_argument("at least one arm is required");
    if (spec_.burn_in < 1) throw std::invalid_argument("burn-in must be at least 1");
    if (total_ < static_cast<int>(arms_) * spec_.burn_in)
        throw std::invalid_argument("N=" + std::to_string(total_) + " is smaller than K*B=" +
                                    std::to_string(arms_ * spec_.burn_in));
    std::visit(overloaded{
                   [&](const WeSymmetric& w) {
                       SymmetricGainParams check(w.p, w.kappa, spec_.allow_small_kappa);
                       n_pow_.resize(static_cast<std::size_t>(total_) + 1);
                       for (int n = 0; n <= total_; ++n) n_pow_[n] = std::pow(static_cast<double>(n), w.kappa);
                   },
                   [&](const WeAsymmetric& w) { AsymmetricGainParams{w.a, w.b, w.kappa}.validate(); },
                   [&](const WeMultivariate& w) {
                       if (covariances.size() != arms_)
                           throw std::invalid_argument("multivariate WE needs one covariance per arm");
                       for (const auto& c : covariances) mv_gain_.emplace_back(c, w.kappa, spec_.allow_small_kappa);
                   },
                   [&](const ThompsonSampling& ts) {
                       if (ts.draws < 100) throw std::invalid_argument("Thompson sampling needs at least 100 draws");
                   },
                   [&](const SymmetricGittins& g) {
                       if (!gittins_ || gittins_->d() != g.d)
                           throw MissingGittinsTable("no Gittins table loaded for d=" + fmt_num(g.d));
                   },
                   [&](const TargetedGittins& g) {
                       if (!gittins_ || gittins_->d() != g.d)
                           throw MissingGittinsTable("no Gittins table loaded for d=" + fmt_num(g.d));
                   },
                   [](const auto&) {},
               },
               spec_.kind);
    for (const auto& c : covariances) mv_scale_.push_back(c.diagonal().cwiseSqrt().cwiseInverse());
}

int Allocator::burn_in_patients() const noexcept { return static_cast<int>(arms_) * spec_.burn_in; }

bool Allocator::in_burn_in(int t) const noexcept { return t <= burn_in_patients(); }

bool Allocator::maximises() const noexcept {
    return std::holds_alternative<WeSymmetric>(spec_.kind) || std::holds_alternative<WeAsymmetric>(spec_.kind) ||
           std::holds_alternative<WeMultivariate>(spec_.kind) || std::holds_alternative<ThompsonSampling>(spec_.kind);
}

double Allocator::gittins(std::uint32_t n) const { return (*gittins_)(n); }

std::vector<double> Allocator::scores(std::span<const ArmState> arms, int t, Stream& rng) const {
    const std::size_t k = arms.size();
    std::vector<double> s(k, 0.0);
    std::visit(overloaded{
                   [&](const FixedRandomisation&) {},
                   [&](const CurrentBelief&) {
                       for (std::size_t j = 0; j < k; ++j) s[j] = std::abs(arms[j].mean - arms[j].target);
                   },
                   [&](const ThompsonSampling& ts) {
                       const auto p = ts_best_probabilities(arms, ts.draws, rng);
                       s = ts_adjust(p, static_cast<double>(t) / (2.0 * total_));
                   },
                   [&](const SymmetricGittins&) {
                       for (std::size_t j = 0; j < k; ++j)
                           s[j] = std::abs(arms[j].mean - arms[j].target) - arms[j].sigma() * gittins(arms[j].count);
                   },
                   [&](const TargetedGittins&) {
                       for (std::size_t j = 0; j < k; ++j) {
                           const double bonus = arms[j].sigma() * gittins(arms[j].count);
                           const double x = arms[j].mean, g = arms[j].target;
                           s[j] = x <= g ? std::abs(x + bonus - g) : std::abs(x - bonus - g);
                       }
                   },
                   [&](const WeSymmetric& w) {
                       for (std::size_t j = 0; j < k; ++j) {
                           const double sigma = arms[j].sigma();
                           const double sp = w.p == 2.0 ? 1.0 : w.p == 1.0 ? sigma : std::pow(sigma, 2.0 - w.p);
                           const std::uint32_t n = arms[j].count;
                           const double np = n < n_pow_.size() ? n_pow_[n] : std::pow(static_cast<double>(n), w.kappa);
                           s[j] = symmetric_gain_cached(arms[j].target - arms[j].mean, sigma, static_cast<int>(n), sp,
                                                        np);
                       }
                   },
                   [&](const WeAsymmetric& w) {
                       for (std::size_t j = 0; j < k; ++j)
                           s[j] = asymmetric_gain(arms[j].mean, arms[j].sigma(), static_cast<int>(arms[j].count),
                                                  arms[j].target, AsymmetricGainParams{w.a, w.b, w.kappa});
                   },
                   [&](const WeMultivariate&) {
                       throw std::invalid_argument("multivariate WE needs vector-endpoint arms");
                   },
               },
               spec_.kind);
    return s;
}

std::vector<double> Allocator::scores(std::span<const MvArmState> arms, int) const {
    const std::size_t k = arms.size();
    std::vector<double> s(k, 0.0);
    std::visit(overloaded{
                   [&](const FixedRandomisation&) {},
                   [&](const CurrentBelief&) {
                       if (mv_scale_.size() != k) throw std::invalid_argument("CB on vector endpoints needs covariances");
                       for (std::size_t j = 0; j < k; ++j)
                           s[j] = (arms[j].mean - arms[j].target).cwiseAbs().cwiseProduct(mv_scale_[j]).sum();
                   },
                   [&](const WeMultivariate&) {
                       for (std::size_t j = 0; j < k; ++j)
                           s[j] = mv_gain_[j](arms[j].mean, arms[j].target, static_cast<int>(arms[j].count));
                   },
                   [&](const auto&) {
                       throw std::invalid_argument(policy_label(spec_) + " is not defined for vector endpoints");
                   },
               },
               spec_.kind);
    return s;
}

std::size_t Allocator::next(std::span<const ArmState> arms, int t, Stream& rng) const {
    if (arms.size() != arms_) throw std::invalid_argument("arm count does not match the allocator");
    if (t < 1 || t > total_) throw std::out_of_range("patient index outside 1..N");
    if (in_burn_in(t)) return static_cast<std::size_t>(t - 1) % arms_;
    if (std::holds_alternative<FixedRandomisation>(spec_.kind)) return rng.below(static_cast<std::uint32_t>(arms_));
    if (const auto* ts = std::get_if<ThompsonSampling>(&spec_.kind); ts && ts->mode == TsMode::sample) {
        const auto w = scores(arms, t, rng);
        double u = rng.uniform(), acc = 0.0;
        std::size_t last = 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (w[j] <= 0.0) continue;
            acc += w[j];
            last = j;
            if (u < acc) return j;
        }
        return last;
    }
    const auto s = scores(arms, t, rng);
    return pick_extreme(s, !maximises(), rng);
}

std::size_t Allocator::next(std::span<const MvArmState> arms, int t, Stream& rng) const {
    if (arms.size() != arms_) throw std::invalid_argument("arm count does not match the allocator");
    if (t < 1 || t > total_) throw std::out_of_range("patient index outside 1..N");
    if (in_burn_in(t)) return static_cast<std::size_t>(t - 1) % arms_;
    if (std::holds_alternative<FixedRandomisation>(spec_.kind)) return rng.below(static_cast<std::uint32_t>(arms_));
    const auto s = scores(arms, t);
    return pick_extreme(s, !maximises(), rng);
}

std::size_t next_arm(const PolicySpec& spec, std::span<const ArmState> arms, int t, int total, Stream& rng,
                     std::shared_ptr<const GittinsTable> gittins) {
    return Allocator(spec, arms.size(), total, std::move(gittins)).next(arms, t, rng);
}

}  // namespace wetrial
