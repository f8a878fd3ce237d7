#include "wetrial/kappa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "wetrial/parallel.hpp"
#include "wetrial/rng.hpp"

namespace wetrial {

KappaGrid KappaGrid::standard() { return range(0.5, 1.5, 0.05); }

KappaGrid KappaGrid::range(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("kappa range needs lo <= hi and step > 0");
    KappaGrid g;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    // Rounded to 1e-10 so that 0.55 prints and compares as 0.55.
    for (long i = 0; i <= n; ++i) g.values.push_back(std::round((lo + static_cast<double>(i) * step) * 1e10) / 1e10);
    return g;
}

void KappaGrid::validate() const {
    if (values.empty()) throw std::invalid_argument("kappa grid is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw std::invalid_argument("kappa grid values must be finite");
        if (i > 0 && !(values[i] > values[i - 1]))
            throw std::invalid_argument("kappa grid must be strictly ascending");
    }
}

void EnsembleSpec::validate() const {
    if (!(mean_lo <= mean_hi) || !std::isfinite(mean_lo) || !std::isfinite(mean_hi))
        throw std::invalid_argument("ensemble mean bounds must be finite with lo <= hi");
    if (sigma_bounds) {
        if (!(sigma_bounds->first > 0.0) || !(sigma_bounds->first <= sigma_bounds->second))
            throw std::invalid_argument("ensemble sigma bounds must satisfy 0 < lo <= hi");
    } else {
        if (sigma.empty()) throw std::invalid_argument("ensemble needs sigma or sigma_bounds");
        for (double s : sigma)
            if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("ensemble sigma must be positive");
    }
}

ScenarioEnsemble sample_ensemble(const EnsembleSpec& spec, std::size_t arms, std::size_t count, std::uint64_t seed) {
    spec.validate();
    if (arms < 2) throw std::invalid_argument("an ensemble needs at least two arms");
    if (count < 1) throw std::invalid_argument("an ensemble needs at least one scenario");
    if (!spec.sigma_bounds && spec.sigma.size() != arms)
        throw std::invalid_argument("ensemble sigma has " + std::to_string(spec.sigma.size()) + " entries for " +
                                    std::to_string(arms) + " arms");
    ScenarioEnsemble e;
    e.spec = spec;
    e.seed = seed;
    e.scenarios.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
        Stream rng(seed, StreamPurpose::ensemble, static_cast<std::uint32_t>(s));
        Scenario& sc = e.scenarios[s];
        sc.name = "ensemble-" + std::to_string(s);
        sc.variance = spec.variance;
        sc.arms.resize(arms);
        for (auto& a : sc.arms) {
            a.mean = spec.mean_lo + (spec.mean_hi - spec.mean_lo) * rng.uniform();
            a.target = spec.target;
        }
        for (std::size_t j = 0; j < arms; ++j) {
            auto& a = sc.arms[j];
            a.sigma = spec.sigma_bounds
                          ? spec.sigma_bounds->first + (spec.sigma_bounds->second - spec.sigma_bounds->first) * rng.uniform()
                          : spec.sigma[j];
        }
    }
    return e;
}

namespace {

double metric_value(const OperatingCharacteristics& oc, KappaMetric metric) {
    switch (metric) {
        case KappaMetric::pb: return oc.pb;
        case KappaMetric::power_two_components: return oc.power_two_components;
        case KappaMetric::power_conditional:
            return oc.power_conditional.value_or(std::numeric_limits<double>::quiet_NaN());
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

OcMatrix evaluate_cells(const ScenarioEnsemble& ensemble, const KappaGrid& grid, const MetricOptions& options) {
    grid.validate();
    if (ensemble.scenarios.empty()) throw std::invalid_argument("ensemble is empty");
    const bool power = options.metric != KappaMetric::pb;
    if (power && options.eta.size() != grid.size())
        throw std::invalid_argument("power metrics need one cut-off per kappa value");
    const std::size_t s_count = ensemble.scenarios.size(), k_count = grid.size();

    OcMatrix out;
    out.p = options.p;
    out.has_statistic = power;
    out.kappas = grid.values;
    out.cells.assign(s_count, std::vector<OperatingCharacteristics>(k_count));
    out.fr.assign(s_count, OperatingCharacteristics{});

    // Column k_count is the FR baseline.
    parallel_for(s_count * (k_count + 1), options.threads, [&](std::size_t i) {
        const std::size_t s = i / (k_count + 1), k = i % (k_count + 1);
        TrialConfig c;
        c.total = options.total;
        c.seed = derive_seed(options.seed, s);
        c.compute_statistic = power;
        double eta = 0.5;
        if (k == k_count) {
            c.policy = PolicySpec{FixedRandomisation{}, options.fr_burn_in};
            if (power) eta = options.fr_eta;
        } else {
            c.policy = PolicySpec{WeSymmetric{options.p, grid.values[k]}, options.burn_in};
            if (power) eta = options.eta[k];
        }
        (k == k_count ? out.fr[s] : out.cells[s][k]) = replicate(ensemble.scenarios[s], c, options.replicas, eta, 1);
    });
    return out;
}

MetricMatrix extract_metric(const OcMatrix& cells, KappaMetric metric) {
    if (metric != KappaMetric::pb && !cells.has_statistic)
        throw std::invalid_argument("power metrics need cells simulated with the statistic");
    MetricMatrix m;
    m.metric = metric;
    m.p = cells.p;
    m.kappas = cells.kappas;
    for (std::size_t s = 0; s < cells.cells.size(); ++s) {
        std::vector<double> row;
        for (const auto& oc : cells.cells[s]) row.push_back(metric_value(oc, metric));
        m.u.push_back(std::move(row));
        m.fr.push_back(metric_value(cells.fr[s], metric));
    }
    return m;
}

MetricMatrix evaluate_metric(const ScenarioEnsemble& ensemble, const KappaGrid& grid, const MetricOptions& options) {
    return extract_metric(evaluate_cells(ensemble, grid, options), options.metric);
}

namespace {

void check_matrix(const std::vector<std::vector<double>>& u, const std::vector<double>& kappas) {
    if (u.empty()) throw std::invalid_argument("metric matrix is empty");
    if (kappas.empty()) throw std::invalid_argument("kappa grid is empty");
    for (const auto& row : u)
        if (row.size() != kappas.size()) throw std::invalid_argument("metric matrix row length differs from the grid");
}

}  // namespace

KappaSelection select_kappa_pb(const std::vector<std::vector<double>>& u, const std::vector<double>& kappas) {
    check_matrix(u, kappas);
    KappaSelection sel;
    sel.objective.assign(kappas.size(), 0.0);
    for (const auto& row : u) {
        const double best = *std::max_element(row.begin(), row.end());
        for (std::size_t k = 0; k < row.size(); ++k) sel.objective[k] += (row[k] - best) * (row[k] - best);
    }
    for (auto& g : sel.objective) g /= static_cast<double>(u.size());
    // Strict comparison keeps the first (smallest) kappa among ties.
    for (std::size_t k = 1; k < kappas.size(); ++k)
        if (sel.objective[k] < sel.objective[sel.index]) sel.index = k;
    sel.kappa = kappas[sel.index];
    return sel;
}

KappaSelection select_kappa_power(const std::vector<std::vector<double>>& u, const std::vector<double>& fr,
                                  const std::vector<double>& kappas, double xi, double floor_frac) {
    check_matrix(u, kappas);
    if (fr.size() != u.size()) throw std::invalid_argument("one FR value per scenario is required");
    if (!(xi >= 0.0 && xi <= 1.0)) throw std::invalid_argument("xi must lie in [0, 1]");
    KappaSelection sel;
    sel.objective.assign(kappas.size(), 0.0);
    for (std::size_t s = 0; s < u.size(); ++s)
        for (std::size_t k = 0; k < kappas.size(); ++k) sel.objective[k] += u[s][k] >= floor_frac * fr[s];
    for (auto& g : sel.objective) g /= static_cast<double>(u.size());
    for (std::size_t k = 0; k < kappas.size(); ++k) {
        if (sel.objective[k] >= xi) {
            sel.index = k;
            sel.kappa = kappas[k];
            return sel;
        }
    }
    sel.fallback = true;
    for (std::size_t k = 1; k < kappas.size(); ++k)
        if (sel.objective[k] > sel.objective[sel.index]) sel.index = k;
    sel.kappa = kappas[sel.index];
    return sel;
}

std::vector<CutoffCalibration> calibrate_grid(const NullScenarioSet& nulls, const KappaGrid& grid, double p,
                                              const TrialConfig& base, double alpha, int replicas, int threads) {
    grid.validate();
    std::vector<CutoffCalibration> out;
    out.reserve(grid.size());
    for (double kappa : grid.values) {
        TrialConfig c = base;
        c.policy.kind = WeSymmetric{p, kappa};
        out.push_back(calibrate(ControlRule::average, nulls, c, alpha, replicas, threads));
    }
    return out;
}

}  // namespace wetrial
