#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "wetrial/inference.hpp"
#include "wetrial/trial.hpp"

namespace wetrial {

struct KappaGrid {
    std::vector<double> values;

    // 0.5, 0.55, ..., 1.5.
    static KappaGrid standard();
    static KappaGrid range(double lo, double hi, double step);
    void validate() const;
    std::size_t size() const noexcept { return values.size(); }
};

struct EnsembleSpec {
    double mean_lo = -4.0;
    double mean_hi = 4.0;
    // Fixed per-arm sigma, or drawn per arm from sigma_bounds when set.
    std::vector<double> sigma{2.0, 2.0, 2.0, 4.0};
    std::optional<std::pair<double, double>> sigma_bounds;
    double target = 0.0;
    VarianceMode variance = VarianceMode::known;

    void validate() const;
};

struct ScenarioEnsemble {
    std::vector<Scenario> scenarios;
    EnsembleSpec spec;
    std::uint64_t seed = 0;
};

// Scenario s draws its means (then sigmas) from the ensemble sub-stream s.
ScenarioEnsemble sample_ensemble(const EnsembleSpec& spec, std::size_t arms, std::size_t count, std::uint64_t seed);

enum class KappaMetric { pb, power_two_components, power_conditional };

struct MetricOptions {
    KappaMetric metric = KappaMetric::pb;
    double p = 1.0;
    int total = 100;
    int burn_in = 5;
    int replicas = 2000;
    std::uint64_t seed = 1;
    // Power metrics: one cut-off per grid value and one for the FR column.
    std::vector<double> eta;
    double fr_eta = 0.5;
    int fr_burn_in = 1;
    int threads = 0;
};

// u[s][k] is the metric of WE(p, kappa_k) on scenario s; fr[s] the same
// metric under FR. Every cell of row s shares the seed derive_seed(seed, s).
// An undefined conditional power is stored as NaN.
struct MetricMatrix {
    KappaMetric metric = KappaMetric::pb;
    double p = 1.0;
    std::vector<double> kappas;
    std::vector<std::vector<double>> u;
    std::vector<double> fr;
};

// Full operating characteristics per (scenario, kappa) cell plus the FR
// column. The statistic is only simulated when options.metric is a power.
struct OcMatrix {
    double p = 1.0;
    bool has_statistic = false;
    std::vector<double> kappas;
    std::vector<std::vector<OperatingCharacteristics>> cells;
    std::vector<OperatingCharacteristics> fr;
};

OcMatrix evaluate_cells(const ScenarioEnsemble& ensemble, const KappaGrid& grid, const MetricOptions& options);
MetricMatrix extract_metric(const OcMatrix& cells, KappaMetric metric);
MetricMatrix evaluate_metric(const ScenarioEnsemble& ensemble, const KappaGrid& grid, const MetricOptions& options);

struct KappaSelection {
    double kappa = 0.0;
    std::size_t index = 0;
    // g1 per kappa (pb) or attainment probability per kappa (power).
    std::vector<double> objective;
    // Power selection only: no kappa met xi, the most attaining one was used.
    bool fallback = false;
};

// argmin over k of mean_s (u[s][k] - max_k' u[s][k'])^2, ties to smaller kappa.
KappaSelection select_kappa_pb(const std::vector<std::vector<double>>& u, const std::vector<double>& kappas);

// Smallest kappa with P_s(u[s][k] >= floor_frac * fr[s]) >= xi.
KappaSelection select_kappa_power(const std::vector<std::vector<double>>& u, const std::vector<double>& fr,
                                  const std::vector<double>& kappas, double xi = 0.9, double floor_frac = 0.8);

// Average-rule cut-off of WE(p, kappa) for every grid value over one null set.
std::vector<CutoffCalibration> calibrate_grid(const NullScenarioSet& nulls, const KappaGrid& grid, double p,
                                              const TrialConfig& base, double alpha, int replicas, int threads = 0);

}  // namespace wetrial
