#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "wetrial/inference.hpp"
#include "wetrial/kappa.hpp"
#include "wetrial/trial.hpp"

namespace wetrial {

// Schema violation; what() starts with the offending field path, e.g.
// "scenarios[0].arms[2].sigma: must be positive".
class SpecError : public std::runtime_error {
public:
    SpecError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct DesignSpec {
    PolicySpec policy;
    std::string gittins_path;  // SGI/TGI only; empty = zero table
    std::optional<double> eta;  // fixed cut-off, overrides calibration
};

enum class NullGridKind { quadratic, sigma_cross, bivariate, explicit_list };

struct NullGridSpec {
    NullGridKind kind = NullGridKind::quadratic;
    double c_max = 40.0;
    int points = 11;
    std::vector<double> offsets;               // sigma_cross; quadratic when non-empty overrides c_max/points
    std::vector<double> sigma;                 // quadratic: per-arm sigma
    std::vector<std::vector<double>> sigmas;   // sigma_cross patterns
    double target = 0.0;
    VarianceMode variance = VarianceMode::known;
    std::vector<double> c1, c2;                // bivariate; empty = reference 6x6 grid
    std::vector<Scenario> scenarios;           // explicit_list
    std::vector<double> weights;
};

struct CalibrationSpec {
    ControlRule rule = ControlRule::average;
    double alpha = 0.05;
    int replicas = 2000;
    NullGridSpec nulls;
};

struct KappaSpec {
    EnsembleSpec ensemble;
    int arms = 4;
    int count = 500;
    std::uint64_t ensemble_seed = 1;
    double grid_lo = 0.5, grid_hi = 1.5, grid_step = 0.05;
    std::vector<double> p{1.0, 2.0};
    // Power measure inside g2; g1 always uses PB.
    KappaMetric power_metric = KappaMetric::power_two_components;
    int replicas = 2000;
    int burn_in = 5;
    int fr_burn_in = 1;
    double xi = 0.9;
    double floor_frac = 0.8;
};

struct RunSpec {
    std::string name = "run";
    std::uint64_t seed = 1;
    int replicas = 2000;
    int threads = 0;
    int total = 100;
    std::uint64_t mv_draws = 100'000;
    double eta = 0.95;  // used when neither calibration nor a design eta is given
    std::vector<Scenario> scenarios;
    std::vector<DesignSpec> designs;
    std::optional<CalibrationSpec> calibration;
    std::optional<KappaSpec> kappa;
    std::string output_dir = "results";
};

RunSpec parse_runspec(const nlohmann::json& j);
RunSpec load_runspec(const std::filesystem::path& path);
nlohmann::json to_json(const RunSpec& spec);
void write_runspec(const RunSpec& spec, const std::filesystem::path& path);

nlohmann::json to_json(const Scenario& scenario);
Scenario parse_scenario(const nlohmann::json& j, const std::string& path = "scenario");
nlohmann::json to_json(const PolicySpec& policy);
PolicySpec parse_policy(const nlohmann::json& j, const std::string& path = "policy");

// Null set described by a calibration spec; scenario and sigma defaults come
// from the first run scenario when the grid leaves them unset.
NullScenarioSet build_nulls(const NullGridSpec& grid, const std::vector<Scenario>& scenarios);

// Trial configuration for one design of a run (Gittins table resolved
// relative to base_dir).
TrialConfig make_config(const RunSpec& spec, const DesignSpec& design, const std::filesystem::path& base_dir = {});

struct ResultRow {
    std::string scenario;
    std::string design;
    OperatingCharacteristics oc;
};

// Columns: scenario, design, replicas, eta, PB, PB_se, CS_I, CS_I_II,
// power_conditional, power_two_components, rejection_rate. Undefined
// conditional power is written as NA.
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::json to_json(const OperatingCharacteristics& oc);
nlohmann::json to_json(const CutoffCalibration& cal);
nlohmann::json to_json(const MetricMatrix& matrix, const KappaSelection& selection);

// u matrix as CSV: scenario, FR, then one column per kappa.
void write_metric_csv(std::ostream& out, const MetricMatrix& matrix);
// One row per kappa: kappa, objective, selected.
void write_selection_csv(std::ostream& out, const std::vector<double>& kappas, const KappaSelection& selection);

// Fixed "%.6f" formatting shared by every table so files are byte-stable.
std::string format_number(double x);

void write_text(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace wetrial
