#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wetrial/inference.hpp"
#include "wetrial/io.hpp"
#include "wetrial/kappa.hpp"

namespace wetrial {

using Progress = std::function<void(const std::string&)>;

// Operating characteristics of every design on every scenario of a run.
// With a calibration block each design is calibrated on the null set first
// and its own cut-off is used; otherwise the design eta or the run eta.
struct DesignRun {
    std::string label;
    DesignSpec design;
    std::optional<CutoffCalibration> calibration;
    double eta = 0.95;
    std::vector<ResultRow> rows;
};

std::vector<DesignRun> run_simulation(const RunSpec& spec, const std::filesystem::path& base_dir = {},
                                      const Progress& progress = {});
// results.csv, summary.json and calibration/<design>.json under `out`.
void write_simulation(const std::filesystem::path& out, const RunSpec& spec, const std::vector<DesignRun>& runs);

// Strong and average cut-offs of every design from one set of null samples.
struct CalibrationRun {
    std::string label;
    CutoffCalibration strong;
    CutoffCalibration average;
    std::vector<std::string> warnings;
};

std::vector<CalibrationRun> run_calibration(const RunSpec& spec, const std::filesystem::path& base_dir = {},
                                            const Progress& progress = {});
// calibration/<design>.json plus type_i.csv (one row per design, rule and
// null scenario with the realised rate at that rule's cut-off).
void write_calibration(const std::filesystem::path& out, const std::vector<CalibrationRun>& runs);

struct KappaRun {
    double p = 1.0;
    OcMatrix cells;
    MetricMatrix pb;
    KappaSelection g1;
    std::optional<MetricMatrix> power;
    std::optional<KappaSelection> g2;
    std::vector<CutoffCalibration> calibrations;  // per kappa, power objective only
    std::optional<CutoffCalibration> fr_calibration;
};

// g1 always; g2 when with_power (needs design-specific cut-offs, calibrated
// with the run's calibration block or a default quadratic grid).
std::vector<KappaRun> run_kappa(const RunSpec& spec, bool with_power, const Progress& progress = {});
// kappa_selection.csv, kappa_p<p>_pb.csv, kappa_p<p>_power.csv, kappa.json.
void write_kappa(const std::filesystem::path& out, const std::vector<KappaRun>& runs);

// Label made safe for file names: "WE(1,0.55)" -> "WE_1_0.55".
std::string file_label(const std::string& label);

}  // namespace wetrial
