#include "wetrial/runner.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

namespace wetrial {

using nlohmann::json;

std::string file_label(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') out += c;
        else if (!out.empty() && out.back() != '_') out += '_';
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "design" : out;
}

namespace {

void report(const Progress& progress, const std::string& message) {
    if (progress) progress(message);
}

std::string scenario_label(const Scenario& s, std::size_t index) {
    return s.name.empty() ? "scenario" + std::to_string(index + 1) : s.name;
}

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

NullScenarioSet nulls_for(const RunSpec& spec) {
    if (!spec.calibration) throw std::invalid_argument("run spec has no calibration block");
    auto nulls = build_nulls(spec.calibration->nulls, spec.scenarios);
    return nulls;
}

}  // namespace

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

std::vector<DesignRun> run_simulation(const RunSpec& spec, const std::filesystem::path& base_dir,
                                      const Progress& progress) {
    if (spec.scenarios.empty()) throw std::invalid_argument("run spec has no scenarios");
    if (spec.designs.empty()) throw std::invalid_argument("run spec has no designs");
    std::optional<NullScenarioSet> nulls;
    if (spec.calibration) {
        nulls = nulls_for(spec);
        for (const auto& w : nulls->validate()) report(progress, "warning: " + w);
    }
    std::vector<DesignRun> runs;
    for (const auto& design : spec.designs) {
        DesignRun run;
        run.design = design;
        run.label = policy_label(design.policy);
        const TrialConfig config = make_config(spec, design, base_dir);
        if (design.eta) {
            run.eta = *design.eta;
        } else if (nulls) {
            report(progress, "calibrating " + run.label + " on " + std::to_string(nulls->scenarios.size()) +
                                 " null scenarios x " + std::to_string(spec.calibration->replicas) + " replicas");
            run.calibration = calibrate(spec.calibration->rule, *nulls, config, spec.calibration->alpha,
                                        spec.calibration->replicas, spec.threads);
            run.eta = run.calibration->eta;
            report(progress, "  eta = " + fixed(run.eta, 4));
        } else {
            run.eta = spec.eta;
        }
        for (std::size_t s = 0; s < spec.scenarios.size(); ++s) {
            const auto name = scenario_label(spec.scenarios[s], s);
            report(progress, "simulating " + run.label + " on " + name + " (" + std::to_string(spec.replicas) +
                                 " replicas)");
            run.rows.push_back({name, run.label, replicate(spec.scenarios[s], config, spec.replicas, run.eta, spec.threads)});
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

void write_simulation(const std::filesystem::path& out, const RunSpec& spec, const std::vector<DesignRun>& runs) {
    std::vector<ResultRow> rows;
    json summary;
    summary["name"] = spec.name;
    summary["seed"] = spec.seed;
    summary["replicas"] = spec.replicas;
    summary["total"] = spec.total;
    summary["designs"] = json::array();
    for (const auto& r : runs) {
        json d;
        d["design"] = r.label;
        d["policy"] = to_json(r.design.policy);
        d["eta"] = r.eta;
        d["eta_source"] = r.design.eta ? "fixed" : (r.calibration ? "calibrated" : "default");
        d["results"] = json::array();
        for (const auto& row : r.rows) {
            json x = to_json(row.oc);
            x["scenario"] = row.scenario;
            d["results"].push_back(x);
            rows.push_back(row);
        }
        summary["designs"].push_back(d);
        if (r.calibration) write_json(out / "calibration" / (file_label(r.label) + ".json"), to_json(*r.calibration));
    }
    std::ostringstream csv;
    write_results_csv(csv, rows);
    write_text(out / "results.csv", csv.str());
    write_json(out / "summary.json", summary);
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

std::vector<CalibrationRun> run_calibration(const RunSpec& spec, const std::filesystem::path& base_dir,
                                            const Progress& progress) {
    if (spec.designs.empty()) throw std::invalid_argument("run spec has no designs");
    const auto nulls = nulls_for(spec);
    const auto warnings = nulls.validate();
    for (const auto& w : warnings) report(progress, "warning: " + w);
    std::vector<CalibrationRun> runs;
    for (const auto& design : spec.designs) {
        CalibrationRun run;
        run.label = policy_label(design.policy);
        run.warnings = warnings;
        const TrialConfig config = make_config(spec, design, base_dir);
        report(progress, "calibrating " + run.label + " on " + std::to_string(nulls.scenarios.size()) +
                             " null scenarios x " + std::to_string(spec.calibration->replicas) + " replicas");
        const auto pi = null_statistics(nulls, config, spec.calibration->replicas, spec.threads);
        for (auto rule : {ControlRule::strong, ControlRule::average}) {
            auto cal = calibrate_from_samples(rule, pi, nulls.weights, spec.calibration->alpha);
            cal.seed = config.seed;
            cal.design = run.label;
            for (std::size_t s = 0; s < nulls.scenarios.size(); ++s)
                cal.scenario_names.push_back(nulls.scenarios[s].name.empty() ? "null#" + std::to_string(s)
                                                                            : nulls.scenarios[s].name);
            (rule == ControlRule::strong ? run.strong : run.average) = std::move(cal);
        }
        report(progress, "  strong eta = " + fixed(run.strong.eta, 4) + ", average eta = " + fixed(run.average.eta, 4));
        runs.push_back(std::move(run));
    }
    return runs;
}

void write_calibration(const std::filesystem::path& out, const std::vector<CalibrationRun>& runs) {
    std::ostringstream csv;
    csv << "design,rule,eta,scenario,weight,individual_eta,type_i_rate\n";
    for (const auto& r : runs) {
        json j;
        j["design"] = r.label;
        j["strong"] = to_json(r.strong);
        j["average"] = to_json(r.average);
        j["warnings"] = r.warnings;
        write_json(out / "calibration" / (file_label(r.label) + ".json"), j);
        for (const auto* cal : {&r.strong, &r.average}) {
            for (std::size_t s = 0; s < cal->individual.size(); ++s) {
                csv << r.label << ',' << (cal == &r.strong ? "strong" : "average") << ',' << format_number(cal->eta)
                    << ',' << cal->scenario_names[s] << ',' << format_number(cal->weights[s]) << ','
                    << format_number(cal->individual[s]) << ',' << format_number(cal->realised[s]) << '\n';
            }
        }
    }
    write_text(out / "type_i.csv", csv.str());
}

// ---------------------------------------------------------------------------
// Kappa selection
// ---------------------------------------------------------------------------

std::vector<KappaRun> run_kappa(const RunSpec& spec, bool with_power, const Progress& progress) {
    if (!spec.kappa) throw std::invalid_argument("run spec has no kappa block");
    const auto& k = *spec.kappa;
    const auto grid = KappaGrid::range(k.grid_lo, k.grid_hi, k.grid_step);
    const auto ensemble = sample_ensemble(k.ensemble, static_cast<std::size_t>(k.arms),
                                          static_cast<std::size_t>(k.count), k.ensemble_seed);

    std::optional<NullScenarioSet> nulls;
    CalibrationSpec cal_spec;
    if (with_power) {
        if (spec.calibration) {
            cal_spec = *spec.calibration;
            nulls = build_nulls(cal_spec.nulls, spec.scenarios);
        } else {
            std::vector<double> sigma = k.ensemble.sigma;
            if (k.ensemble.sigma_bounds) sigma.assign(static_cast<std::size_t>(k.arms), k.ensemble.sigma_bounds->second);
            nulls = univariate_null_grid(quadratic_offsets(cal_spec.nulls.c_max, cal_spec.nulls.points), sigma,
                                         k.ensemble.target, k.ensemble.variance);
        }
    }

    TrialConfig base;
    base.total = spec.total;
    base.seed = spec.seed;
    std::optional<CutoffCalibration> fr_cal;
    if (with_power) {
        TrialConfig fr = base;
        fr.policy = PolicySpec{FixedRandomisation{}, k.fr_burn_in};
        report(progress, "calibrating FR cut-off");
        fr_cal = calibrate(cal_spec.rule, *nulls, fr, cal_spec.alpha, cal_spec.replicas, spec.threads);
    }

    std::vector<KappaRun> runs;
    for (double p : k.p) {
        KappaRun run;
        run.p = p;
        MetricOptions opt;
        opt.p = p;
        opt.total = spec.total;
        opt.burn_in = k.burn_in;
        opt.fr_burn_in = k.fr_burn_in;
        opt.replicas = k.replicas;
        opt.seed = spec.seed;
        opt.threads = spec.threads;
        if (with_power) {
            base.policy.burn_in = k.burn_in;
            report(progress, "calibrating " + std::to_string(grid.size()) + " cut-offs for p=" + fixed(p, 2));
            for (double kappa : grid.values) {
                TrialConfig c = base;
                c.policy.kind = WeSymmetric{p, kappa};
                run.calibrations.push_back(
                    calibrate(cal_spec.rule, *nulls, c, cal_spec.alpha, cal_spec.replicas, spec.threads));
                opt.eta.push_back(run.calibrations.back().eta);
            }
            run.fr_calibration = fr_cal;
            opt.fr_eta = fr_cal->eta;
            opt.metric = k.power_metric;
        }
        report(progress, "evaluating " + std::to_string(ensemble.scenarios.size()) + " scenarios x " +
                             std::to_string(grid.size() + 1) + " designs x " + std::to_string(k.replicas) +
                             " replicas for p=" + fixed(p, 2));
        run.cells = evaluate_cells(ensemble, grid, opt);
        run.pb = extract_metric(run.cells, KappaMetric::pb);
        run.g1 = select_kappa_pb(run.pb.u, run.pb.kappas);
        report(progress, "  g1 kappa* = " + fixed(run.g1.kappa, 2));
        if (with_power) {
            run.power = extract_metric(run.cells, k.power_metric);
            run.g2 = select_kappa_power(run.power->u, run.power->fr, run.power->kappas, k.xi, k.floor_frac);
            report(progress, "  g2 kappa* = " + fixed(run.g2->kappa, 2) + (run.g2->fallback ? " (fallback)" : ""));
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

void write_kappa(const std::filesystem::path& out, const std::vector<KappaRun>& runs) {
    std::ostringstream sel;
    sel << "p,kappa,g1,g1_selected,eta,attainment,g2_selected\n";
    json report = json::array();
    for (const auto& r : runs) {
        const std::string tag = "kappa_p" + fixed(r.p, 2);
        for (std::size_t i = 0; i < r.pb.kappas.size(); ++i) {
            sel << format_number(r.p) << ',' << format_number(r.pb.kappas[i]) << ',' << format_number(r.g1.objective[i])
                << ',' << (i == r.g1.index ? 1 : 0) << ',';
            if (r.g2) {
                sel << format_number(r.calibrations[i].eta) << ',' << format_number(r.g2->objective[i]) << ','
                    << (i == r.g2->index ? 1 : 0);
            } else {
                sel << "NA,NA,NA";
            }
            sel << '\n';
        }
        std::ostringstream pb;
        write_metric_csv(pb, r.pb);
        write_text(out / (tag + "_pb.csv"), pb.str());
        json j;
        j["p"] = r.p;
        j["g1"] = to_json(r.pb, r.g1);
        if (r.power) {
            std::ostringstream pw;
            write_metric_csv(pw, *r.power);
            write_text(out / (tag + "_power.csv"), pw.str());
            j["g2"] = to_json(*r.power, *r.g2);
            j["fr_eta"] = r.fr_calibration->eta;
            j["etas"] = json::array();
            for (const auto& c : r.calibrations) j["etas"].push_back(c.eta);
        }
        report.push_back(j);
    }
    write_text(out / "kappa_selection.csv", sel.str());
    write_json(out / "kappa.json", report);
}

}  // namespace wetrial
