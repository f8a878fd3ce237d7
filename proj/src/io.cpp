#include "wetrial/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

namespace wetrial {

using nlohmann::json;

namespace {

std::string at(const std::string& path, std::string_view key) { return path + "." + std::string(key); }
std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void check_object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw SpecError(path, "expected an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || item.key() == a;
        if (!ok) throw SpecError(at(path, item.key()), "unknown field");
    }
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw SpecError(path, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw SpecError(path, "must be finite");
    return x;
}

double positive(const json& j, const std::string& path) {
    const double x = number(j, path);
    if (!(x > 0.0)) throw SpecError(path, "must be positive");
    return x;
}

double probability(const json& j, const std::string& path) {
    const double x = number(j, path);
    if (!(x > 0.0 && x < 1.0)) throw SpecError(path, "must lie in (0, 1)");
    return x;
}

long long integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw SpecError(path, "expected an integer");
    return j.get<long long>();
}

int count(const json& j, const std::string& path, long long min = 1) {
    const long long n = integer(j, path);
    if (n < min || n > 1'000'000'000) throw SpecError(path, "must be an integer >= " + std::to_string(min));
    return static_cast<int>(n);
}

std::uint64_t seed_value(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
    throw SpecError(path, "expected a nonnegative integer");
}

std::string text(const json& j, const std::string& path) {
    if (!j.is_string()) throw SpecError(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
    if (!j.is_array()) throw SpecError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], at(path, i)));
    return out;
}

Eigen::VectorXd vector_of(const json& j, const std::string& path) {
    const auto v = numbers(j, path);
    if (v.empty()) throw SpecError(path, "must not be empty");
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_of(const json& j, const std::string& path, Eigen::Index dim) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim)
        throw SpecError(path, "expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
    Eigen::MatrixXd m(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const auto row = numbers(j[r], at(path, static_cast<std::size_t>(r)));
        if (static_cast<Eigen::Index>(row.size()) != dim)
            throw SpecError(at(path, static_cast<std::size_t>(r)), "row has the wrong length");
        for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

VarianceMode variance_mode(const json& j, const std::string& path) {
    const auto s = text(j, path);
    if (s == "known") return VarianceMode::known;
    if (s == "unknown") return VarianceMode::unknown;
    throw SpecError(path, "expected \"known\" or \"unknown\"");
}

const char* variance_name(VarianceMode v) { return v == VarianceMode::known ? "known" : "unknown"; }

const char* rule_name(ControlRule r) { return r == ControlRule::strong ? "strong" : "average"; }

const char* metric_name(KappaMetric m) {
    switch (m) {
        case KappaMetric::pb: return "pb";
        case KappaMetric::power_two_components: return "power_tc";
        case KappaMetric::power_conditional: return "power_conditional";
    }
    return "pb";
}

const char* grid_name(NullGridKind k) {
    switch (k) {
        case NullGridKind::quadratic: return "quadratic";
        case NullGridKind::sigma_cross: return "sigma_cross";
        case NullGridKind::bivariate: return "bivariate";
        case NullGridKind::explicit_list: return "explicit";
    }
    return "quadratic";
}

template <class T>
std::vector<T> list_of(const json& j, const std::string& path, T (*parse)(const json&, const std::string&)) {
    if (!j.is_array()) throw SpecError(path, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse(j[i], at(path, i)));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenarios and policies
// ---------------------------------------------------------------------------

Scenario parse_scenario(const json& j, const std::string& path) {
    check_object(j, path, {"name", "variance", "target", "cov", "arms"});
    Scenario s;
    if (j.contains("name")) s.name = text(j["name"], at(path, "name"));
    if (j.contains("variance")) s.variance = variance_mode(j["variance"], at(path, "variance"));
    if (!j.contains("arms")) throw SpecError(at(path, "arms"), "required");
    const auto& arms = j["arms"];
    const auto apath = at(path, "arms");
    if (!arms.is_array() || arms.size() < 2) throw SpecError(apath, "expected at least two arms");
    const bool mv = arms[0].is_object() && arms[0].contains("mean") && arms[0]["mean"].is_array();
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const auto p = at(apath, i);
        const auto& a = arms[i];
        check_object(a, p, {"mean", "sigma", "target", "cov"});
        if (!a.contains("mean")) throw SpecError(at(p, "mean"), "required");
        if (mv) {
            MvArmTruth t;
            t.mean = vector_of(a["mean"], at(p, "mean"));
            const auto dim = t.mean.size();
            if (a.contains("target")) t.target = vector_of(a["target"], at(p, "target"));
            else if (j.contains("target")) t.target = vector_of(j["target"], at(path, "target"));
            else t.target = Eigen::VectorXd::Zero(dim);
            if (t.target.size() != dim) throw SpecError(at(p, "target"), "dimension differs from mean");
            if (a.contains("cov")) t.cov = matrix_of(a["cov"], at(p, "cov"), dim);
            else if (j.contains("cov")) t.cov = matrix_of(j["cov"], at(path, "cov"), dim);
            else throw SpecError(at(p, "cov"), "required for vector endpoints");
            s.mv_arms.push_back(std::move(t));
        } else {
            ArmTruth t;
            t.mean = number(a["mean"], at(p, "mean"));
            if (!a.contains("sigma")) throw SpecError(at(p, "sigma"), "required");
            t.sigma = positive(a["sigma"], at(p, "sigma"));
            if (a.contains("target")) t.target = number(a["target"], at(p, "target"));
            else if (j.contains("target")) t.target = number(j["target"], at(path, "target"));
            s.arms.push_back(t);
        }
    }
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw SpecError(path, e.what());
    }
    return s;
}

json to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["variance"] = variance_name(s.variance);
    json arms = json::array();
    if (s.multivariate()) {
        for (const auto& a : s.mv_arms)
            arms.push_back({{"mean", vector_json(a.mean)}, {"cov", matrix_json(a.cov)}, {"target", vector_json(a.target)}});
    } else {
        for (const auto& a : s.arms) arms.push_back({{"mean", a.mean}, {"sigma", a.sigma}, {"target", a.target}});
    }
    j["arms"] = arms;
    return j;
}

namespace {

const std::initializer_list<std::string_view> policy_keys = {"policy", "burn_in", "allow_small_kappa", "draws", "mode",
                                                             "d", "p", "kappa", "a", "b", "gittins", "eta"};

PolicySpec parse_policy_fields(const json& j, const std::string& path) {
    PolicySpec spec;
    if (!j.contains("policy")) throw SpecError(at(path, "policy"), "required");
    const auto kind = text(j["policy"], at(path, "policy"));
    auto num = [&](const char* key, double def) { return j.contains(key) ? number(j[key], at(path, key)) : def; };
    if (j.contains("burn_in")) spec.burn_in = count(j["burn_in"], at(path, "burn_in"));
    if (j.contains("allow_small_kappa")) {
        if (!j["allow_small_kappa"].is_boolean()) throw SpecError(at(path, "allow_small_kappa"), "expected a boolean");
        spec.allow_small_kappa = j["allow_small_kappa"].get<bool>();
    }
    if (kind == "FR") {
        spec.kind = FixedRandomisation{};
    } else if (kind == "CB") {
        spec.kind = CurrentBelief{};
    } else if (kind == "TS") {
        ThompsonSampling ts;
        if (j.contains("draws")) ts.draws = count(j["draws"], at(path, "draws"), 100);
        if (j.contains("mode")) {
            const auto m = text(j["mode"], at(path, "mode"));
            if (m == "argmax") ts.mode = TsMode::argmax;
            else if (m == "sample") ts.mode = TsMode::sample;
            else throw SpecError(at(path, "mode"), "expected \"argmax\" or \"sample\"");
        }
        spec.kind = ts;
    } else if (kind == "SGI" || kind == "TGI") {
        const double d = num("d", 0.99);
        if (!(d > 0.0 && d < 1.0)) throw SpecError(at(path, "d"), "must lie in (0, 1)");
        if (kind == "SGI") spec.kind = SymmetricGittins{d};
        else spec.kind = TargetedGittins{d};
    } else if (kind == "WE") {
        const double p = num("p", 1.0), kappa = num("kappa", 0.55);
        if (kappa < 0.5 && !spec.allow_small_kappa)
            throw SpecError(at(path, "kappa"), "must be >= 0.5 unless allow_small_kappa is set");
        spec.kind = WeSymmetric{p, kappa};
    } else if (kind == "WE-asym") {
        WeAsymmetric w{num("a", 1.0), num("b", 1.0), num("kappa", 1.0)};
        if (!(w.a > 0.0)) throw SpecError(at(path, "a"), "must be positive");
        if (!(w.b > 0.0)) throw SpecError(at(path, "b"), "must be positive");
        spec.kind = w;
    } else if (kind == "WE-mv") {
        const double kappa = num("kappa", 0.5);
        if (kappa < 0.5 && !spec.allow_small_kappa)
            throw SpecError(at(path, "kappa"), "must be >= 0.5 unless allow_small_kappa is set");
        spec.kind = WeMultivariate{kappa};
    } else {
        throw SpecError(at(path, "policy"), "unknown policy \"" + kind + "\" (FR, CB, TS, SGI, TGI, WE, WE-asym, WE-mv)");
    }
    return spec;
}

DesignSpec parse_design(const json& j, const std::string& path) {
    check_object(j, path, policy_keys);
    DesignSpec d;
    d.policy = parse_policy_fields(j, path);
    if (j.contains("gittins")) d.gittins_path = text(j["gittins"], at(path, "gittins"));
    if (j.contains("eta")) d.eta = probability(j["eta"], at(path, "eta"));
    return d;
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

PolicySpec parse_policy(const json& j, const std::string& path) {
    check_object(j, path, policy_keys);
    return parse_policy_fields(j, path);
}

json to_json(const PolicySpec& p) {
    json j;
    std::visit(overloaded{
                   [&](const FixedRandomisation&) { j["policy"] = "FR"; },
                   [&](const CurrentBelief&) { j["policy"] = "CB"; },
                   [&](const ThompsonSampling& t) {
                       j["policy"] = "TS";
                       j["draws"] = t.draws;
                       j["mode"] = t.mode == TsMode::argmax ? "argmax" : "sample";
                   },
                   [&](const SymmetricGittins& g) {
                       j["policy"] = "SGI";
                       j["d"] = g.d;
                   },
                   [&](const TargetedGittins& g) {
                       j["policy"] = "TGI";
                       j["d"] = g.d;
                   },
                   [&](const WeSymmetric& w) {
                       j["policy"] = "WE";
                       j["p"] = w.p;
                       j["kappa"] = w.kappa;
                   },
                   [&](const WeAsymmetric& w) {
                       j["policy"] = "WE-asym";
                       j["a"] = w.a;
                       j["b"] = w.b;
                       j["kappa"] = w.kappa;
                   },
                   [&](const WeMultivariate& w) {
                       j["policy"] = "WE-mv";
                       j["kappa"] = w.kappa;
                   },
               },
               p.kind);
    j["burn_in"] = p.burn_in;
    if (p.allow_small_kappa) j["allow_small_kappa"] = true;
    return j;
}

// ---------------------------------------------------------------------------
// Run specs
// ---------------------------------------------------------------------------

namespace {

NullGridSpec parse_nulls(const json& j, const std::string& path) {
    check_object(j, path,
                 {"kind", "c_max", "points", "offsets", "sigma", "sigmas", "target", "variance", "c1", "c2", "scenarios",
                  "weights"});
    NullGridSpec g;
    const auto kind = j.contains("kind") ? text(j["kind"], at(path, "kind")) : std::string("quadratic");
    if (kind == "quadratic") g.kind = NullGridKind::quadratic;
    else if (kind == "sigma_cross") g.kind = NullGridKind::sigma_cross;
    else if (kind == "bivariate") g.kind = NullGridKind::bivariate;
    else if (kind == "explicit") g.kind = NullGridKind::explicit_list;
    else throw SpecError(at(path, "kind"), "expected quadratic, sigma_cross, bivariate or explicit");
    if (j.contains("c_max")) g.c_max = positive(j["c_max"], at(path, "c_max"));
    if (j.contains("points")) g.points = count(j["points"], at(path, "points"), 2);
    if (j.contains("offsets")) g.offsets = numbers(j["offsets"], at(path, "offsets"));
    if (j.contains("sigma")) g.sigma = numbers(j["sigma"], at(path, "sigma"));
    if (j.contains("sigmas")) {
        const auto& s = j["sigmas"];
        if (!s.is_array()) throw SpecError(at(path, "sigmas"), "expected an array of sigma patterns");
        for (std::size_t i = 0; i < s.size(); ++i) g.sigmas.push_back(numbers(s[i], at(at(path, "sigmas"), i)));
    }
    if (j.contains("target")) g.target = number(j["target"], at(path, "target"));
    if (j.contains("variance")) g.variance = variance_mode(j["variance"], at(path, "variance"));
    if (j.contains("c1")) g.c1 = numbers(j["c1"], at(path, "c1"));
    if (j.contains("c2")) g.c2 = numbers(j["c2"], at(path, "c2"));
    if (j.contains("scenarios")) g.scenarios = list_of<Scenario>(j["scenarios"], at(path, "scenarios"), parse_scenario);
    if (j.contains("weights")) g.weights = numbers(j["weights"], at(path, "weights"));
    if (g.kind == NullGridKind::sigma_cross && (g.offsets.empty() || g.sigmas.empty()))
        throw SpecError(path, "sigma_cross needs offsets and sigmas");
    if (g.kind == NullGridKind::explicit_list && g.scenarios.empty())
        throw SpecError(at(path, "scenarios"), "explicit null set is empty");
    if (g.kind == NullGridKind::bivariate && g.c1.empty() != g.c2.empty())
        throw SpecError(at(path, g.c1.empty() ? "c1" : "c2"), "c1 and c2 must be given together");
    return g;
}

json nulls_json(const NullGridSpec& g) {
    json j;
    j["kind"] = grid_name(g.kind);
    switch (g.kind) {
        case NullGridKind::quadratic:
            j["c_max"] = g.c_max;
            j["points"] = g.points;
            if (!g.offsets.empty()) j["offsets"] = g.offsets;
            if (!g.sigma.empty()) j["sigma"] = g.sigma;
            j["target"] = g.target;
            j["variance"] = variance_name(g.variance);
            break;
        case NullGridKind::sigma_cross:
            j["offsets"] = g.offsets;
            j["sigmas"] = g.sigmas;
            j["target"] = g.target;
            j["variance"] = variance_name(g.variance);
            break;
        case NullGridKind::bivariate:
            if (!g.c1.empty()) {
                j["c1"] = g.c1;
                j["c2"] = g.c2;
            }
            break;
        case NullGridKind::explicit_list: {
            json s = json::array();
            for (const auto& sc : g.scenarios) s.push_back(to_json(sc));
            j["scenarios"] = s;
            break;
        }
    }
    if (!g.weights.empty()) j["weights"] = g.weights;
    return j;
}

CalibrationSpec parse_calibration(const json& j, const std::string& path) {
    check_object(j, path, {"rule", "alpha", "replicas", "nulls"});
    CalibrationSpec c;
    if (j.contains("rule")) {
        const auto r = text(j["rule"], at(path, "rule"));
        if (r == "strong") c.rule = ControlRule::strong;
        else if (r == "average") c.rule = ControlRule::average;
        else throw SpecError(at(path, "rule"), "expected \"strong\" or \"average\"");
    }
    if (j.contains("alpha")) c.alpha = probability(j["alpha"], at(path, "alpha"));
    if (j.contains("replicas")) c.replicas = count(j["replicas"], at(path, "replicas"));
    if (j.contains("nulls")) c.nulls = parse_nulls(j["nulls"], at(path, "nulls"));
    return c;
}

KappaSpec parse_kappa(const json& j, const std::string& path) {
    check_object(j, path,
                 {"arms", "count", "seed", "mean", "sigma", "sigma_bounds", "target", "variance", "grid", "p", "metric",
                  "replicas", "burn_in", "fr_burn_in", "xi", "floor"});
    KappaSpec k;
    if (j.contains("arms")) k.arms = count(j["arms"], at(path, "arms"), 2);
    if (j.contains("count")) k.count = count(j["count"], at(path, "count"));
    if (j.contains("seed")) k.ensemble_seed = seed_value(j["seed"], at(path, "seed"));
    if (j.contains("mean")) {
        const auto b = numbers(j["mean"], at(path, "mean"));
        if (b.size() != 2 || b[0] > b[1]) throw SpecError(at(path, "mean"), "expected [lo, hi] with lo <= hi");
        k.ensemble.mean_lo = b[0];
        k.ensemble.mean_hi = b[1];
    }
    if (j.contains("sigma")) k.ensemble.sigma = numbers(j["sigma"], at(path, "sigma"));
    else {
        // Default pattern (2, ..., 2, 4).
        k.ensemble.sigma.assign(static_cast<std::size_t>(k.arms), 2.0);
        k.ensemble.sigma.back() = 4.0;
    }
    if (j.contains("sigma_bounds")) {
        const auto b = numbers(j["sigma_bounds"], at(path, "sigma_bounds"));
        if (b.size() != 2 || !(b[0] > 0.0) || b[0] > b[1])
            throw SpecError(at(path, "sigma_bounds"), "expected [lo, hi] with 0 < lo <= hi");
        k.ensemble.sigma_bounds = std::make_pair(b[0], b[1]);
    }
    if (j.contains("target")) k.ensemble.target = number(j["target"], at(path, "target"));
    if (j.contains("variance")) k.ensemble.variance = variance_mode(j["variance"], at(path, "variance"));
    if (j.contains("grid")) {
        const auto g = numbers(j["grid"], at(path, "grid"));
        if (g.size() != 3 || !(g[2] > 0.0) || g[0] > g[1])
            throw SpecError(at(path, "grid"), "expected [lo, hi, step] with lo <= hi and step > 0");
        k.grid_lo = g[0];
        k.grid_hi = g[1];
        k.grid_step = g[2];
    }
    if (j.contains("p")) k.p = numbers(j["p"], at(path, "p"));
    if (j.contains("metric")) {
        const auto m = text(j["metric"], at(path, "metric"));
        if (m == "power_tc") k.power_metric = KappaMetric::power_two_components;
        else if (m == "power_conditional") k.power_metric = KappaMetric::power_conditional;
        else throw SpecError(at(path, "metric"), "expected power_tc or power_conditional");
    }
    if (j.contains("replicas")) k.replicas = count(j["replicas"], at(path, "replicas"));
    if (j.contains("burn_in")) k.burn_in = count(j["burn_in"], at(path, "burn_in"));
    if (j.contains("fr_burn_in")) k.fr_burn_in = count(j["fr_burn_in"], at(path, "fr_burn_in"));
    if (j.contains("xi")) {
        k.xi = number(j["xi"], at(path, "xi"));
        if (k.xi < 0.0 || k.xi > 1.0) throw SpecError(at(path, "xi"), "must lie in [0, 1]");
    }
    if (j.contains("floor")) k.floor_frac = positive(j["floor"], at(path, "floor"));
    if (!k.ensemble.sigma_bounds && k.ensemble.sigma.size() != static_cast<std::size_t>(k.arms))
        throw SpecError(at(path, "sigma"), "needs one entry per arm");
    try {
        k.ensemble.validate();
    } catch (const std::exception& e) {
        throw SpecError(path, e.what());
    }
    return k;
}

json kappa_json(const KappaSpec& k) {
    json j;
    j["arms"] = k.arms;
    j["count"] = k.count;
    j["seed"] = k.ensemble_seed;
    j["mean"] = {k.ensemble.mean_lo, k.ensemble.mean_hi};
    j["sigma"] = k.ensemble.sigma;
    if (k.ensemble.sigma_bounds) j["sigma_bounds"] = {k.ensemble.sigma_bounds->first, k.ensemble.sigma_bounds->second};
    j["target"] = k.ensemble.target;
    j["variance"] = variance_name(k.ensemble.variance);
    j["grid"] = {k.grid_lo, k.grid_hi, k.grid_step};
    j["p"] = k.p;
    j["metric"] = metric_name(k.power_metric);
    j["replicas"] = k.replicas;
    j["burn_in"] = k.burn_in;
    j["fr_burn_in"] = k.fr_burn_in;
    j["xi"] = k.xi;
    j["floor"] = k.floor_frac;
    return j;
}

}  // namespace

RunSpec parse_runspec(const json& j) {
    const std::string root = "$";
    check_object(j, root,
                 {"name", "seed", "replicas", "threads", "total", "mv_draws", "eta", "scenarios", "designs",
                  "calibration", "kappa", "output"});
    RunSpec r;
    if (j.contains("name")) r.name = text(j["name"], at(root, "name"));
    if (j.contains("seed")) r.seed = seed_value(j["seed"], at(root, "seed"));
    if (j.contains("replicas")) r.replicas = count(j["replicas"], at(root, "replicas"));
    if (j.contains("threads")) r.threads = count(j["threads"], at(root, "threads"), 0);
    if (j.contains("total")) r.total = count(j["total"], at(root, "total"));
    if (j.contains("mv_draws")) r.mv_draws = static_cast<std::uint64_t>(count(j["mv_draws"], at(root, "mv_draws")));
    if (j.contains("eta")) r.eta = probability(j["eta"], at(root, "eta"));
    if (j.contains("scenarios")) r.scenarios = list_of<Scenario>(j["scenarios"], at(root, "scenarios"), parse_scenario);
    if (j.contains("designs")) r.designs = list_of<DesignSpec>(j["designs"], at(root, "designs"), parse_design);
    if (j.contains("calibration")) r.calibration = parse_calibration(j["calibration"], at(root, "calibration"));
    if (j.contains("kappa")) r.kappa = parse_kappa(j["kappa"], at(root, "kappa"));
    if (j.contains("output")) {
        const auto p = at(root, "output");
        check_object(j["output"], p, {"dir"});
        if (j["output"].contains("dir")) r.output_dir = text(j["output"]["dir"], at(p, "dir"));
    }
    for (std::size_t i = 0; i < r.designs.size(); ++i) {
        const auto& d = r.designs[i];
        for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
            const int k = static_cast<int>(r.scenarios[s].size());
            if (r.total < k * d.policy.burn_in)
                throw SpecError(at(at(root, "designs"), i) + ".burn_in",
                                "N=" + std::to_string(r.total) + " is smaller than K*B for " + at(at(root, "scenarios"), s));
            if (r.scenarios[s].variance == VarianceMode::unknown && d.policy.burn_in < 2)
                throw SpecError(at(at(root, "designs"), i) + ".burn_in", "unknown variances need burn_in >= 2");
        }
    }
    return r;
}

RunSpec load_runspec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open run spec " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw SpecError("$", std::string("malformed JSON in ") + path.string() + ": " + e.what());
    }
    return parse_runspec(j);
}

json to_json(const RunSpec& r) {
    json j;
    j["name"] = r.name;
    j["seed"] = r.seed;
    j["replicas"] = r.replicas;
    j["threads"] = r.threads;
    j["total"] = r.total;
    j["mv_draws"] = r.mv_draws;
    j["eta"] = r.eta;
    json s = json::array();
    for (const auto& sc : r.scenarios) s.push_back(to_json(sc));
    j["scenarios"] = s;
    json d = json::array();
    for (const auto& ds : r.designs) {
        json x = to_json(ds.policy);
        if (!ds.gittins_path.empty()) x["gittins"] = ds.gittins_path;
        if (ds.eta) x["eta"] = *ds.eta;
        d.push_back(x);
    }
    j["designs"] = d;
    if (r.calibration) {
        j["calibration"] = {{"rule", rule_name(r.calibration->rule)},
                            {"alpha", r.calibration->alpha},
                            {"replicas", r.calibration->replicas},
                            {"nulls", nulls_json(r.calibration->nulls)}};
    }
    if (r.kappa) j["kappa"] = kappa_json(*r.kappa);
    j["output"] = {{"dir", r.output_dir}};
    return j;
}

void write_runspec(const RunSpec& spec, const std::filesystem::path& path) { write_json(path, to_json(spec)); }

NullScenarioSet build_nulls(const NullGridSpec& g, const std::vector<Scenario>& scenarios) {
    const Scenario* ref = scenarios.empty() ? nullptr : &scenarios.front();
    NullScenarioSet set;
    switch (g.kind) {
        case NullGridKind::quadratic: {
            auto sigma = g.sigma;
            if (sigma.empty()) {
                if (!ref || ref->multivariate()) throw SpecError("$.calibration.nulls.sigma", "required without a scalar scenario");
                for (const auto& a : ref->arms) sigma.push_back(a.sigma);
            }
            const auto offsets = g.offsets.empty() ? quadratic_offsets(g.c_max, g.points) : g.offsets;
            set = univariate_null_grid(offsets, sigma, g.target, g.variance);
            break;
        }
        case NullGridKind::sigma_cross:
            set = sigma_cross_null_grid(g.offsets, g.sigmas, g.target, g.variance);
            break;
        case NullGridKind::bivariate: {
            if (!ref || !ref->multivariate())
                throw SpecError("$.calibration.nulls", "bivariate nulls need a vector-endpoint scenario");
            const auto& a = ref->mv_arms.front();
            set = g.c1.empty() ? default_bivariate_nulls(ref->size(), a.cov, a.target)
                               : bivariate_null_grid(g.c1, g.c2, ref->size(), a.cov, a.target);
            break;
        }
        case NullGridKind::explicit_list:
            set.scenarios = g.scenarios;
            break;
    }
    set.weights = g.weights;
    if (!set.weights.empty() && set.weights.size() != set.scenarios.size())
        throw SpecError("$.calibration.nulls.weights", "one weight per null scenario is required");
    return set;
}

TrialConfig make_config(const RunSpec& spec, const DesignSpec& design, const std::filesystem::path& base_dir) {
    TrialConfig c;
    c.total = spec.total;
    c.policy = design.policy;
    c.seed = spec.seed;
    c.mv_draws = spec.mv_draws;
    const double* d = nullptr;
    if (const auto* g = std::get_if<SymmetricGittins>(&design.policy.kind)) d = &g->d;
    if (const auto* g = std::get_if<TargetedGittins>(&design.policy.kind)) d = &g->d;
    if (d) {
        if (design.gittins_path.empty()) {
            c.gittins = std::make_shared<GittinsTable>(GittinsTable::zero(*d));
        } else {
            std::filesystem::path p = design.gittins_path;
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            c.gittins = std::make_shared<GittinsTable>(GittinsTable::load(p));
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

std::string format_number(double x) {
    if (std::isnan(x)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "scenario,design,replicas,eta,PB,PB_se,CS_I,CS_I_II,power_conditional,power_two_components,rejection_rate\n";
    for (const auto& r : rows) {
        const auto& o = r.oc;
        out << r.scenario << ',' << r.design << ',' << o.replicas << ',' << format_number(o.eta) << ','
            << format_number(o.pb) << ',' << format_number(o.pb_se) << ',' << format_number(o.cs_best) << ','
            << format_number(o.cs_best_two) << ','
            << (o.power_conditional ? format_number(*o.power_conditional) : std::string("NA")) << ','
            << format_number(o.power_two_components) << ',' << format_number(o.rejection_rate) << '\n';
    }
}

json to_json(const OperatingCharacteristics& o) {
    json j;
    j["replicas"] = o.replicas;
    j["eta"] = o.eta;
    j["pb"] = o.pb;
    j["pb_se"] = o.pb_se;
    j["cs_best"] = o.cs_best;
    j["cs_best_two"] = o.cs_best_two;
    j["power_conditional"] = o.power_conditional ? json(*o.power_conditional) : json(nullptr);
    j["power_two_components"] = o.power_two_components;
    j["rejection_rate"] = o.rejection_rate;
    return j;
}

json to_json(const CutoffCalibration& c) {
    json j;
    j["design"] = c.design;
    j["rule"] = rule_name(c.rule);
    j["alpha"] = c.alpha;
    j["replicas"] = c.replicas;
    j["seed"] = c.seed;
    j["eta"] = c.eta;
    j["realised_mean"] = c.realised_mean;
    json s = json::array();
    for (std::size_t i = 0; i < c.individual.size(); ++i) {
        s.push_back({{"scenario", i < c.scenario_names.size() ? c.scenario_names[i] : std::to_string(i)},
                     {"weight", c.weights.at(i)},
                     {"individual_eta", c.individual[i]},
                     {"realised_rate", c.realised.at(i)}});
    }
    j["scenarios"] = s;
    return j;
}

json to_json(const MetricMatrix& m, const KappaSelection& sel) {
    json j;
    j["metric"] = metric_name(m.metric);
    j["p"] = m.p;
    j["kappas"] = m.kappas;
    j["objective"] = sel.objective;
    j["selected_kappa"] = sel.kappa;
    j["fallback"] = sel.fallback;
    j["scenarios"] = m.u.size();
    return j;
}

void write_metric_csv(std::ostream& out, const MetricMatrix& m) {
    out << "scenario,FR";
    for (double k : m.kappas) out << ",k" << format_number(k);
    out << '\n';
    for (std::size_t s = 0; s < m.u.size(); ++s) {
        out << s << ',' << format_number(m.fr.at(s));
        for (double v : m.u[s]) out << ',' << format_number(v);
        out << '\n';
    }
}

void write_selection_csv(std::ostream& out, const std::vector<double>& kappas, const KappaSelection& sel) {
    out << "kappa,objective,selected\n";
    for (std::size_t k = 0; k < kappas.size(); ++k)
        out << format_number(kappas[k]) << ',' << format_number(sel.objective.at(k)) << ',' << (k == sel.index ? 1 : 0)
            << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace wetrial
