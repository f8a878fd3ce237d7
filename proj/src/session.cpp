#include "wetrial/session.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "wetrial/io.hpp"

namespace wetrial {

using nlohmann::json;

const char* phase_name(Phase p) noexcept {
    switch (p) {
        case Phase::burn_in: return "burn_in";
        case Phase::adaptive: return "adaptive";
        case Phase::complete: return "complete";
    }
    return "burn_in";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
    return buf;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

SessionConfig parse_session_config(const json& body) {
    try {
        if (!body.is_object()) throw SpecError("$", "expected an object");
        for (const auto& item : body.items()) {
            static const char* allowed[] = {"arms", "policy", "total", "seed", "entry", "mv_draws", "gittins"};
            bool ok = false;
            for (const char* a : allowed) ok = ok || item.key() == a;
            if (!ok) throw SpecError("$." + item.key(), "unknown field");
        }
        SessionConfig c;
        if (!body.contains("arms") || !body["arms"].is_array() || body["arms"].size() < 2)
            throw SpecError("$.arms", "expected at least two arms");
        const auto& arms = body["arms"];
        const bool mv = arms[0].is_object() && arms[0].contains("target") && arms[0]["target"].is_array();
        for (std::size_t j = 0; j < arms.size(); ++j) {
            const std::string p = "$.arms[" + std::to_string(j) + "]";
            const auto& a = arms[j];
            if (!a.is_object()) throw SpecError(p, "expected an object");
            for (const auto& item : a.items())
                if (item.key() != "target" && item.key() != "sigma" && item.key() != "cov")
                    throw SpecError(p + "." + item.key(), "unknown field");
            if (!a.contains("target")) throw SpecError(p + ".target", "required");
            if (mv) {
                // Reuse the scenario reader for vector/matrix validation.
                json arm = {{"mean", a["target"]}, {"target", a["target"]}};
                if (a.contains("cov")) arm["cov"] = a["cov"];
                json sc = {{"arms", json::array({arm, arm})}};
                const auto parsed = parse_scenario(sc, p).mv_arms.front();
                c.mv_targets.push_back(parsed.target);
                c.covariances.push_back(parsed.cov);
            } else {
                if (!a["target"].is_number()) throw SpecError(p + ".target", "expected a number");
                c.targets.push_back(a["target"].get<double>());
                if (a.contains("sigma") && !a["sigma"].is_null()) {
                    if (!a["sigma"].is_number() || !(a["sigma"].get<double>() > 0.0))
                        throw SpecError(p + ".sigma", "must be a positive number");
                    c.sigma.emplace_back(a["sigma"].get<double>());
                } else {
                    c.sigma.emplace_back(std::nullopt);
                }
            }
        }
        if (body.contains("policy")) c.trial.policy = parse_policy(body["policy"], "$.policy");
        if (body.contains("total")) {
            if (!body["total"].is_number_integer() || body["total"].get<long long>() < 1)
                throw SpecError("$.total", "expected a positive integer");
            c.trial.total = body["total"].get<int>();
        }
        if (body.contains("seed")) {
            if (!body["seed"].is_number_unsigned() &&
                !(body["seed"].is_number_integer() && body["seed"].get<long long>() >= 0))
                throw SpecError("$.seed", "expected a nonnegative integer");
            c.trial.seed = body["seed"].get<std::uint64_t>();
        }
        if (body.contains("mv_draws")) {
            if (!body["mv_draws"].is_number_integer() || body["mv_draws"].get<long long>() < 1)
                throw SpecError("$.mv_draws", "expected a positive integer");
            c.trial.mv_draws = body["mv_draws"].get<std::uint64_t>();
        }
        if (body.contains("entry")) {
            const auto& e = body["entry"];
            if (e == "strict") c.entry = EntryMode::strict;
            else if (e == "free") c.entry = EntryMode::free;
            else throw SpecError("$.entry", "expected \"strict\" or \"free\"");
        }
        if (body.contains("gittins")) {
            if (!body["gittins"].is_string()) throw SpecError("$.gittins", "expected a path");
            c.gittins_path = body["gittins"].get<std::string>();
        }
        RunSpec rs;
        rs.total = c.trial.total;
        rs.seed = c.trial.seed;
        rs.mv_draws = c.trial.mv_draws;
        DesignSpec d{c.trial.policy, c.gittins_path, std::nullopt};
        try {
            c.trial = make_config(rs, d);
        } catch (const std::exception& e) {
            throw SpecError("$.gittins", e.what());
        }
        return c;
    } catch (const SpecError& e) {
        throw SessionInvalid(e.what());
    }
}

json to_json(const SessionConfig& c) {
    json j;
    json arms = json::array();
    if (c.multivariate()) {
        for (std::size_t i = 0; i < c.covariances.size(); ++i) {
            Scenario s;
            s.mv_arms = {MvArmTruth{c.mv_targets[i], c.covariances[i], c.mv_targets[i]}};
            const auto a = to_json(s)["arms"][0];
            arms.push_back({{"target", a["target"]}, {"cov", a["cov"]}});
        }
    } else {
        for (std::size_t i = 0; i < c.targets.size(); ++i) {
            json a = {{"target", c.targets[i]}};
            if (c.sigma[i]) a["sigma"] = *c.sigma[i];
            arms.push_back(a);
        }
    }
    j["arms"] = arms;
    j["policy"] = to_json(c.trial.policy);
    j["total"] = c.trial.total;
    j["seed"] = c.trial.seed;
    j["mv_draws"] = c.trial.mv_draws;
    j["entry"] = c.entry == EntryMode::strict ? "strict" : "free";
    if (!c.gittins_path.empty()) j["gittins"] = c.gittins_path;
    return j;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

namespace {

TrialState make_state(const SessionConfig& c) {
    try {
        if (c.multivariate()) return TrialState(c.mv_targets, c.covariances, c.trial);
        return TrialState(c.targets, c.sigma, c.trial);
    } catch (const std::exception& e) {
        throw SessionInvalid(e.what());
    }
}

}  // namespace

Session::Session(std::string id, SessionConfig config, std::string created_at)
    : id_(std::move(id)), created_at_(std::move(created_at)), config_(std::move(config)), state_(make_state(config_)) {}

Phase Session::phase() const noexcept {
    if (verdict_ || state_.complete()) return Phase::complete;
    return state_.in_burn_in() ? Phase::burn_in : Phase::adaptive;
}

Recommendation Session::recommend() const {
    if (phase() == Phase::complete) throw SessionConflict("session " + id_ + " is complete");
    Recommendation r;
    r.patient = state_.patients() + 1;
    try {
        r.arm = state_.recommend();
    } catch (const std::exception& e) {
        throw SessionConflict(std::string("no recommendation available: ") + e.what());
    }
    r.scores = state_.scores();
    r.maximise = state_.allocator().maximises();
    return r;
}

void Session::check_outcome(std::size_t arm, std::optional<int> patient) const {
    const int next = state_.patients() + 1;
    if (patient && *patient < next)
        throw SessionConflict("outcome for patient " + std::to_string(*patient) + " was already recorded");
    if (verdict_) throw SessionConflict("session " + id_ + " is finalized");
    if (state_.complete()) throw SessionConflict("session " + id_ + " already has all N outcomes");
    if (patient && *patient != next)
        throw SessionInvalid("patient index " + std::to_string(*patient) + " skips ahead of the next patient " +
                             std::to_string(next));
    if (arm >= state_.size())
        throw SessionInvalid("unknown arm " + std::to_string(arm + 1) + " (arms are 1.." +
                             std::to_string(state_.size()) + ")");
    if (config_.entry == EntryMode::strict) {
        const auto expected = recommend().arm;
        if (arm != expected)
            throw SessionConflict("strict entry: patient " + std::to_string(next) + " is assigned to arm " +
                                  std::to_string(expected + 1));
    }
}

int Session::record(std::size_t arm, double value, std::optional<int> patient) {
    if (config_.multivariate()) throw SessionInvalid("vector-endpoint session needs a vector value");
    if (!std::isfinite(value)) throw SessionInvalid("outcome value must be finite");
    check_outcome(arm, patient);
    state_.record(arm, value);
    return state_.patients();
}

int Session::record(std::size_t arm, const Eigen::VectorXd& value, std::optional<int> patient) {
    if (!config_.multivariate()) throw SessionInvalid("scalar-endpoint session needs a scalar value");
    if (!value.allFinite()) throw SessionInvalid("outcome value must be finite");
    if (value.size() != config_.mv_targets.front().size())
        throw SessionInvalid("outcome has dimension " + std::to_string(value.size()) + ", expected " +
                             std::to_string(config_.mv_targets.front().size()));
    check_outcome(arm, patient);
    state_.record(arm, value);
    return state_.patients();
}

Verdict Session::finalize(double eta, bool force) {
    if (!(eta > 0.0 && eta < 1.0)) throw SessionInvalid("eta must lie in (0, 1)");
    if (verdict_) throw SessionConflict("session " + id_ + " is already finalized");
    if (!state_.complete() && !force)
        throw SessionConflict("session " + id_ + " has " + std::to_string(state_.patients()) + " of " +
                              std::to_string(state_.total()) + " outcomes; pass force to finalize early");
    TrialOutcome o;
    try {
        o = state_.finish(true, config_.trial.mv_draws);
    } catch (const std::exception& e) {
        throw SessionConflict(std::string("cannot finalize: ") + e.what());
    }
    if (!std::isfinite(o.statistic)) throw SessionConflict("cannot finalize: statistic undefined on current data");
    Verdict v;
    v.best = o.best;
    v.second = o.second;
    v.statistic = o.statistic;
    v.eta = eta;
    v.reject = o.statistic > eta;
    v.forced = !state_.complete();
    verdict_ = v;
    return v;
}

// ---------------------------------------------------------------------------
// JSON views
// ---------------------------------------------------------------------------

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

json to_json(const Recommendation& r) {
    json scores = json::array();
    for (double s : r.scores) scores.push_back(finite_or_null(s));
    return {{"patient", r.patient}, {"arm", r.arm + 1}, {"gains", scores}, {"maximise", r.maximise}};
}

json to_json(const Verdict& v) {
    return {{"best", v.best + 1},   {"second", v.second + 1}, {"statistic", v.statistic},
            {"eta", v.eta},         {"reject", v.reject},     {"forced", v.forced}};
}

json session_resource(const Session& s) {
    json j;
    j["id"] = s.id();
    j["created_at"] = s.created_at();
    j["config"] = to_json(s.config());
    j["phase"] = phase_name(s.phase());
    j["patients"] = s.patients();
    j["total"] = s.state().total();
    std::vector<double> gains(s.state().size(), std::nan(""));
    if (s.phase() != Phase::complete) gains = s.state().scores();
    json arms = json::array();
    for (std::size_t a = 0; a < s.state().size(); ++a) {
        json x = {{"arm", a + 1}, {"gain", finite_or_null(gains[a])}};
        if (s.state().multivariate()) {
            const auto& m = s.state().mv_arms()[a];
            x["n"] = m.count;
            x["mean"] = m.count ? json(std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size())) : json(nullptr);
        } else {
            const auto& m = s.state().arms()[a];
            x["n"] = m.count;
            x["mean"] = m.count ? json(m.mean) : json(nullptr);
        }
        arms.push_back(x);
    }
    j["arms"] = arms;
    j["allocations"] = json::array();
    for (auto a : s.state().allocations()) j["allocations"].push_back(a + 1);
    j["verdict"] = s.verdict() ? to_json(*s.verdict()) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    // A torn final line from a crash would otherwise merge with the next record.
    if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
        std::ifstream in(path_, std::ios::binary);
        in.seekg(-1, std::ios::end);
        char last = 0;
        in.get(last);
        if (last != '\n') std::ofstream(path_, std::ios::app | std::ios::binary) << '\n';
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw std::runtime_error("cannot open event log " + path_.string());
}

void EventLog::append(const json& record) {
    std::lock_guard lock(mutex_);
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("event log write failed: " + path_.string());
}

std::vector<json> EventLog::read(const std::filesystem::path& path, std::size_t* skipped) {
    std::vector<json> out;
    if (skipped) *skipped = 0;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            if (skipped) ++*skipped;
        }
    }
    return out;
}

}  // namespace wetrial
