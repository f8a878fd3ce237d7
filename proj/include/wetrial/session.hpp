#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "wetrial/trial.hpp"

namespace wetrial {

// strict: every outcome must be for the arm the engine recommends next.
// free: outcomes may arrive for any arm.
enum class EntryMode { strict, free };
enum class Phase { burn_in, adaptive, complete };

const char* phase_name(Phase p) noexcept;

// Request could not be applied in the current state (HTTP 409).
class SessionConflict : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-range input (HTTP 422).
class SessionInvalid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SessionConfig {
    // Scalar endpoint: one target per arm, sigma per arm when known.
    std::vector<double> targets;
    std::vector<std::optional<double>> sigma;
    // Vector endpoint.
    std::vector<Eigen::VectorXd> mv_targets;
    std::vector<Eigen::MatrixXd> covariances;

    TrialConfig trial;
    std::string gittins_path;
    EntryMode entry = EntryMode::strict;

    bool multivariate() const noexcept { return !covariances.empty(); }
};

// Request body of POST /v1/sessions; throws SessionInvalid with the field path.
SessionConfig parse_session_config(const nlohmann::json& body);
nlohmann::json to_json(const SessionConfig& config);

struct Recommendation {
    int patient = 0;  // 1-based index of the next patient
    std::size_t arm = 0;
    std::vector<double> scores;  // NaN while some arm lacks a posterior
    bool maximise = true;
};

struct Verdict {
    std::size_t best = 0;
    std::size_t second = 1;
    double statistic = 0.0;
    double eta = 0.95;
    bool reject = false;
    bool forced = false;
};

// One live trial. Not thread-safe; the service serialises access.
class Session {
public:
    Session(std::string id, SessionConfig config, std::string created_at);

    const std::string& id() const noexcept { return id_; }
    const std::string& created_at() const noexcept { return created_at_; }
    const SessionConfig& config() const noexcept { return config_; }
    const TrialState& state() const noexcept { return state_; }
    Phase phase() const noexcept;
    int patients() const noexcept { return state_.patients(); }
    const std::optional<Verdict>& verdict() const noexcept { return verdict_; }

    Recommendation recommend() const;

    // patient, when given, must be the next index; an index already recorded
    // is a conflict. Returns the 1-based patient index recorded.
    int record(std::size_t arm, double value, std::optional<int> patient = std::nullopt);
    int record(std::size_t arm, const Eigen::VectorXd& value, std::optional<int> patient = std::nullopt);

    // Requires all N outcomes unless forced; a session is finalized once.
    Verdict finalize(double eta, bool force = false);

private:
    void check_outcome(std::size_t arm, std::optional<int> patient) const;

    std::string id_;
    std::string created_at_;
    SessionConfig config_;
    TrialState state_;
    std::optional<Verdict> verdict_;
};

nlohmann::json to_json(const Recommendation& r);
nlohmann::json to_json(const Verdict& v);
// Session resource: id, created_at, config, phase, patients, per-arm summary.
nlohmann::json session_resource(const Session& s);

// Append-only newline-delimited JSON log. Records:
//   {"ts","session","type":"create","config"}
//   {"ts","session","type":"outcome","patient","arm","value"}
//   {"ts","session","type":"finalize","eta","force"}
// Arms are 1-based in the log as in the HTTP API.
class EventLog {
public:
    explicit EventLog(std::filesystem::path path);

    const std::filesystem::path& path() const noexcept { return path_; }
    // Writes one line and flushes.
    void append(const nlohmann::json& record);

    // Records in file order. Lines that do not parse (a record torn by a
    // crash mid-write) are skipped and counted in `skipped`.
    static std::vector<nlohmann::json> read(const std::filesystem::path& path, std::size_t* skipped = nullptr);

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

std::string utc_timestamp();

}  // namespace wetrial
