// wetrial: simulation, calibration, kappa selection and the live-trial service.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "wetrial/io.hpp"
#include "wetrial/runner.hpp"
#include "wetrial/service.hpp"

#ifndef WETRIAL_DATA_DIR
#define WETRIAL_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace wetrial;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> replicas;
    std::optional<int> calibration_replicas;
    std::optional<int> threads;
    std::optional<int> ensemble_size;
    std::string out;
};

void progress(const std::string& message) { std::cerr << message << std::endl; }

void apply(RunSpec& spec, const Overrides& o) {
    if (o.seed) spec.seed = *o.seed;
    if (o.replicas) {
        spec.replicas = *o.replicas;
        if (spec.kappa) spec.kappa->replicas = *o.replicas;
    }
    if (o.calibration_replicas) {
        if (!spec.calibration) throw std::invalid_argument("--calibration-replicas given but the run spec has no calibration block");
        spec.calibration->replicas = *o.calibration_replicas;
    }
    if (o.ensemble_size) {
        if (!spec.kappa) throw std::invalid_argument("--scenarios given but the run spec has no kappa block");
        spec.kappa->count = *o.ensemble_size;
    }
    if (o.threads) spec.threads = *o.threads;
}

// --out, then $WETRIAL_OUT/<spec name>, then the run spec output directory.
fs::path output_dir(const RunSpec& spec, const Overrides& o) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("WETRIAL_OUT"); env && *env) return fs::path(env) / spec.name;
    return spec.output_dir;
}

RunSpec load(const fs::path& path, const Overrides& o) {
    auto spec = load_runspec(path);
    apply(spec, o);
    return spec;
}

void finish(const fs::path& out, const RunSpec& spec) {
    write_runspec(spec, out / "spec.json");
    progress("wrote " + out.string());
}

void simulate(const fs::path& path, const Overrides& o) {
    const auto spec = load(path, o);
    const auto out = output_dir(spec, o);
    const auto runs = run_simulation(spec, path.parent_path(), progress);
    write_simulation(out, spec, runs);
    finish(out, spec);
}

void calibrate(const fs::path& path, const Overrides& o) {
    const auto spec = load(path, o);
    const auto out = output_dir(spec, o);
    const auto runs = run_calibration(spec, path.parent_path(), progress);
    write_calibration(out, runs);
    finish(out, spec);
}

void select_kappa(const fs::path& path, const Overrides& o, bool g1_only) {
    const auto spec = load(path, o);
    const auto out = output_dir(spec, o);
    const auto runs = run_kappa(spec, !g1_only, progress);
    write_kappa(out, runs);
    finish(out, spec);
}

void reproduce(const std::string& target, const fs::path& data, const Overrides& o, bool g1_only) {
    const auto specs = data / "specs";
    if (target == "table1") simulate(specs / "table1.json", o);
    else if (target == "table2") simulate(specs / "table2.json", o);
    else if (target == "fig2") calibrate(specs / "table1.json", o);
    else if (target == "fig3") select_kappa(specs / "kappa.json", o, g1_only);
    else if (target == "fig5") calibrate(specs / "table2.json", o);
    else throw std::invalid_argument("unknown target " + target);
}

int serve(const std::string& host, int port, const fs::path& log, std::string token) {
    if (token.empty())
        if (const char* env = std::getenv("WETRIAL_TOKEN")) token = env;
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ConductService service(log, token);
    if (service.skipped_records() > 0)
        progress("skipped " + std::to_string(service.skipped_records()) + " unreadable log records");
    progress("recovered " + std::to_string(service.session_count()) + " sessions from " + log.string());
    HttpServer server(service);
    const int bound = server.bind(host, port);
    progress("listening on http://" + host + ":" + std::to_string(bound) + "/v1");
    std::thread worker([&] { server.listen(); });
    int sig = 0;
    sigwait(&signals, &sig);
    progress("shutting down");
    server.stop();
    worker.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Response-adaptive multi-arm trial engine"};
    app.require_subcommand(1);
    Overrides o;
    std::string data_dir = WETRIAL_DATA_DIR;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", o.seed, "Master seed");
        cmd->add_option("--replicas", o.replicas, "Replicas per scenario (and per kappa cell)")->check(CLI::PositiveNumber);
        cmd->add_option("--calibration-replicas", o.calibration_replicas, "Replicas per null scenario")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--threads", o.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
        cmd->add_option("--out", o.out, "Output directory");
    };

    std::string spec_path;
    auto* sim = app.add_subcommand("simulate", "Operating characteristics of every design on every scenario");
    sim->add_option("spec", spec_path, "Run spec (JSON)")->required()->check(CLI::ExistingFile);
    common(sim);

    auto* cal = app.add_subcommand("calibrate", "Strong and average cut-offs over the null set");
    cal->add_option("spec", spec_path, "Run spec (JSON)")->required()->check(CLI::ExistingFile);
    common(cal);

    bool g1_only = false;
    auto* kap = app.add_subcommand("select-kappa", "Robust kappa selection over a scenario ensemble");
    kap->add_option("spec", spec_path, "Run spec (JSON)")->required()->check(CLI::ExistingFile);
    kap->add_option("--scenarios", o.ensemble_size, "Ensemble size")->check(CLI::PositiveNumber);
    kap->add_flag("--g1-only", g1_only, "Patient-benefit objective only (no calibration)");
    common(kap);

    std::string target;
    auto* rep = app.add_subcommand("reproduce", "Run a shipped study");
    rep->add_option("target", target, "table1 | table2 | fig2 | fig3 | fig5")
        ->required()
        ->check(CLI::IsMember({"table1", "table2", "fig2", "fig3", "fig5"}));
    rep->add_option("--data", data_dir, "Directory holding specs/ and gittins/")->capture_default_str();
    rep->add_option("--scenarios", o.ensemble_size, "Ensemble size (fig3)")->check(CLI::PositiveNumber);
    rep->add_flag("--g1-only", g1_only, "fig3: patient-benefit objective only");
    common(rep);

    std::string host = "127.0.0.1", log_path = "wetrial-events.jsonl", token;
    int port = 8080;
    auto* srv = app.add_subcommand("serve", "Start the live-trial HTTP service");
    srv->add_option("--host", host)->capture_default_str();
    srv->add_option("--port", port, "0 = any free port")->capture_default_str()->check(CLI::Range(0, 65535));
    srv->add_option("--log", log_path, "Event log (JSON lines)")->capture_default_str();
    srv->add_option("--token", token, "Bearer token (default $WETRIAL_TOKEN, empty = open)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) simulate(spec_path, o);
        else if (*cal) calibrate(spec_path, o);
        else if (*kap) select_kappa(spec_path, o, g1_only);
        else if (*rep) reproduce(target, data_dir, o, g1_only);
        else if (*srv) return serve(host, port, log_path, token);
    } catch (const SpecError& e) {
        std::cerr << "error: invalid spec: " << e.what() << std::endl;
        return 3;
    } catch (const InfeasibleCalibration& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
