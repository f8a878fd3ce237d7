#include "wetrial/service.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>
#include <regex>
#include <stdexcept>

#include "httplib.h"

namespace wetrial {

using nlohmann::json;

namespace {

ServiceResponse error(int status, const std::string& message) {
    return {status, {{"error", {{"status", status}, {"message", message}}}}};
}

json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw SessionInvalid(std::string("malformed JSON body: ") + e.what());
    }
}

std::size_t arm_index(const json& body, std::size_t arms) {
    if (!body.contains("arm")) throw SessionInvalid("$.arm: required");
    if (!body["arm"].is_number_integer()) throw SessionInvalid("$.arm: expected an integer");
    const long long a = body["arm"].get<long long>();
    if (a < 1 || static_cast<std::size_t>(a) > arms)
        throw SessionInvalid("$.arm: unknown arm " + std::to_string(a) + " (arms are 1.." + std::to_string(arms) + ")");
    return static_cast<std::size_t>(a - 1);
}

}  // namespace

ConductService::ConductService(std::filesystem::path log_path, std::string token)
    : token_(std::move(token)), log_(std::move(log_path)) {
    recover();
}

std::size_t ConductService::session_count() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
}

std::shared_ptr<ConductService::Entry> ConductService::find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

// Outcome and finalize records share this path with live requests, so a
// recovered session is built by exactly the same state transitions.
void ConductService::apply(Session& s, const json& r) {
    const auto type = r.at("type").get<std::string>();
    if (type == "outcome") {
        const std::size_t arm = arm_index(r, s.state().size());
        std::optional<int> patient;
        if (r.contains("patient")) patient = r["patient"].get<int>();
        const auto& v = r.at("value");
        if (v.is_array()) {
            const auto x = v.get<std::vector<double>>();
            s.record(arm, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())), patient);
        } else {
            if (!v.is_number()) throw SessionInvalid("$.value: expected a number");
            s.record(arm, v.get<double>(), patient);
        }
    } else if (type == "finalize") {
        if (!r.contains("eta") || !r["eta"].is_number()) throw SessionInvalid("$.eta: expected a number");
        bool force = false;
        if (r.contains("force")) {
            if (!r["force"].is_boolean()) throw SessionInvalid("$.force: expected a boolean");
            force = r["force"].get<bool>();
        }
        s.finalize(r["eta"].get<double>(), force);
    } else {
        throw std::runtime_error("unknown event type " + type);
    }
}

void ConductService::recover() {
    const auto records = EventLog::read(log_.path(), &skipped_);
    std::size_t line = 0;
    for (const auto& r : records) {
        ++line;
        try {
            const auto id = r.at("session").get<std::string>();
            if (r.at("type") == "create") {
                auto e = std::make_shared<Entry>(Session(id, parse_session_config(r.at("config")), r.at("ts")));
                sessions_[id] = e;
                unsigned long n = 0;
                if (std::sscanf(id.c_str(), "s%lu", &n) == 1) next_id_ = std::max<std::size_t>(next_id_, n + 1);
            } else {
                const auto it = sessions_.find(id);
                if (it == sessions_.end()) throw std::runtime_error("event for unknown session " + id);
                apply(it->second->session, r);
            }
        } catch (const std::exception& ex) {
            throw std::runtime_error("event log " + log_.path().string() + ", record " + std::to_string(line) +
                                     ": " + ex.what());
        }
    }
}

ServiceResponse ConductService::create(const json& body) {
    auto config = parse_session_config(body);
    std::unique_lock lock(map_mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", next_id_);
    const auto ts = utc_timestamp();
    auto e = std::make_shared<Entry>(Session(id, std::move(config), ts));
    log_.append({{"ts", ts}, {"session", id}, {"type", "create"}, {"config", to_json(e->session.config())}});
    ++next_id_;
    sessions_[id] = e;
    return {201, session_resource(e->session)};
}

ServiceResponse ConductService::outcome(Entry& e, const json& body) {
    for (const auto& item : body.items())
        if (item.key() != "arm" && item.key() != "value" && item.key() != "patient")
            throw SessionInvalid("$." + item.key() + ": unknown field");
    if (!body.contains("value")) throw SessionInvalid("$.value: required");
    if (body.contains("patient") && !body["patient"].is_number_integer())
        throw SessionInvalid("$.patient: expected an integer");
    const auto& v = body["value"];
    if (v.is_array()) {
        for (const auto& x : v)
            if (!x.is_number()) throw SessionInvalid("$.value: expected numbers");
    } else if (!v.is_number()) {
        throw SessionInvalid("$.value: expected a number");
    }
    std::unique_lock lock(e.mutex);
    json record = {{"ts", utc_timestamp()}, {"session", e.session.id()}, {"type", "outcome"}};
    record["patient"] = body.contains("patient") ? body["patient"].get<int>() : e.session.patients() + 1;
    record["arm"] = body.contains("arm") ? body["arm"] : json(nullptr);
    record["value"] = v;
    Session backup = e.session;
    apply(e.session, record);
    try {
        log_.append(record);
    } catch (...) {
        e.session = std::move(backup);
        throw;
    }
    return {200, {{"patient", e.session.patients()}, {"session", session_resource(e.session)}}};
}

ServiceResponse ConductService::finalize(Entry& e, const json& body) {
    for (const auto& item : body.items())
        if (item.key() != "eta" && item.key() != "force") throw SessionInvalid("$." + item.key() + ": unknown field");
    std::unique_lock lock(e.mutex);
    json record = {{"ts", utc_timestamp()}, {"session", e.session.id()}, {"type", "finalize"}};
    record["eta"] = body.contains("eta") ? body["eta"] : json(nullptr);
    if (body.contains("force")) record["force"] = body["force"];
    Session backup = e.session;
    apply(e.session, record);
    try {
        log_.append(record);
    } catch (...) {
        e.session = std::move(backup);
        throw;
    }
    return {200, to_json(*e.session.verdict())};
}

ServiceResponse ConductService::handle(const std::string& method, const std::string& path, const std::string& body,
                                       const std::string& authorization) {
    static const std::regex session_route(R"(^/v1/sessions/([A-Za-z0-9_-]+)(/recommendation|/outcomes|/finalize)?/?$)");
    try {
        if (!token_.empty() && authorization != "Bearer " + token_) return error(401, "missing or invalid token");
        if (path == "/v1/health" && method == "GET") return {200, {{"status", "ok"}}};
        if (path == "/v1/sessions" || path == "/v1/sessions/") {
            if (method == "POST") return create(parse_body(body));
            if (method == "GET") {
                std::shared_lock lock(map_mutex_);
                json ids = json::array();
                for (const auto& [id, _] : sessions_) ids.push_back(id);
                return {200, {{"sessions", ids}}};
            }
            return error(405, "method not allowed");
        }
        std::smatch m;
        if (!std::regex_match(path, m, session_route)) return error(404, "no route for " + path);
        const auto entry = find(m[1].str());
        if (!entry) return error(404, "unknown session " + m[1].str());
        const auto sub = m[2].str();
        if (sub.empty()) {
            if (method != "GET") return error(405, "method not allowed");
            std::shared_lock lock(entry->mutex);
            return {200, session_resource(entry->session)};
        }
        if (sub == "/recommendation") {
            if (method != "GET") return error(405, "method not allowed");
            std::shared_lock lock(entry->mutex);
            return {200, to_json(entry->session.recommend())};
        }
        if (method != "POST") return error(405, "method not allowed");
        const auto j = parse_body(body);
        if (!j.is_object()) throw SessionInvalid("$: expected an object");
        if (sub == "/outcomes") return outcome(*entry, j);
        return finalize(*entry, j);
    } catch (const SessionInvalid& e) {
        return error(422, e.what());
    } catch (const SessionConflict& e) {
        return error(409, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
}

// ---------------------------------------------------------------------------
// HTTP front end
// ---------------------------------------------------------------------------

HttpServer::HttpServer(ConductService& service) : server_(std::make_unique<httplib::Server>()) {
    auto route = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto r = service.handle(req.method, req.path, req.body, req.get_header_value("Authorization"));
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    const char* pattern = R"(/v1/.*)";
    server_->Get(pattern, route);
    server_->Post(pattern, route);
    server_->Put(pattern, route);
    server_->Delete(pattern, route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
    if (server_) server_->stop();
}

}  // namespace wetrial
