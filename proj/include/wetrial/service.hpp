#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>

#include "json.hpp"

#include "wetrial/session.hpp"

namespace httplib {
class Server;
}

namespace wetrial {

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

// The /v1 conduct API over live sessions. Every accepted mutation is
// appended to the event log before the response is produced; constructing
// the service on an existing log replays it.
//
//   POST /v1/sessions                         create (201)
//   GET  /v1/sessions                         list ids
//   GET  /v1/sessions/{id}                    session resource
//   GET  /v1/sessions/{id}/recommendation     next arm and per-arm scores
//   POST /v1/sessions/{id}/outcomes           {"arm", "value", "patient"?}
//   POST /v1/sessions/{id}/finalize           {"eta", "force"?}
//   GET  /v1/health
class ConductService {
public:
    // token: when non-empty, requests need "Authorization: Bearer <token>".
    explicit ConductService(std::filesystem::path log_path, std::string token = {});

    ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body,
                           const std::string& authorization = {});

    std::size_t session_count() const;
    // Unparseable log lines skipped during recovery.
    std::size_t skipped_records() const noexcept { return skipped_; }

private:
    struct Entry {
        std::shared_mutex mutex;
        Session session;
        explicit Entry(Session s) : session(std::move(s)) {}
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void recover();
    void apply(Session& s, const nlohmann::json& record);

    ServiceResponse create(const nlohmann::json& body);
    ServiceResponse outcome(Entry& e, const nlohmann::json& body);
    ServiceResponse finalize(Entry& e, const nlohmann::json& body);

    std::string token_;
    EventLog log_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::size_t next_id_ = 1;
    std::size_t skipped_ = 0;
};

// cpp-httplib front end for a ConductService.
class HttpServer {
public:
    explicit HttpServer(ConductService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Port 0 binds any free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace wetrial
