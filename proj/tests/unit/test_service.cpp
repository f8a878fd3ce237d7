#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

// Eigen first: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include "wetrial/service.hpp"

#include "httplib.h"

using namespace wetrial;
using nlohmann::json;

namespace {

std::filesystem::path fresh_log(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p;
}

json create_body(const std::string& entry = "strict") {
    return {{"arms",
             {{{"target", 0}, {"sigma", 2}}, {{"target", 0}, {"sigma", 2}}, {{"target", 0}, {"sigma", 2}},
              {{"target", 0}, {"sigma", 4}}}},
            {"policy", {{"policy", "WE"}, {"p", 2}, {"kappa", 0.7}, {"burn_in", 5}}},
            {"seed", 5},
            {"entry", entry}};
}

Scenario scenario_two() {
    Scenario s;
    for (auto [m, sd] : {std::pair{1.13, 2.0}, {-3.48, 2.0}, {-3.57, 2.0}, {0.34, 4.0}}) s.arms.push_back({m, sd, 0.0});
    return s;
}

std::string post_outcome(ConductService& svc, const std::string& id, std::size_t arm, double value) {
    const auto r = svc.handle("POST", "/v1/sessions/" + id + "/outcomes",
                              json{{"arm", arm}, {"value", value}}.dump());
    return std::to_string(r.status);
}

}  // namespace

TEST_CASE("routes and status codes", "[service]") {
    ConductService svc(fresh_log("wetrial_service_routes.jsonl"));
    CHECK(svc.handle("GET", "/v1/health", "").status == 200);
    CHECK(svc.handle("GET", "/v1/nothing", "").status == 404);
    CHECK(svc.handle("DELETE", "/v1/sessions", "").status == 405);
    CHECK(svc.handle("POST", "/v1/sessions", "{not json").status == 422);
    CHECK(svc.handle("POST", "/v1/sessions", R"({"arms": []})").status == 422);

    const auto created = svc.handle("POST", "/v1/sessions", create_body().dump());
    REQUIRE(created.status == 201);
    const std::string id = created.body["id"];
    CHECK(id == "s000001");
    CHECK(created.body["phase"] == "burn_in");
    CHECK(svc.handle("GET", "/v1/sessions", "").body["sessions"] == json::array({id}));
    CHECK(svc.handle("GET", "/v1/sessions/" + id, "").status == 200);
    CHECK(svc.handle("GET", "/v1/sessions/s999999", "").status == 404);
    CHECK(svc.handle("POST", "/v1/sessions/" + id, "{}").status == 405);
    CHECK(svc.handle("POST", "/v1/sessions/" + id + "/recommendation", "{}").status == 405);

    const auto rec = svc.handle("GET", "/v1/sessions/" + id + "/recommendation", "");
    REQUIRE(rec.status == 200);
    CHECK(rec.body["arm"] == 1);  // arms are 1-based
    CHECK(rec.body["patient"] == 1);
    CHECK(rec.body["gains"].size() == 4);

    const auto out = "/v1/sessions/" + id + "/outcomes";
    CHECK(svc.handle("POST", out, R"({"arm": 2, "value": 1.0})").status == 409);  // strict entry
    CHECK(svc.handle("POST", out, R"({"arm": 7, "value": 1.0})").status == 422);
    CHECK(svc.handle("POST", out, R"({"arm": 1})").status == 422);
    CHECK(svc.handle("POST", out, R"({"arm": 1, "value": "x"})").status == 422);
    CHECK(svc.handle("POST", out, R"({"arm": 1, "value": 1.0, "extra": 1})").status == 422);
    CHECK(svc.handle("POST", out, R"({"arm": 1, "value": 1.0, "patient": 3})").status == 422);
    const auto ok = svc.handle("POST", out, R"({"arm": 1, "value": 1.0, "patient": 1})");
    REQUIRE(ok.status == 200);
    CHECK(ok.body["patient"] == 1);
    CHECK(svc.handle("POST", out, R"({"arm": 2, "value": 1.0, "patient": 1})").status == 409);

    const auto fin = "/v1/sessions/" + id + "/finalize";
    CHECK(svc.handle("POST", fin, R"({"eta": 0.95})").status == 409);
    CHECK(svc.handle("POST", fin, R"({"eta": 2})").status == 422);
    CHECK(svc.handle("POST", fin, R"({"eta": 0.95, "force": "yes"})").status == 422);
}

TEST_CASE("bearer token is required when configured", "[service]") {
    ConductService svc(fresh_log("wetrial_service_auth.jsonl"), "sekrit");
    CHECK(svc.handle("GET", "/v1/health", "").status == 401);
    CHECK(svc.handle("GET", "/v1/health", "", "Bearer wrong").status == 401);
    CHECK(svc.handle("GET", "/v1/health", "", "Bearer sekrit").status == 200);
    CHECK(svc.handle("POST", "/v1/sessions", create_body().dump()).status == 401);
    CHECK(svc.session_count() == 0);
}

TEST_CASE("a scripted session equals the library trial", "[service][property]") {
    const auto log = fresh_log("wetrial_service_script.jsonl");
    ConductService svc(log);
    const auto created = svc.handle("POST", "/v1/sessions", create_body().dump());
    const std::string id = created.body["id"];

    TrialConfig c = parse_session_config(create_body()).trial;
    const auto sim = simulate_trial(scenario_two(), c);
    for (int t = 0; t < 100; ++t) {
        const auto rec = svc.handle("GET", "/v1/sessions/" + id + "/recommendation", "");
        REQUIRE(rec.body["arm"] == sim.allocations[t] + 1);
        REQUIRE(post_outcome(svc, id, sim.allocations[t] + 1, sim.responses[t]) == "200");
    }
    CHECK(svc.handle("GET", "/v1/sessions/" + id + "/recommendation", "").status == 409);
    const auto v = svc.handle("POST", "/v1/sessions/" + id + "/finalize", R"({"eta": 0.95})");
    REQUIRE(v.status == 200);
    CHECK(v.body["best"] == sim.best + 1);
    CHECK(v.body["second"] == sim.second + 1);
    CHECK(v.body["statistic"].get<double>() == sim.statistic);
    CHECK(v.body["reject"] == (sim.statistic > 0.95));
    CHECK(svc.handle("POST", "/v1/sessions/" + id + "/outcomes", R"({"arm": 1, "value": 0})").status == 409);
    CHECK(svc.handle("POST", "/v1/sessions/" + id + "/finalize", R"({"eta": 0.95})").status == 409);
}

TEST_CASE("recovery from the event log restores identical state", "[service][property]") {
    const auto log = fresh_log("wetrial_service_recover.jsonl");
    json before_a, before_b;
    std::string a, b;
    {
        ConductService svc(log);
        a = svc.handle("POST", "/v1/sessions", create_body().dump()).body["id"];
        b = svc.handle("POST", "/v1/sessions", create_body("free").dump()).body["id"];
        for (int t = 0; t < 37; ++t) {
            const auto rec = svc.handle("GET", "/v1/sessions/" + a + "/recommendation", "");
            REQUIRE(post_outcome(svc, a, rec.body["arm"].get<std::size_t>(), 0.37 * t - 3) == "200");
            REQUIRE(post_outcome(svc, b, static_cast<std::size_t>(t % 4 + 1), 0.1 * t) == "200");
        }
        // Rejected requests leave no trace in the log.
        CHECK(post_outcome(svc, a, 9, 0.0) == "422");
        CHECK(svc.handle("POST", "/v1/sessions/" + b + "/finalize", R"({"eta": 0.9, "force": true})").status == 200);
        before_a = svc.handle("GET", "/v1/sessions/" + a, "").body;
        before_b = svc.handle("GET", "/v1/sessions/" + b, "").body;
    }
    ConductService again(log);
    CHECK(again.session_count() == 2);
    CHECK(again.skipped_records() == 0);
    CHECK(again.handle("GET", "/v1/sessions/" + a, "").body == before_a);
    CHECK(again.handle("GET", "/v1/sessions/" + b, "").body == before_b);
    // New ids continue after the recovered ones.
    CHECK(again.handle("POST", "/v1/sessions", create_body().dump()).body["id"] == "s000003");

    // A torn final record is skipped and the rest recovers.
    std::ofstream(log, std::ios::app | std::ios::binary) << R"({"ts":"x","session":")";
    ConductService torn(log);
    CHECK(torn.skipped_records() == 1);
    CHECK(torn.session_count() == 3);
    CHECK(torn.handle("GET", "/v1/sessions/" + a, "").body == before_a);
}

TEST_CASE("HTTP front end serves the same API", "[service]") {
    ConductService svc(fresh_log("wetrial_service_http.jsonl"), "tok");
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread th([&] { server.listen(); });

    httplib::Client cli("127.0.0.1", port);
    cli.set_connection_timeout(5);
    const httplib::Headers auth{{"Authorization", "Bearer tok"}};
    auto health = cli.Get("/v1/health", auth);
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Content-Type") == "application/json");
    auto denied = cli.Get("/v1/health");
    REQUIRE(denied);
    CHECK(denied->status == 401);

    auto created = cli.Post("/v1/sessions", auth, create_body().dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = json::parse(created->body)["id"];
    auto rec = cli.Get("/v1/sessions/" + id + "/recommendation", auth);
    REQUIRE(rec);
    const int arm = json::parse(rec->body)["arm"];
    auto out = cli.Post("/v1/sessions/" + id + "/outcomes", auth, json{{"arm", arm}, {"value", 0.2}}.dump(),
                        "application/json");
    REQUIRE(out);
    CHECK(out->status == 200);
    auto missing = cli.Get("/v1/sessions/zzz", auth);
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["error"]["status"] == 404);

    server.stop();
    th.join();
}
