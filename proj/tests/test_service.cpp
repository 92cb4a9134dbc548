#include <doctest.h>

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "adaor/service.hpp"

using namespace adaor;
using nlohmann::json;

namespace {

const service::Service& vec_service() {
  static const service::Service svc(DenoiserNet::init(3, TaskKind::vec), "00000000deadbeef");
  return svc;
}

json parse(const service::Response& r) { return json::parse(r.body); }

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("health") {
    const auto r = vec_service().handle("GET", "/api/health", "");
    CHECK(r.status == 200);
    const json j = parse(r);
    CHECK(j["status"] == "ok");
    CHECK(j["checkpoint_id"] == "00000000deadbeef");
    CHECK(j["task"] == "vec");
  }

  TEST_CASE("meta lists four variants and only the edit tokens") {
    const json j = parse(vec_service().meta());
    CHECK(j["variants"].size() == 4);
    CHECK(j["vocabulary"].size() == kNumEdits);
    for (const auto& name : j["vocabulary"]) {
      CHECK(name != "NULL");
      CHECK(name != "ID");
    }
    CHECK(j["defaults"]["variant"] == "adaor");
    CHECK(j["defaults"]["w"] == 4.0);
    CHECK(j["defaults"]["alphas"].size() == 6);
    CHECK(j["dim"] == 8);
  }

  TEST_CASE("routing") {
    CHECK(vec_service().handle("GET", "/api/nope", "").status == 404);
    CHECK(vec_service().handle("POST", "/api/health", "").status == 405);
    CHECK(vec_service().handle("GET", "/api/sweep", "").status == 405);
  }

  TEST_CASE("sweep response shape and determinism") {
    const std::string name(vec_service().task().instruction_name(vec_service().task().edit_instructions()[0]));
    const json req = {{"instruction", name}, {"alphas", {1.0, 0.0, 0.5}}, {"seed", 7}, {"case_seed", 2}, {"steps", 16}};
    const auto r = vec_service().sweep(req.dump());
    REQUIRE(r.status == 200);
    const json j = parse(r);
    CHECK(j["config"]["alphas"] == json({0.0, 0.5, 1.0}));
    CHECK(j["config"]["variant"] == "adaor");
    CHECK(j["outputs"].size() == 3);
    CHECK(j["references"].size() == 3);
    CHECK(j["outputs"][0]["values"].size() == 8);
    CHECK(j["source"]["png"].get<std::string>().rfind("iVBORw0KGgo", 0) == 0);
    CHECK(j["metrics"]["embedding"] == "randproj");
    // The manifold residual is only defined for the disc family.
    CHECK(j["metrics"]["manifold_residual_per_alpha"].empty());
    CHECK(vec_service().sweep(req.dump()).body == r.body);
  }

  TEST_CASE("fewer than three alphas gives flagged metrics") {
    const json req = {{"instruction", "shift"}, {"alphas", {0.5}}};
    const auto r = vec_service().sweep(req.dump());
    REQUIRE(r.status == 200);
    const json j = parse(r);
    CHECK(j["metrics"]["delta_smooth"].is_null());
    CHECK(j["metrics"]["flags"][0] == "fewer than 3 outputs");
  }

  TEST_CASE("validation errors name the offending field") {
    auto fields = [](const json& req) {
      const auto r = vec_service().sweep(req.dump());
      CHECK(r.status == 400);
      return parse(r)["fields"];
    };
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.0, 1.5}}}).contains("alphas"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", json::array()}}).contains("alphas"));
    CHECK(fields({{"instruction", "ID"}, {"alphas", {0.5}}}).contains("instruction"));
    CHECK(fields({{"instruction", "nope"}, {"alphas", {0.5}}}).contains("instruction"));
    CHECK(fields({{"alphas", {0.5}}}).contains("instruction"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"w", -1}}).contains("w"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"variant", "foo"}}).contains("variant"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"scheduler", 3}}).contains("scheduler"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"seed", -1}}).contains("seed"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"steps", 1}}).contains("steps"));
    CHECK(fields({{"instruction", "shift"}, {"alphas", {0.5}}, {"extra", 1}}).contains("extra"));
    const json many = {{"instruction", "shift"}, {"alphas", std::vector<double>(65, 0.5)}};
    CHECK(fields(many).contains("alphas"));
    const auto bad = vec_service().sweep("{not json");
    CHECK(bad.status == 400);
    CHECK(parse(bad)["fields"].contains("body"));
  }

  TEST_CASE("divergence maps to 422 with the failing step") {
    const json req = {{"instruction", "shift"}, {"alphas", {1.0}}, {"variant", "cfgid"}, {"w", 1e12}};
    const auto r = vec_service().sweep(req.dump());
    REQUIRE(r.status == 422);
    const json j = parse(r);
    CHECK(j["variant"] == "cfgid");
    CHECK(j["alpha"] == 1.0);
    CHECK(j["step"].get<int>() >= 0);
    CHECK(j["error"].get<std::string>().find("diverged") != std::string::npos);
  }

  TEST_CASE("http round trip") {
    service::HttpServer server(vec_service());
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread th([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/api/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
    const json req = {{"instruction", "shift"}, {"alphas", {0.0, 0.5, 1.0}}, {"steps", 8}};
    auto sweep = client.Post("/api/sweep", req.dump(), "application/json");
    REQUIRE(sweep);
    CHECK(sweep->status == 200);
    CHECK(sweep->body == vec_service().sweep(req.dump()).body);
    auto bad = client.Post("/api/sweep", "{}", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto opts = client.Options("/api/sweep");
    REQUIRE(opts);
    CHECK(opts->status == 204);
    server.stop();
    th.join();
  }
}
