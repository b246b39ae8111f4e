#include <doctest.h>

#include <cstdlib>

#include "http_support.hpp"

using namespace agentbuilder;
using testing::call;

namespace {

json body_of(const httplib::Result& res) { return json::parse(res->body); }

std::string error_code(const httplib::Result& res) { return body_of(res)["error"]["code"].get<std::string>(); }

/// A session that asks a question first and then waits for the user.
json waiting_session(const std::string& workflow_id) {
  return {{"workflow_id", workflow_id},
          {"fixture_id", "coffee_shop"},
          {"user_query", "Order me a coffee please!"},
          {"gateway",
           {{"kind", "scripted"},
            {"script",
             json::array({call("ask_options", {{"question", "Which coffee?"}, {"options", {"Latte", "Mocha"}}}),
                          call("finish", {{"summary", "done"}})})}}}};
}

std::string wait_state(httplib::Client& cli, const std::string& id, const std::string& want) {
  std::string state;
  for (int i = 0; i < 2000; ++i) {
    state = body_of(cli.Get("/sessions/" + id))["state"].get<std::string>();
    if (state == want) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return state;
}

}  // namespace

TEST_CASE("service: workflow documents") {
  testing::TempDir store("svc-wf");
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());

  const auto text = testing::read_fixture("workflows/prototype1.json");
  auto created = cli.Post("/workflows", text, "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(body_of(created)["validation"]["errors"].empty());
  CHECK(cli.Post("/workflows", text, "application/json")->status == 409);

  auto got = cli.Get("/workflows/prototype1");
  REQUIRE(got->status == 200);
  CHECK(got->body == serialize(deserialize(text)));

  auto list = body_of(cli.Get("/workflows"));
  REQUIRE(list.size() == 1);
  CHECK(list[0]["id"] == "prototype1");

  // Optimistic concurrency: an update based on the current revision wins once.
  auto doc = graph_from_json(json::parse(text));
  doc.name = "renamed";
  auto updated = cli.Put("/workflows/prototype1", serialize(doc), "application/json");
  REQUIRE(updated->status == 200);
  CHECK(body_of(updated)["revision"] == doc.revision + 1);
  auto stale = cli.Put("/workflows/prototype1", serialize(doc), "application/json");
  CHECK(stale->status == 409);
  CHECK(error_code(stale) == "REVISION_CONFLICT");

  auto missing = cli.Get("/workflows/nope");
  CHECK(missing->status == 404);
  CHECK(error_code(missing) == "WORKFLOW_NOT_FOUND");
  CHECK(cli.Post("/workflows", "{not json", "application/json")->status == 400);
  CHECK(cli.Put("/workflows/other", serialize(doc), "application/json")->status == 400);
}

TEST_CASE("service: compile and generate") {
  testing::TempDir store("svc-compile");
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());
  cli.Post("/workflows", testing::read_fixture("workflows/start_end.json"), "application/json");
  cli.Post("/workflows", testing::read_fixture("workflows/prototype1.json"), "application/json");

  auto compiled = cli.Post("/workflows/start_end/compile", "{}", "application/json");
  REQUIRE(compiled->status == 200);
  const auto c = body_of(compiled);
  const auto start_end = testing::workflow("start_end");
  CHECK(c["path_text"] == render_workflow_text(enumerate_paths(start_end), start_end));
  CHECK(c["system_prompt"].get<std::string>().find("## Workflow") != std::string::npos);

  // Generating from the unedited prompt keeps the structure and bumps the revision.
  auto p1 = body_of(cli.Post("/workflows/prototype1/compile", "{}", "application/json"));
  auto generated = cli.Post("/workflows/prototype1/generate",
                            json{{"edited_prompt", p1["workflow_prompt"]}}.dump(), "application/json");
  REQUIRE(generated->status == 200);
  const auto next = deserialize(generated->body);
  CHECK(next.revision == 1);
  CHECK(structural_diff(testing::workflow("prototype1"), next).empty());

  CHECK(cli.Post("/workflows/prototype1/generate", "{}", "application/json")->status == 400);
  CHECK(cli.Post("/workflows/nope/compile", "{}", "application/json")->status == 404);
}

TEST_CASE("service: fixtures") {
  testing::TempDir store("svc-fx");
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());
  CHECK(body_of(cli.Get("/fixtures")) == json::array({"coffee_shop"}));
  CHECK(body_of(cli.Get("/fixtures/coffee_shop")) == testing::fixture_json("sites/coffee_shop.json"));
  CHECK(cli.Get("/fixtures/none")->status == 404);
  CHECK(cli.Post("/fixtures", R"({"id":"bad"})", "application/json")->status == 400);
}

TEST_CASE("service: scenario session, trace and event stream") {
  testing::TempDir store("svc-session");
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());
  testing::ensure_workflow(cli, "coffee_order_scenario");

  auto created = cli.Post("/sessions", testing::session_request("coffee_order_scenario").dump(), "application/json");
  REQUIRE(created->status == 201);
  const auto id = body_of(created)["id"].get<std::string>();
  CHECK(id == "s1");
  CHECK(testing::wait_terminal(cli, id) == "completed");

  // The trace matches an in-process run of the same scenario, step for step.
  const auto local = run_scenario(testing::scenario("coffee_order_scenario"));
  const auto trace = import_trace(cli.Get("/sessions/" + id + "/trace")->body);
  REQUIRE(trace.size() == local.session->trace().size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace.get(i).parsed_action == local.session->trace().get(i).parsed_action);
    CHECK(trace.get(i).observation == local.session->trace().get(i).observation);
  }
  auto step3 = cli.Get("/sessions/" + id + "/trace/3");
  REQUIRE(step3->status == 200);
  CHECK(step_record_from_json(body_of(step3)) == trace.get(3));
  CHECK(cli.Get("/sessions/" + id + "/trace/999")->status == 404);

  // Event streams replay the whole log, filter by channel and resume after an id.
  const auto all = testing::read_events(cli, "/sessions/" + id + "/events");
  REQUIRE(!all.empty());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i]["seq"] == i);
  CHECK(all.back()["payload"]["state"] == "completed");
  const auto debug = testing::read_events(cli, "/sessions/" + id + "/events?channels=debug");
  CHECK(debug.size() == 2 * trace.size());
  for (const auto& e : debug) CHECK(e["channel"] == "debug");
  const auto tail = testing::read_events(cli, "/sessions/" + id + "/events", {{"Last-Event-ID", "4"}});
  REQUIRE(tail.size() == all.size() - 5);
  CHECK(tail.front() == all[5]);
  CHECK(cli.Get("/sessions/" + id + "/events?channels=bogus")->status == 400);
}

TEST_CASE("service: interactive control") {
  testing::TempDir store("svc-control");
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());
  cli.Post("/workflows", testing::read_fixture("workflows/prototype1.json"), "application/json");

  auto created = cli.Post("/sessions", waiting_session("prototype1").dump(), "application/json");
  REQUIRE(created->status == 201);
  const auto id = body_of(created)["id"].get<std::string>();
  CHECK(wait_state(cli, id, "awaiting_user(options)") == "awaiting_user(options)");
  CHECK(body_of(cli.Get("/sessions/" + id))["pending_options"] == json::array({"Latte", "Mocha"}));

  auto wrong = cli.Post("/sessions/" + id + "/response", R"({"confirm":true})", "application/json");
  CHECK(wrong->status == 422);
  CHECK(cli.Post("/sessions/" + id + "/resume", "", "application/json")->status == 409);

  auto cancelled = cli.Post("/sessions/" + id + "/cancel", "", "application/json");
  CHECK(cancelled->status == 202);
  CHECK(body_of(cancelled)["state"] == "cancelled");
  auto again = cli.Post("/sessions/" + id + "/cancel", "", "application/json");
  CHECK(again->status == 409);
  CHECK(error_code(again) == "ILLEGAL_TRANSITION");

  CHECK(cli.Get("/sessions/s99")->status == 404);
  CHECK(cli.Post("/sessions/s99/pause", "", "application/json")->status == 404);
  CHECK(cli.Post("/sessions", R"({"fixture_id":"coffee_shop"})", "application/json")->status == 400);
  CHECK(cli.Post("/sessions", R"({"workflow_id":"nope","fixture_id":"coffee_shop"})", "application/json")->status ==
        404);
}

TEST_CASE("service: documents and traces survive a restart") {
  testing::TempDir store("svc-restart");
  std::string trace_text;
  {
    Service svc(testing::service_config(store.path));
    httplib::Client cli("127.0.0.1", svc.start());
    testing::ensure_workflow(cli, "p2_compliant");
    auto id = body_of(cli.Post("/sessions", testing::session_request("p2_compliant").dump(), "application/json"))["id"]
                  .get<std::string>();
    REQUIRE(testing::wait_terminal(cli, id) == "completed");
    trace_text = cli.Get("/sessions/" + id + "/trace")->body;
  }
  Service svc(testing::service_config(store.path));
  httplib::Client cli("127.0.0.1", svc.start());
  CHECK(cli.Get("/workflows/prototype2")->status == 200);
  auto stored = cli.Get("/sessions/s1/trace");
  REQUIRE(stored->status == 200);
  CHECK(stored->body == trace_text);
  // New sessions do not reuse ids of stored traces.
  auto next = body_of(cli.Post("/sessions", testing::session_request("p2_compliant").dump(), "application/json"));
  CHECK(next["id"] == "s2");
  CHECK(testing::wait_terminal(cli, "s2") == "completed");
}

TEST_CASE("service configuration") {
  auto c = service_config_from_json(
      {{"listen", "0.0.0.0:9000"}, {"store_dir", "/tmp/a"}, {"gateway", {{"kind", "template"}}}});
  CHECK(c.host == "0.0.0.0");
  CHECK(c.port == 9000);
  CHECK(c.store_dir == "/tmp/a");
  CHECK(c.gateway_defaults["kind"] == "template");
  CHECK_THROWS_AS(service_config_from_json({{"listen", "nohost"}}), Error);

  ::setenv("AGENTBUILDER_LISTEN", "127.0.0.1:0", 1);
  ::setenv("AGENTBUILDER_STORE_DIR", "/tmp/b", 1);
  apply_env_overrides(c);
  ::unsetenv("AGENTBUILDER_LISTEN");
  ::unsetenv("AGENTBUILDER_STORE_DIR");
  CHECK(c.host == "127.0.0.1");
  CHECK(c.port == 0);
  CHECK(c.store_dir == "/tmp/b");

  ::setenv("AGENTBUILDER_GATEWAY", "{bad", 1);
  CHECK_THROWS_AS(apply_env_overrides(c), Error);
  ::unsetenv("AGENTBUILDER_GATEWAY");

  CHECK(http_status(ErrorCode::SessionNotFound) == 404);
  CHECK(http_status(ErrorCode::RevisionConflict) == 409);
  CHECK(http_status(ErrorCode::ElementNotVisible) == 422);
  CHECK(http_status(ErrorCode::GatewayUnavailable) == 502);
  CHECK(http_status(ErrorCode::ParseError) == 400);
}
