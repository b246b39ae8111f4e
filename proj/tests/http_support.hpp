#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <thread>

#include <httplib.h>

#include "agentbuilder/service.hpp"
#include "support.hpp"

namespace testing {

/// A fresh store directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("agentbuilder-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline agentbuilder::ServiceConfig service_config(const std::filesystem::path& store) {
  agentbuilder::ServiceConfig c;
  c.host = "127.0.0.1";
  c.port = 0;
  c.store_dir = store.string();
  c.fixtures_dir = fixture_path("sites");
  return c;
}

/// Session request body equivalent to a scenario file.
inline agentbuilder::json session_request(const std::string& scenario_name) {
  using agentbuilder::json;
  const auto doc = fixture_json("scenarios/" + scenario_name + ".json");
  const auto workflow = json::parse(read_fixture("scenarios/" + doc.at("workflow").get<std::string>()));
  json body = {{"workflow_id", workflow.at("id")},
               {"fixture_id", "coffee_shop"},
               {"user_query", doc.value("user_query", "")},
               {"scripted_user_responses", doc.value("scripted_user_responses", json::array())},
               {"control_commands", doc.value("control_commands", json::array())}};
  if (doc.contains("gateway_script"))
    body["gateway"] = {{"kind", "scripted"},
                       {"script", fixture_json("scenarios/" + doc.at("gateway_script").get<std::string>())}};
  if (doc.contains("bundle")) body["bundle"] = doc["bundle"];
  if (doc.contains("step_limit")) body["step_limit"] = doc["step_limit"];
  return body;
}

/// Posts the workflow file a scenario refers to (idempotent: a conflict means it exists).
inline void ensure_workflow(httplib::Client& cli, const std::string& scenario_name) {
  const auto doc = fixture_json("scenarios/" + scenario_name + ".json");
  cli.Post("/workflows", read_fixture("scenarios/" + doc.at("workflow").get<std::string>()), "application/json");
}

/// Polls a session until its state is terminal; returns the final state text.
inline std::string wait_terminal(httplib::Client& cli, const std::string& id,
                                 std::chrono::milliseconds limit = std::chrono::seconds(10)) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    auto res = cli.Get("/sessions/" + id);
    if (res && res->status == 200) {
      const auto state = agentbuilder::json::parse(res->body).at("state").get<std::string>();
      if (state == "completed" || state == "cancelled" || state.rfind("failed", 0) == 0) return state;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return "timeout";
}

/// Reads a whole event stream (it ends when the session's log closes) and
/// returns the decoded event payloads in arrival order.
inline std::vector<agentbuilder::json> read_events(httplib::Client& cli, const std::string& path,
                                                   const httplib::Headers& headers = {}) {
  std::string buffer;
  auto res = cli.Get(path, headers, [&](const char* data, std::size_t n) {
    buffer.append(data, n);
    return true;
  });
  std::vector<agentbuilder::json> out;
  if (!res || res->status != 200) return out;
  std::size_t pos = 0;
  while ((pos = buffer.find("data: ", pos)) != std::string::npos) {
    const auto end = buffer.find('\n', pos);
    out.push_back(agentbuilder::json::parse(buffer.substr(pos + 6, end - pos - 6)));
    pos = end;
  }
  return out;
}

}  // namespace testing
