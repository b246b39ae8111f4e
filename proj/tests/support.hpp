#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "agentbuilder/runtime.hpp"
#include "agentbuilder/workflow.hpp"

namespace testing {

inline std::string fixture_path(const std::string& relative) { return std::string(AGENTBUILDER_FIXTURES) + "/" + relative; }

inline std::string read_fixture(const std::string& relative) {
  std::ifstream in(fixture_path(relative), std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline agentbuilder::json fixture_json(const std::string& relative) {
  return agentbuilder::json::parse(read_fixture(relative));
}

inline agentbuilder::WorkflowGraph workflow(const std::string& name) {
  return agentbuilder::deserialize(read_fixture("workflows/" + name + ".json"));
}

inline agentbuilder::SimSite coffee_shop() { return agentbuilder::load_fixture(fixture_json("sites/coffee_shop.json")); }

inline agentbuilder::Scenario scenario(const std::string& name) {
  return agentbuilder::load_scenario(fixture_path("scenarios/" + name + ".json"));
}

/// Script entry for a structured tool call.
inline agentbuilder::json call(const std::string& tool, agentbuilder::json args, const std::string& reasoning = "r") {
  return {{"output", {{"reasoning", reasoning}, {"tool_call", {{"name", tool}, {"arguments", std::move(args)}}}}}};
}


inline std::unique_ptr<agentbuilder::ModelBackend> scripted(const agentbuilder::json& entries) {
  return std::make_unique<agentbuilder::ScriptedBackend>(agentbuilder::script_from_json(entries));
}

}  // namespace testing
