#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "agentbuilder/gateway.hpp"
#include "agentbuilder/sim_env.hpp"

namespace agentbuilder {

namespace action {
struct ShowPlan {
  std::vector<std::string> steps;
  friend bool operator==(const ShowPlan&, const ShowPlan&) = default;
};
struct SendMessage {
  std::string text;
  friend bool operator==(const SendMessage&, const SendMessage&) = default;
};
struct AskOptions {
  std::string question;
  std::vector<std::string> options;
  friend bool operator==(const AskOptions&, const AskOptions&) = default;
};
struct AskFreeText {
  std::string question;
  friend bool operator==(const AskFreeText&, const AskFreeText&) = default;
};
struct Confirm {
  std::string question;
  friend bool operator==(const Confirm&, const Confirm&) = default;
};
struct Finish {
  std::string summary;
  friend bool operator==(const Finish&, const Finish&) = default;
};
}  // namespace action

using ActionBody = std::variant<action::Click, action::Scroll, action::Type, action::Navigate, action::ShowPlan,
                                action::SendMessage, action::AskOptions, action::AskFreeText, action::Confirm,
                                action::Finish>;

/// The closed vocabulary the agent acts in: environment actions,
/// interaction-component calls, and termination.
struct AgentAction {
  ActionBody body;
  std::string description;  // user-facing text for UI actions, may be empty
  std::string reasoning;

  bool is_environment() const { return body.index() < 4; }
  std::optional<EnvAction> env_action() const;
  std::string tool_name() const;

  friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

/// Converts an already type-checked call. Throws ARGUMENT_TYPE_MISMATCH for
/// calls that do not map onto the vocabulary (e.g. an empty option list).
AgentAction action_from_call(const ToolCall& call, std::string reasoning = {});
ToolCall to_tool_call(const AgentAction& action);

/// Builds an environment action from {"tool":"click","args":{...}} style JSON, used for
/// user interventions and scenario files.
EnvAction env_action_from_json(const json& j);
json to_json(const EnvAction& a);

}  // namespace agentbuilder
