#include "agentbuilder/agent_action.hpp"

namespace agentbuilder {

std::optional<EnvAction> AgentAction::env_action() const {
  return std::visit(
      [](const auto& b) -> std::optional<EnvAction> {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_constructible_v<EnvAction, T>) return EnvAction{b};
        else return std::nullopt;
      },
      body);
}

std::string AgentAction::tool_name() const { return to_tool_call(*this).name; }

namespace {

std::string text_arg(const json& args, const char* key) {
  auto it = args.find(key);
  return it != args.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

std::vector<std::string> list_arg(const json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end() || !it->is_array()) return {};
  return it->get<std::vector<std::string>>();
}

}  // namespace

AgentAction action_from_call(const ToolCall& call, std::string reasoning) {
  const auto& a = call.args;
  AgentAction out;
  out.reasoning = std::move(reasoning);
  out.description = text_arg(a, "description");
  const auto& n = call.name;
  if (n == "click") {
    out.body = action::Click{text_arg(a, "element")};
  } else if (n == "scroll") {
    auto dir = text_arg(a, "direction");
    if (dir != "up" && dir != "down") throw Error(ErrorCode::ArgumentTypeMismatch, "scroll.direction must be up or down");
    auto amount = a.find("amount");
    if (amount == a.end() || !amount->is_number_integer())
      throw Error(ErrorCode::ArgumentTypeMismatch, "scroll.amount must be an integer");
    out.body = action::Scroll{dir == "up" ? action::Direction::Up : action::Direction::Down, amount->get<int>()};
  } else if (n == "type") {
    out.body = action::Type{text_arg(a, "element"), text_arg(a, "text")};
  } else if (n == "navigate") {
    out.body = action::Navigate{text_arg(a, "url")};
  } else if (n == "show_plan") {
    auto steps = list_arg(a, "steps");
    if (steps.empty()) throw Error(ErrorCode::ArgumentTypeMismatch, "show_plan needs at least one step");
    out.body = action::ShowPlan{std::move(steps)};
  } else if (n == "send_message") {
    out.body = action::SendMessage{text_arg(a, "text")};
  } else if (n == "ask_options") {
    auto options = list_arg(a, "options");
    if (options.empty()) throw Error(ErrorCode::ArgumentTypeMismatch, "ask_options needs at least one option");
    out.body = action::AskOptions{text_arg(a, "question"), std::move(options)};
  } else if (n == "ask_free_text") {
    out.body = action::AskFreeText{text_arg(a, "question")};
  } else if (n == "confirm") {
    out.body = action::Confirm{text_arg(a, "question")};
  } else if (n == "finish") {
    out.body = action::Finish{text_arg(a, "summary")};
  } else {
    throw Error(ErrorCode::UnknownTool, "tool '" + n + "' has no action mapping");
  }
  return out;
}

ToolCall to_tool_call(const AgentAction& act) {
  ToolCall call = std::visit(
      [](const auto& b) -> ToolCall {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, action::Click>) return {"click", {{"element", b.element}}};
        else if constexpr (std::is_same_v<T, action::Scroll>)
          return {"scroll", {{"direction", b.direction == action::Direction::Up ? "up" : "down"}, {"amount", b.amount}}};
        else if constexpr (std::is_same_v<T, action::Type>) return {"type", {{"element", b.element}, {"text", b.text}}};
        else if constexpr (std::is_same_v<T, action::Navigate>) return {"navigate", {{"url", b.url}}};
        else if constexpr (std::is_same_v<T, action::ShowPlan>) return {"show_plan", {{"steps", b.steps}}};
        else if constexpr (std::is_same_v<T, action::SendMessage>) return {"send_message", {{"text", b.text}}};
        else if constexpr (std::is_same_v<T, action::AskOptions>)
          return {"ask_options", {{"question", b.question}, {"options", b.options}}};
        else if constexpr (std::is_same_v<T, action::AskFreeText>) return {"ask_free_text", {{"question", b.question}}};
        else if constexpr (std::is_same_v<T, action::Confirm>) return {"confirm", {{"question", b.question}}};
        else return {"finish", {{"summary", b.summary}}};
      },
      act.body);
  if (act.is_environment() && !act.description.empty()) call.args["description"] = act.description;
  return call;
}

EnvAction env_action_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::BadRequest, "action must be an object");
  auto tool = j.value("tool", std::string{});
  const json args = j.value("args", json::object());
  const auto tools = environment_tools();
  auto parsed = parse_tool_call(json{{"tool", tool}, {"args", args}}.dump(), tools);
  if (auto* failure = std::get_if<ParseFailure>(&parsed)) throw Error(failure->code, failure->message);
  const auto& call = std::get<ToolCall>(parsed);
  if (call.name == "finish") throw Error(ErrorCode::BadRequest, "finish is not an environment action");
  return *action_from_call(call).env_action();
}

json to_json(const EnvAction& a) {
  AgentAction act;
  std::visit([&](const auto& x) { act.body = x; }, a);
  const auto call = to_tool_call(act);
  return {{"tool", call.name}, {"args", call.args}};
}

}  // namespace agentbuilder
