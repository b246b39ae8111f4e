#include "agentbuilder/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace agentbuilder {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Observation: return "observation";
  }
  return "user";
}

std::optional<Role> role_from_string(std::string_view text) {
  for (auto r : {Role::System, Role::User, Role::Assistant, Role::Observation})
    if (to_string(r) == text) return r;
  return std::nullopt;
}

json to_json(const Message& m) {
  json j = {{"role", to_string(m.role)}, {"content", m.content}};
  if (!m.tag.empty()) j["tag"] = m.tag;
  return j;
}

Message message_from_json(const json& j) {
  auto role = role_from_string(j.at("role").get<std::string>());
  if (!role) throw Error(ErrorCode::ParseError, "unknown message role", "/role");
  return {*role, j.at("content").get<std::string>(), j.value("tag", std::string{})};
}

const Slot* ToolSchema::find_slot(std::string_view slot) const {
  for (const auto& s : parameters)
    if (s.name == slot) return &s;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Schemas

namespace {

Slot description_slot() {
  return {"description", SlotType::Text, "Short user-facing description of the action", false, {}};
}

ToolSchema show_plan_tool() {
  return {"show_plan", "Show the user a list of the high-level steps you will take.",
          {{"steps", SlotType::TextList, "Plan steps, in order", true, {}}}};
}
ToolSchema send_message_tool() {
  return {"send_message", "Display a message to the user.", {{"text", SlotType::Text, "Message text", true, {}}}};
}
ToolSchema ask_options_tool() {
  return {"ask_options", "Ask the user a question with a drop-down list of options.",
          {{"question", SlotType::Text, "Question shown to the user", true, {}},
           {"options", SlotType::TextList, "Options the user can choose from", true, {}}}};
}
ToolSchema ask_free_text_tool() {
  return {"ask_free_text", "Ask the user an open-ended question answered in free text.",
          {{"question", SlotType::Text, "Question shown to the user", true, {}}}};
}
ToolSchema confirm_tool() {
  return {"confirm", "Ask the user to accept or reject before you proceed.",
          {{"question", SlotType::Text, "Confirmation question", true, {}}}};
}

}  // namespace

std::vector<ToolSchema> environment_tools() {
  return {
      {"click", "Click an element on the current page.",
       {{"element", SlotType::ElementRef, "Element id from the accessibility tree", true, {}}, description_slot()}},
      {"scroll", "Scroll the page viewport.",
       {{"direction", SlotType::Enum, "Scroll direction", true, {"up", "down"}},
        {"amount", SlotType::Integer, "Rows to scroll", true, {}},
        description_slot()}},
      {"type", "Type text into an input element.",
       {{"element", SlotType::ElementRef, "Element id from the accessibility tree", true, {}},
        {"text", SlotType::Text, "Text to enter", true, {}},
        description_slot()}},
      {"navigate", "Visit a page by url.",
       {{"url", SlotType::Text, "Absolute url", true, {}}, description_slot()}},
      {"finish", "End the task and report the result.", {{"summary", SlotType::Text, "Outcome summary", true, {}}}},
  };
}

std::vector<ToolSchema> tool_schemas_for(const WorkflowGraph& graph) {
  require_valid(graph);
  auto tools = environment_tools();
  auto has = [&](NodeKind k) {
    return std::any_of(graph.nodes.begin(), graph.nodes.end(), [&](const Node& n) { return n.kind == k; });
  };
  bool options = false, free_text = false;
  for (const auto& n : graph.nodes) {
    if (n.kind != NodeKind::Interact) continue;
    if (std::get<InteractConfig>(n.config).mode == InteractMode::OptionsDropdown)
      options = true;
    else
      free_text = true;
  }
  if (has(NodeKind::Plan)) tools.push_back(show_plan_tool());
  if (has(NodeKind::Message)) tools.push_back(send_message_tool());
  if (options) tools.push_back(ask_options_tool());
  if (free_text) tools.push_back(ask_free_text_tool());
  if (has(NodeKind::Confirmation)) tools.push_back(confirm_tool());
  return tools;
}

json to_json_schema(const ToolSchema& tool) {
  json props = json::object();
  json required = json::array();
  for (const auto& s : tool.parameters) {
    json p = {{"description", s.description}};
    switch (s.type) {
      case SlotType::Text:
      case SlotType::ElementRef: p["type"] = "string"; break;
      case SlotType::Enum:
        p["type"] = "string";
        p["enum"] = s.choices;
        break;
      case SlotType::TextList:
        p["type"] = "array";
        p["items"] = {{"type", "string"}};
        p["minItems"] = 1;
        break;
      case SlotType::Integer: p["type"] = "integer"; break;
    }
    props[s.name] = std::move(p);
    if (s.required) required.push_back(s.name);
  }
  return {{"name", tool.name},
          {"description", tool.description},
          {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}};
}

// ---------------------------------------------------------------------------
// Parsing

std::string render_call(const ToolCall& call, std::string_view reasoning) {
  json j = {{"tool", call.name}, {"args", call.args}};
  if (!reasoning.empty()) j["reasoning"] = std::string(reasoning);
  return j.dump();
}

namespace {

std::optional<json> find_call_object(std::string_view raw) {
  auto try_parse = [](std::string_view text) -> std::optional<json> {
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  };
  if (auto j = try_parse(raw)) return j;
  auto open = raw.find('{');
  auto close = raw.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  return try_parse(raw.substr(open, close - open + 1));
}

std::optional<std::string> check_slot(const Slot& slot, const json& value) {
  switch (slot.type) {
    case SlotType::Text:
      if (!value.is_string()) return "expected text";
      return std::nullopt;
    case SlotType::ElementRef:
      if (!value.is_string() || value.get<std::string>().empty()) return "expected an element id";
      return std::nullopt;
    case SlotType::Enum:
      if (!value.is_string()) return "expected one of the enumerated values";
      if (std::find(slot.choices.begin(), slot.choices.end(), value.get<std::string>()) == slot.choices.end())
        return "value '" + value.get<std::string>() + "' is not allowed";
      return std::nullopt;
    case SlotType::TextList:
      if (!value.is_array() || value.empty()) return "expected a non-empty list of text";
      for (const auto& v : value)
        if (!v.is_string()) return "expected a list of text";
      return std::nullopt;
    case SlotType::Integer:
      if (!value.is_number_integer()) return "expected an integer";
      return std::nullopt;
  }
  return "unsupported slot";
}

}  // namespace

std::variant<ToolCall, ParseFailure> parse_tool_call(std::string_view raw, std::span<const ToolSchema> tools) {
  auto fail = [&](ErrorCode code, std::string message) {
    return ParseFailure{code, std::move(message), std::string(raw)};
  };
  auto obj = find_call_object(raw);
  if (!obj) return fail(ErrorCode::NoCallFound, "no structured call object in output");
  auto name_it = obj->find("tool");
  if (name_it == obj->end()) name_it = obj->find("name");
  if (name_it == obj->end() || !name_it->is_string()) return fail(ErrorCode::NoCallFound, "call object has no tool name");
  const auto name = name_it->get<std::string>();

  auto schema = std::find_if(tools.begin(), tools.end(), [&](const ToolSchema& t) { return t.name == name; });
  if (schema == tools.end()) return fail(ErrorCode::UnknownTool, "tool '" + name + "' is not offered");

  json args = json::object();
  auto args_it = obj->find("args");
  if (args_it == obj->end()) args_it = obj->find("arguments");
  if (args_it != obj->end() && !args_it->is_null()) {
    if (!args_it->is_object()) return fail(ErrorCode::ArgumentTypeMismatch, "arguments must be an object");
    args = *args_it;
  }
  for (auto it = args.begin(); it != args.end(); ++it)
    if (!schema->find_slot(it.key()))
      return fail(ErrorCode::ArgumentTypeMismatch, "unexpected argument '" + it.key() + "' for " + name);
  for (const auto& slot : schema->parameters) {
    auto v = args.find(slot.name);
    if (v == args.end() || v->is_null()) {
      if (slot.required) return fail(ErrorCode::ArgumentTypeMismatch, name + ": missing argument '" + slot.name + "'");
      if (v != args.end()) args.erase(slot.name);
      continue;
    }
    if (auto problem = check_slot(slot, *v))
      return fail(ErrorCode::ArgumentTypeMismatch, name + "." + slot.name + ": " + *problem);
  }
  return ToolCall{name, std::move(args)};
}

ModelOutput parse_model_output(std::string raw, std::span<const ToolSchema> tools) {
  ModelOutput out;
  if (auto obj = find_call_object(raw)) {
    if (auto r = obj->find("reasoning"); r != obj->end() && r->is_string()) out.reasoning = r->get<std::string>();
  }
  auto parsed = parse_tool_call(raw, tools);
  if (auto* call = std::get_if<ToolCall>(&parsed))
    out.tool_call = std::move(*call);
  else
    out.failure = std::get<ParseFailure>(std::move(parsed));
  out.raw = std::move(raw);
  return out;
}

json to_json(const ToolCall& call) { return {{"name", call.name}, {"args", call.args}}; }

json to_json(const ParseFailure& f) {
  return {{"code", code_name(f.code)}, {"message", f.message}, {"raw", f.raw}};
}

ParseFailure parse_failure_from_json(const json& j) {
  ParseFailure f;
  const auto code = j.at("code").get<std::string>();
  for (auto c : {ErrorCode::NoCallFound, ErrorCode::UnknownTool, ErrorCode::ArgumentTypeMismatch,
                 ErrorCode::GatewayUnavailable, ErrorCode::ScriptExhausted})
    if (code_name(c) == code) f.code = c;
  f.message = j.at("message").get<std::string>();
  f.raw = j.at("raw").get<std::string>();
  return f;
}

json to_json(const ModelOutput& out) {
  return {{"reasoning", out.reasoning},
          {"tool_call", out.tool_call ? to_json(*out.tool_call) : json(nullptr)},
          {"raw", out.raw},
          {"failure", out.failure ? to_json(*out.failure) : json(nullptr)}};
}

ModelOutput model_output_from_json(const json& j) {
  ModelOutput out;
  out.reasoning = j.at("reasoning").get<std::string>();
  if (const auto& tc = j.at("tool_call"); !tc.is_null())
    out.tool_call = ToolCall{tc.at("name").get<std::string>(), tc.at("args")};
  out.raw = j.at("raw").get<std::string>();
  if (const auto& f = j.at("failure"); !f.is_null()) out.failure = parse_failure_from_json(f);
  return out;
}

// ---------------------------------------------------------------------------
// Backends

ModelOutput complete(ModelBackend& backend, const std::vector<Message>& context, std::span<const ToolSchema> tools) {
  if (context.empty() || context.front().role != Role::System)
    throw Error(ErrorCode::InvalidConfig, "context must start with the system prompt");
  return parse_model_output(backend.complete_raw(context, tools), tools);
}

Script script_from_json(const json& j) {
  Script script;
  const json& entries = j.is_array() ? j : j.value("entries", json::array());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string where = "/entries/" + std::to_string(i);
    ScriptEntry entry;
    if (auto m = e.find("match"); m != e.end() && !m->is_null()) entry.match = m->get<std::string>();
    if (auto err = e.find("error"); err != e.end()) {
      auto name = err->get<std::string>();
      if (name == code_name(ErrorCode::GatewayUnavailable))
        entry.error = ErrorCode::GatewayUnavailable;
      else
        throw Error(ErrorCode::ParseError, "unsupported scripted error '" + name + "'", where + "/error");
      script.entries.push_back(std::move(entry));
      continue;
    }
    auto out = e.find("output");
    if (out == e.end()) throw Error(ErrorCode::MissingField, "script entry needs 'output'", where);
    if (out->is_string()) {
      entry.raw = out->get<std::string>();
    } else if (auto raw = out->find("raw"); raw != out->end()) {
      entry.raw = raw->get<std::string>();
    } else {
      const auto& tc = out->at("tool_call");
      ToolCall call{tc.contains("name") ? tc.at("name").get<std::string>() : tc.at("tool").get<std::string>(),
                    tc.contains("arguments") ? tc.at("arguments") : tc.value("args", json::object())};
      entry.raw = render_call(call, out->value("reasoning", std::string{}));
    }
    script.entries.push_back(std::move(entry));
  }
  if (j.is_object()) {
    for (const auto& x : j.value("expansions", json::array())) script.expansions.push_back(x.get<std::string>());
    for (const auto& x : j.value("regenerations", json::array())) script.regenerations.push_back(x.get<std::string>());
  }
  return script;
}

Script load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read script '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "script '" + path + "' is not valid JSON");
  return script_from_json(j);
}

std::string ScriptedBackend::complete_raw(const std::vector<Message>& context, std::span<const ToolSchema>) {
  ++calls_;
  const Message* last = nullptr;
  for (auto it = context.rbegin(); it != context.rend(); ++it) {
    if (it->tag == "page") continue;
    if (it->role == Role::User || it->role == Role::Observation) {
      last = &*it;
      break;
    }
  }
  for (std::size_t i = cursor_; i < script_.entries.size(); ++i) {
    const auto& entry = script_.entries[i];
    if (entry.match && (!last || last->content.find(*entry.match) == std::string::npos)) continue;
    cursor_ = i + 1;
    if (entry.error) throw Error(*entry.error, "scripted backend failure at entry " + std::to_string(i));
    return entry.raw;
  }
  cursor_ = script_.entries.size();
  throw Error(ErrorCode::ScriptExhausted, "no scripted response left for call " + std::to_string(calls_ - 1));
}

std::string ScriptedBackend::expand(std::string_view) {
  if (expansion_cursor_ >= script_.expansions.size())
    throw Error(ErrorCode::ScriptExhausted, "no scripted expansion left");
  return script_.expansions[expansion_cursor_++];
}

std::string ScriptedBackend::regenerate(std::string_view, std::string_view) {
  if (regeneration_cursor_ >= script_.regenerations.size())
    throw Error(ErrorCode::ScriptExhausted, "no scripted regeneration left");
  return script_.regenerations[regeneration_cursor_++];
}

const std::string_view kTemplatePreamble =
    "Follow this workflow when helping the user. Each numbered list is one path through the workflow; "
    "a step that starts with \"when\" applies only in that situation.\n\n";
const std::string_view kTemplatePostamble =
    "\nStay on these paths. Use the interaction tools for every step that involves the user.\n";

std::string TemplateBackend::complete_raw(const std::vector<Message>&, std::span<const ToolSchema>) {
  return render_call({"finish", {{"summary", "No model is configured; the template backend ends the run."}}});
}

std::string TemplateBackend::expand(std::string_view path_text) {
  std::string out(kTemplatePreamble);
  out += path_text;
  out += kTemplatePostamble;
  return out;
}

std::string TemplateBackend::regenerate(std::string_view, std::string_view current_document) {
  return std::string(current_document);
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty() || config_.credential_env.empty())
    throw Error(ErrorCode::InvalidConfig, "remote backend needs an endpoint and a credential variable name");
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos || config_.endpoint.compare(0, scheme_end, "http") != 0)
    throw Error(ErrorCode::InvalidConfig, "remote endpoint must be an http:// url (terminate TLS in a proxy)");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

json RemoteBackend::post(const json& body) {
  const char* key = std::getenv(config_.credential_env.c_str());
  if (!key) throw Error(ErrorCode::GatewayUnavailable, "credential variable " + config_.credential_env + " is not set");
  httplib::Client client(scheme_host_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server returned " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::GatewayUnavailable, "server returned " + std::to_string(res->status));
    auto reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw Error(ErrorCode::GatewayUnavailable, "response is not JSON");
    return reply;
  }
  throw Error(ErrorCode::GatewayUnavailable, last_error);
}

namespace {

json chat_messages(const std::vector<Message>& context) {
  json out = json::array();
  for (const auto& m : context) {
    std::string role(to_string(m.role));
    std::string content = m.content;
    if (m.role == Role::Observation) {
      role = "user";
      content = "[observation]\n" + content;
    }
    out.push_back({{"role", role}, {"content", content}});
  }
  return out;
}

const json& first_message(const json& reply) {
  const auto& choices = reply.at("choices");
  if (!choices.is_array() || choices.empty()) throw Error(ErrorCode::GatewayUnavailable, "response has no choices");
  return choices.at(0).at("message");
}

std::string content_text(const json& message) {
  auto c = message.find("content");
  return c != message.end() && c->is_string() ? c->get<std::string>() : std::string{};
}

}  // namespace

std::string RemoteBackend::complete_raw(const std::vector<Message>& context, std::span<const ToolSchema> tools) {
  json tool_list = json::array();
  for (const auto& t : tools) tool_list.push_back({{"type", "function"}, {"function", to_json_schema(t)}});
  json body = {{"model", config_.model}, {"messages", chat_messages(context)}, {"tools", tool_list}};
  try {
    const json reply = post(body);
    const auto& msg = first_message(reply);
    if (auto calls = msg.find("tool_calls"); calls != msg.end() && calls->is_array() && !calls->empty()) {
      const auto& fn = calls->at(0).at("function");
      json args = fn.value("arguments", json::object());
      if (args.is_string()) args = json::parse(args.get<std::string>(), nullptr, false);
      if (args.is_discarded()) return content_text(msg) + "\n" + fn.value("arguments", std::string{});
      return render_call({fn.at("name").get<std::string>(), args}, content_text(msg));
    }
    return content_text(msg);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::GatewayUnavailable, std::string("unexpected response shape: ") + e.what());
  }
}

std::string RemoteBackend::expand(std::string_view path_text) {
  json body = {{"model", config_.model},
               {"messages",
                {{{"role", "system"},
                  {"content",
                   "Expand the workflow below into a detailed description for a web agent. Keep every numbered "
                   "step line exactly as written and add detail after it."}},
                 {{"role", "user"}, {"content", std::string(path_text)}}}}};
  try {
    return content_text(first_message(post(body)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::GatewayUnavailable, std::string("unexpected response shape: ") + e.what());
  }
}

std::string RemoteBackend::regenerate(std::string_view edited_prompt, std::string_view current_document) {
  json body = {{"model", config_.model},
               {"messages",
                {{{"role", "system"},
                  {"content",
                   "Update the workflow JSON so it matches the edited workflow prompt. Reply with the complete JSON "
                   "document only."}},
                 {{"role", "user"},
                  {"content", "Workflow prompt:\n" + std::string(edited_prompt) + "\n\nCurrent workflow JSON:\n" +
                                  std::string(current_document)}}}}};
  try {
    return content_text(first_message(post(body)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::GatewayUnavailable, std::string("unexpected response shape: ") + e.what());
  }
}

BackendConfig backend_config_from_json(const json& j, const std::string& base_dir) {
  BackendConfig config;
  const auto kind = j.value("kind", std::string("template"));
  if (kind == "template") {
    config.kind = BackendKind::Template;
  } else if (kind == "scripted") {
    config.kind = BackendKind::Scripted;
    if (auto s = j.find("script"); s != j.end()) {
      config.script = script_from_json(*s);
    } else if (auto f = j.find("script_file"); f != j.end()) {
      std::string path = f->get<std::string>();
      if (!base_dir.empty() && !path.empty() && path.front() != '/') path = base_dir + "/" + path;
      config.script = load_script(path);
    } else {
      throw Error(ErrorCode::InvalidConfig, "scripted backend needs 'script' or 'script_file'");
    }
  } else if (kind == "remote") {
    config.kind = BackendKind::Remote;
    const auto& r = j.at("remote");
    config.remote.endpoint = r.value("endpoint", std::string{});
    config.remote.credential_env = r.value("credential_env", std::string{});
    config.remote.model = r.value("model", std::string{});
    config.remote.timeout_ms = r.value("timeout_ms", 30000);
    config.remote.retries = r.value("retries", 2);
    if (config.remote.endpoint.empty() || config.remote.credential_env.empty())
      throw Error(ErrorCode::InvalidConfig, "remote backend needs endpoint and credential_env");
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown backend kind '" + kind + "'");
  }
  config.max_reprompts = j.value("max_reprompts", 2);
  return config;
}

std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config) {
  switch (config.kind) {
    case BackendKind::Scripted: return std::make_unique<ScriptedBackend>(config.script);
    case BackendKind::Template: return std::make_unique<TemplateBackend>();
    case BackendKind::Remote: return std::make_unique<RemoteBackend>(config.remote);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown backend kind");
}

}  // namespace agentbuilder
