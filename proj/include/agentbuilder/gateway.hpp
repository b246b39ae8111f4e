#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentbuilder/error.hpp"
#include "agentbuilder/workflow.hpp"

namespace agentbuilder {

enum class Role { System, User, Assistant, Observation };

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view text);

/// One entry of the model's input context.
struct Message {
  Role role = Role::User;
  std::string content;
  /// Provenance marker: "", "user_action", "user_response", "corrective", "env_result", "resume".
  std::string tag;

  friend bool operator==(const Message&, const Message&) = default;
};

json to_json(const Message& m);
Message message_from_json(const json& j);

// ---------------------------------------------------------------------------
// Tool schemas

enum class SlotType { Text, Enum, TextList, ElementRef, Integer };

struct Slot {
  std::string name;
  SlotType type = SlotType::Text;
  std::string description;
  bool required = true;
  std::vector<std::string> choices;  // Enum only
};

struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<Slot> parameters;

  const Slot* find_slot(std::string_view slot) const;
};

/// click, scroll, type, navigate, finish: offered to every agent.
std::vector<ToolSchema> environment_tools();

/// Environment tools plus one interaction tool per interaction node kind
/// present in the graph (show_plan, send_message, ask_options /
/// ask_free_text per Interact mode, confirm).
std::vector<ToolSchema> tool_schemas_for(const WorkflowGraph& graph);

/// JSON-schema style description used by remote chat-completion backends.
json to_json_schema(const ToolSchema& tool);

// ---------------------------------------------------------------------------
// Calls

struct ToolCall {
  std::string name;
  json args = json::object();

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ParseFailure {
  ErrorCode code = ErrorCode::NoCallFound;
  std::string message;
  std::string raw;

  friend bool operator==(const ParseFailure&, const ParseFailure&) = default;
};

/// Canonical call text: {"args":{...},"reasoning":"...","tool":"..."} (sorted keys,
/// no whitespace; reasoning omitted when empty).
std::string render_call(const ToolCall& call, std::string_view reasoning = {});

std::variant<ToolCall, ParseFailure> parse_tool_call(std::string_view raw, std::span<const ToolSchema> tools);

struct ModelOutput {
  std::string reasoning;
  std::optional<ToolCall> tool_call;
  /// Verbatim backend payload.
  std::string raw;
  std::optional<ParseFailure> failure;

  friend bool operator==(const ModelOutput&, const ModelOutput&) = default;
};

ModelOutput parse_model_output(std::string raw, std::span<const ToolSchema> tools);

json to_json(const ToolCall& call);
json to_json(const ParseFailure& failure);
ParseFailure parse_failure_from_json(const json& j);
json to_json(const ModelOutput& out);
ModelOutput model_output_from_json(const json& j);

// ---------------------------------------------------------------------------
// Backends

/// A decision-making backend. complete_raw returns the verbatim payload; the
/// free function complete() parses it against the offered tools.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string complete_raw(const std::vector<Message>& context, std::span<const ToolSchema> tools) = 0;
  /// Expands a workflow path listing into a detailed workflow prompt.
  virtual std::string expand(std::string_view path_text) = 0;
  /// Given an edited workflow prompt and the current workflow document, returns an updated document.
  virtual std::string regenerate(std::string_view edited_prompt, std::string_view current_document) = 0;
};

/// Throws GATEWAY_UNAVAILABLE / SCRIPT_EXHAUSTED from the backend; parse
/// problems are reported inside ModelOutput::failure.
ModelOutput complete(ModelBackend& backend, const std::vector<Message>& context, std::span<const ToolSchema> tools);

struct ScriptEntry {
  std::optional<std::string> match;
  /// Raw payload returned verbatim. Structured script outputs are rendered with render_call.
  std::string raw;
  /// Simulated backend failure instead of a payload.
  std::optional<ErrorCode> error;
};

struct Script {
  std::vector<ScriptEntry> entries;
  std::vector<std::string> expansions;
  std::vector<std::string> regenerations;
};

Script script_from_json(const json& j);
Script load_script(const std::string& path);

/// Replays a script. Each call scans forward from the cursor for the first entry
/// whose `match` (if any) occurs in the last user/observation message of the
/// history, ignoring the trailing page observation.
class ScriptedBackend final : public ModelBackend {
 public:
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

  std::string complete_raw(const std::vector<Message>& context, std::span<const ToolSchema> tools) override;
  std::string expand(std::string_view path_text) override;
  std::string regenerate(std::string_view edited_prompt, std::string_view current_document) override;

  std::size_t calls() const { return calls_; }

 private:
  Script script_;
  std::size_t cursor_ = 0;
  std::size_t calls_ = 0;
  std::size_t expansion_cursor_ = 0;
  std::size_t regeneration_cursor_ = 0;
};

extern const std::string_view kTemplatePreamble;
extern const std::string_view kTemplatePostamble;

/// Offline backend: always finishes, expands by wrapping in a fixed preamble
/// and postamble, and regenerates by returning the current document.
class TemplateBackend final : public ModelBackend {
 public:
  std::string complete_raw(const std::vector<Message>& context, std::span<const ToolSchema> tools) override;
  std::string expand(std::string_view path_text) override;
  std::string regenerate(std::string_view edited_prompt, std::string_view current_document) override;
};

struct RemoteConfig {
  std::string endpoint;        // e.g. http://localhost:8000/v1/chat/completions
  std::string credential_env;  // name of the environment variable holding the API key
  std::string model;
  int timeout_ms = 30000;
  int retries = 2;
};

/// Chat-completion over HTTP: messages in, assistant message (tool call or
/// call-format JSON content) out.
class RemoteBackend final : public ModelBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  std::string complete_raw(const std::vector<Message>& context, std::span<const ToolSchema> tools) override;
  std::string expand(std::string_view path_text) override;
  std::string regenerate(std::string_view edited_prompt, std::string_view current_document) override;

 private:
  json post(const json& body);
  RemoteConfig config_;
  std::string scheme_host_;
  std::string path_;
};

enum class BackendKind { Scripted, Template, Remote };

struct BackendConfig {
  BackendKind kind = BackendKind::Template;
  Script script;
  RemoteConfig remote;
  /// Corrective re-prompts allowed after malformed output before the session fails.
  int max_reprompts = 2;
};

/// Accepts {"kind":"scripted","script":{...}|"script_file":path} / {"kind":"template"} /
/// {"kind":"remote","remote":{...}}. Relative script paths resolve against base_dir.
BackendConfig backend_config_from_json(const json& j, const std::string& base_dir = {});

std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config);

}  // namespace agentbuilder
