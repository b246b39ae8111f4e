#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "agentbuilder/agent_action.hpp"
#include "agentbuilder/gateway.hpp"
#include "agentbuilder/sim_env.hpp"

namespace agentbuilder {

enum class Channel { UserVisible, Debug };

enum class EventKind {
  AgentMessage,
  ActionNotice,
  EnvHighlight,
  Plan,
  Ask,
  ConfirmRequest,
  UserMessage,
  Status,
  ToolCall,
  Reasoning,
};

std::string_view to_string(Channel c);
std::string_view to_string(EventKind k);
std::optional<Channel> channel_from_string(std::string_view text);

struct ChatEvent {
  std::uint64_t seq = 0;  // assigned by the session event log; 0 until published
  Channel channel = Channel::UserVisible;
  EventKind kind = EventKind::Status;
  json payload = json::object();
  std::int64_t step_index = -1;  // -1 when not tied to a step
  std::int64_t timestamp = 0;

  friend bool operator==(const ChatEvent&, const ChatEvent&) = default;
};

json to_json(const ChatEvent& e);
ChatEvent chat_event_from_json(const json& j);

using ParsedAction = std::variant<AgentAction, ParseFailure>;

struct StepRecord {
  std::size_t step_index = 0;
  Observation observation;
  std::string context_digest;
  std::vector<Message> input_context;
  ModelOutput output;
  ParsedAction parsed_action;
  std::optional<ActionResult> env_result;
  std::vector<ChatEvent> events_emitted;
  std::int64_t wall_time = 0;
  /// SHA-256 over the canonical JSON of every other field.
  std::string record_digest;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// A user response or user environment action, tagged with the number of
/// steps that had completed when it happened.
struct Intervention {
  std::size_t after_step = 0;
  std::string kind;  // "user_response" | "user_env_action"
  json payload;
  std::int64_t wall_time = 0;

  friend bool operator==(const Intervention&, const Intervention&) = default;
};

/// Hex SHA-256 of the compact JSON array of messages.
std::string context_digest(const std::vector<Message>& context);
std::string compute_record_digest(const StepRecord& record);
/// Fills context_digest and record_digest.
void seal_record(StepRecord& record);

json to_json(const StepRecord& r, bool with_digest = true);
StepRecord step_record_from_json(const json& j);

/// Append-only step trace. One writer, any number of readers; records are
/// never modified once appended and references returned by get() stay valid.
class Trace {
 public:
  Trace() = default;
  Trace(std::string session_id, std::string workflow_id, std::string fixture_id);
  Trace(const Trace& other);
  Trace& operator=(const Trace& other);

  const std::string& session_id() const { return session_id_; }
  const std::string& workflow_id() const { return workflow_id_; }
  const std::string& fixture_id() const { return fixture_id_; }

  /// Throws INDEX_GAP when record.step_index != size(), TRACE_SEALED after seal().
  void append(StepRecord record);
  void add_intervention(Intervention intervention);
  void seal(std::string final_state);

  bool sealed() const;
  std::string final_state() const;
  std::size_t size() const;
  /// Throws OUT_OF_RANGE.
  const StepRecord& get(std::size_t index) const;
  std::vector<StepRecord> records() const;
  std::vector<Intervention> interventions() const;

  friend bool operator==(const Trace& a, const Trace& b);

 private:
  mutable std::shared_mutex mutex_;
  std::string session_id_;
  std::string workflow_id_;
  std::string fixture_id_;
  std::deque<StepRecord> records_;
  std::vector<Intervention> interventions_;
  std::string final_state_;
  bool sealed_ = false;
};

/// JSON Lines: header line, then step and intervention lines in the order they happened.
std::string export_trace(const Trace& trace);
/// Throws TAMPERED_RECORD when a stored digest does not match its recomputed value.
Trace import_trace(std::string_view document);

/// Exactly two debug-channel events: tool_call then reasoning.
std::vector<ChatEvent> debug_projection(const StepRecord& record);

}  // namespace agentbuilder
