#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agentbuilder/agent_action.hpp"
#include "agentbuilder/compiler.hpp"
#include "agentbuilder/gateway.hpp"
#include "agentbuilder/sim_env.hpp"
#include "agentbuilder/trace.hpp"
#include "agentbuilder/workflow.hpp"

namespace agentbuilder {

enum class SessionState { Idle, Running, AwaitingUser, Paused, Completed, Cancelled, Failed };
enum class AwaitKind { Options, FreeText, Confirm };

struct StateInfo {
  SessionState state = SessionState::Idle;
  std::optional<AwaitKind> awaiting;  // set iff state == AwaitingUser
  std::string failure_reason;         // set iff state == Failed

  bool terminal() const;
  /// "running", "awaiting_user(options)", "failed(STEP_LIMIT)", ...
  std::string to_string() const;
  friend bool operator==(const StateInfo&, const StateInfo&) = default;
};

struct UserResponse {
  enum class Kind { Option, FreeText, Confirm };
  Kind kind = Kind::Option;
  std::string text;     // Option / FreeText
  bool accept = false;  // Confirm

  static UserResponse option(std::string text) { return {Kind::Option, std::move(text), false}; }
  static UserResponse free_text(std::string text) { return {Kind::FreeText, std::move(text), false}; }
  static UserResponse confirm(bool accept) { return {Kind::Confirm, {}, accept}; }
};

/// {"option": "..."} | {"text": "..."} | {"confirm": true|false}
UserResponse user_response_from_json(const json& j);
json to_json(const UserResponse& r);

/// Ordered, replayable per-session event stream with gap-free sequence numbers
/// starting at 0.
class EventLog {
 public:
  ChatEvent publish(ChatEvent event);
  /// Events with seq >= from_seq on the given channels.
  std::vector<ChatEvent> since(std::uint64_t from_seq, bool user_visible = true, bool debug = true) const;
  /// Blocks until an event with seq >= from_seq exists, the log is closed, or the timeout passes.
  /// Returns false on timeout.
  bool wait(std::uint64_t from_seq, std::chrono::milliseconds timeout) const;
  void close();
  bool closed() const;
  std::uint64_t size() const;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::vector<ChatEvent> events_;
  bool closed_ = false;
};

struct SessionConfig {
  int step_limit = 50;
  int max_reprompts = 2;
  int viewport_height = 20;
  /// Milliseconds for event timestamps and wall_time. Defaults to the system clock.
  std::function<std::int64_t()> clock;
};

/// Deterministic clock: 0, 1, 2, ... per call.
std::function<std::int64_t()> logical_clock();

/// User-visible events for one step under a display configuration, followed by
/// the step's debug events.
std::vector<ChatEvent> project_visible(const StepRecord& record, const UIActionsDisplayConfig& config);

/// The display configuration in force for a graph: its first UI Actions node,
/// all-off when there is none.
UIActionsDisplayConfig display_config_for(const WorkflowGraph& graph);

/// The runtime state machine. One executor thread calls step(); control
/// operations may come from any thread. Pause and cancel requested while a
/// step is in flight take effect when that step finishes.
class Session {
 public:
  struct Init {
    std::string id;
    WorkflowGraph graph;
    PromptBundle bundle;
    SimSite site;
    std::unique_ptr<ModelBackend> backend;
    std::string user_query;
    SessionConfig config;
  };

  /// Throws INVALID_GRAPH when the workflow has validation errors.
  static std::unique_ptr<Session> start(Init init);

  /// One observe -> complete -> act cycle. Returns nullopt when a pending
  /// control flag or the step cap ended the session before the gateway call.
  /// Throws NOT_RUNNING unless the session is Running.
  std::optional<StepRecord> step();

  StateInfo pause();
  StateInfo resume();
  StateInfo cancel();
  ActionResult record_user_env_action(const EnvAction& action);
  StateInfo submit_user_response(const UserResponse& response);

  StateInfo state() const;
  std::size_t step_count() const;
  const std::string& id() const { return id_; }
  const WorkflowGraph& graph() const { return graph_; }
  const SystemPrompt& system_prompt() const { return system_prompt_; }
  const std::vector<ToolSchema>& tools() const { return tools_; }
  const UIActionsDisplayConfig& display_config() const { return display_; }
  const Trace& trace() const { return trace_; }
  const EventLog& events() const { return events_; }
  SimSite site() const;
  Viewport viewport() const;
  std::vector<Message> history() const;
  /// Options of the pending AskOptions call, if any.
  std::vector<std::string> pending_options() const;
  /// Blocks until the session is Running or terminal, or the timeout passes.
  StateInfo wait_until_actionable(std::chrono::milliseconds timeout) const;

 private:
  explicit Session(Init init);

  void transition(StateInfo next, std::vector<ChatEvent>* sink);
  ChatEvent emit(ChatEvent e);
  void finish_if_terminal();
  std::int64_t now() const;

  mutable std::mutex mutex_;
  mutable std::condition_variable state_changed_;
  std::string id_;
  WorkflowGraph graph_;
  PromptBundle bundle_;
  SystemPrompt system_prompt_;
  std::vector<ToolSchema> tools_;
  UIActionsDisplayConfig display_;
  SimSite site_;
  Viewport viewport_;
  std::unique_ptr<ModelBackend> backend_;
  SessionConfig config_;

  StateInfo state_;
  std::vector<Message> history_;
  std::size_t step_count_ = 0;
  int consecutive_failures_ = 0;
  bool pause_requested_ = false;
  bool cancel_requested_ = false;
  bool in_step_ = false;
  std::optional<AgentAction> pending_ask_;

  Trace trace_;
  EventLog events_;
};

// ---------------------------------------------------------------------------
// Conformance

struct Finding {
  std::string code;  // MISSING_NODE | UNEXPECTED_ORDER
  std::string node_id;
  NodeKind kind = NodeKind::Start;
  std::int64_t step_index = -1;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ConformanceReport {
  std::vector<Finding> findings;
  /// Node kinds the trace exercised, consecutive repeats collapsed.
  std::vector<NodeKind> observed;

  bool conformant() const { return findings.empty(); }
  std::string to_text() const;
  json to_json() const;
};

/// Soft comparison of a trace against the workflow: nodes never exercised, and
/// interaction orderings that follow no path from enumerate_paths.
ConformanceReport conformance_check(const Trace& trace, const WorkflowGraph& graph);

// ---------------------------------------------------------------------------
// Headless scenarios

struct ControlCommand {
  std::size_t after_step = 0;
  std::string command;  // pause | resume | cancel | user_action
  std::optional<EnvAction> action;
};

struct Scenario {
  std::string workflow_id;
  std::string fixture_id;
  WorkflowGraph graph;
  json fixture_document;
  BackendConfig gateway;
  std::string user_query;
  PromptBundle bundle;
  std::vector<UserResponse> responses;
  std::vector<ControlCommand> commands;
  int step_limit = 50;
  int viewport_height = 20;
};

/// {workflow, fixture, gateway_script | gateway, user_query, bundle?, scripted_user_responses?,
///  control_commands?, step_limit?, viewport_height?}. File references resolve against base_dir.
Scenario scenario_from_json(const json& j, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

std::vector<ControlCommand> control_commands_from_json(const json& j);

struct DriveOutcome {
  /// The agent asked for more user responses than the scenario scripted.
  bool responses_exhausted = false;
  /// The scenario left the session paused with no resume command.
  bool stalled = false;
};

struct ScenarioRun {
  std::unique_ptr<Session> session;
  DriveOutcome outcome;
};

/// Drives a session to a terminal state, feeding scripted responses in
/// AwaitingUser order and applying control commands once `after_step` steps
/// have completed. Sessions left waiting are cancelled so the trace is sealed.
ScenarioRun run_scenario(const Scenario& scenario, std::string session_id = "scenario",
                         std::function<std::int64_t()> clock = {});

/// The same driver for an already started session (used by the service).
DriveOutcome drive_session(Session& session, const std::vector<UserResponse>& responses,
                           const std::vector<ControlCommand>& commands);

}  // namespace agentbuilder
