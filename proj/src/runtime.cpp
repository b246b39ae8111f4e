#include "agentbuilder/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace agentbuilder {

// ---------------------------------------------------------------------------
// State

bool StateInfo::terminal() const {
  return state == SessionState::Completed || state == SessionState::Cancelled || state == SessionState::Failed;
}

std::string StateInfo::to_string() const {
  switch (state) {
    case SessionState::Idle: return "idle";
    case SessionState::Running: return "running";
    case SessionState::AwaitingUser:
      switch (awaiting.value_or(AwaitKind::Options)) {
        case AwaitKind::Options: return "awaiting_user(options)";
        case AwaitKind::FreeText: return "awaiting_user(free_text)";
        case AwaitKind::Confirm: return "awaiting_user(confirm)";
      }
      return "awaiting_user";
    case SessionState::Paused: return "paused";
    case SessionState::Completed: return "completed";
    case SessionState::Cancelled: return "cancelled";
    case SessionState::Failed: return "failed(" + failure_reason + ")";
  }
  return "unknown";
}

UserResponse user_response_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::BadRequest, "user response must be an object");
  if (auto it = j.find("option"); it != j.end() && it->is_string()) return UserResponse::option(it->get<std::string>());
  if (auto it = j.find("text"); it != j.end() && it->is_string()) return UserResponse::free_text(it->get<std::string>());
  if (auto it = j.find("confirm"); it != j.end() && it->is_boolean()) return UserResponse::confirm(it->get<bool>());
  throw Error(ErrorCode::BadRequest, "user response needs one of option / text / confirm");
}

json to_json(const UserResponse& r) {
  switch (r.kind) {
    case UserResponse::Kind::Option: return {{"option", r.text}};
    case UserResponse::Kind::FreeText: return {{"text", r.text}};
    case UserResponse::Kind::Confirm: return {{"confirm", r.accept}};
  }
  return json::object();
}

// ---------------------------------------------------------------------------
// Events

ChatEvent EventLog::publish(ChatEvent event) {
  std::lock_guard lock(mutex_);
  event.seq = events_.size();
  events_.push_back(event);
  changed_.notify_all();
  return event;
}

std::vector<ChatEvent> EventLog::since(std::uint64_t from_seq, bool user_visible, bool debug) const {
  std::lock_guard lock(mutex_);
  std::vector<ChatEvent> out;
  for (std::size_t i = from_seq; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if ((e.channel == Channel::UserVisible && user_visible) || (e.channel == Channel::Debug && debug))
      out.push_back(e);
  }
  return out;
}

bool EventLog::wait(std::uint64_t from_seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return changed_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > from_seq; });
}

void EventLog::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  changed_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::uint64_t EventLog::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::function<std::int64_t()> logical_clock() {
  auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
  return [counter] { return counter->fetch_add(1); };
}

UIActionsDisplayConfig display_config_for(const WorkflowGraph& graph) {
  for (const auto& n : graph.nodes)
    if (n.kind == NodeKind::UIActions)
      if (const auto* cfg = std::get_if<UIActionsDisplayConfig>(&n.config)) return *cfg;
  return {};
}

std::vector<ChatEvent> project_visible(const StepRecord& record, const UIActionsDisplayConfig& config) {
  std::vector<ChatEvent> out;
  auto visible = [&](EventKind kind, json payload) {
    ChatEvent e;
    e.channel = Channel::UserVisible;
    e.kind = kind;
    e.payload = std::move(payload);
    e.step_index = static_cast<std::int64_t>(record.step_index);
    e.timestamp = record.wall_time;
    out.push_back(std::move(e));
  };

  if (const auto* act = std::get_if<AgentAction>(&record.parsed_action)) {
    if (auto env = act->env_action()) {
      json notice = json::object();
      if (config.show_action_name) notice["name"] = std::string(tool_name(*env));
      if (config.show_description) notice["description"] = act->description;
      if (config.show_reasoning) notice["reasoning"] = act->reasoning;
      if (!notice.empty()) visible(EventKind::ActionNotice, std::move(notice));
      if (config.page_preview) {
        json highlight = to_json(*env);
        highlight.erase("reasoning");
        visible(EventKind::EnvHighlight, std::move(highlight));
      }
    } else {
      std::visit(
          [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, action::ShowPlan>) visible(EventKind::Plan, {{"steps", b.steps}});
            else if constexpr (std::is_same_v<T, action::SendMessage>) visible(EventKind::AgentMessage, {{"text", b.text}});
            else if constexpr (std::is_same_v<T, action::AskOptions>)
              visible(EventKind::Ask, {{"mode", "options"}, {"question", b.question}, {"options", b.options}});
            else if constexpr (std::is_same_v<T, action::AskFreeText>)
              visible(EventKind::Ask, {{"mode", "free_text"}, {"question", b.question}});
            else if constexpr (std::is_same_v<T, action::Confirm>)
              visible(EventKind::ConfirmRequest, {{"question", b.question}});
            else if constexpr (std::is_same_v<T, action::Finish>)
              visible(EventKind::AgentMessage, {{"text", b.summary}, {"final", true}});
          },
          act->body);
    }
  }
  for (auto& e : debug_projection(record)) out.push_back(std::move(e));
  return out;
}

// ---------------------------------------------------------------------------
// Session

namespace {

std::string corrective_instruction(const ParseFailure& f) {
  return "Your last reply could not be used (" + std::string(code_name(f.code)) + ": " + f.message +
         "). Reply with exactly one JSON object {\"tool\": <name>, \"args\": {...}, \"reasoning\": <text>} using an "
         "offered tool.";
}

std::string env_result_text(const EnvAction& act, const ActionResult& r) {
  if (r.ok) return "Action " + describe(act) + " succeeded.";
  return "Action " + describe(act) + " failed: " + std::string(code_name(*r.error)) + ": " + r.message;
}

}  // namespace

Session::Session(Init init)
    : id_(std::move(init.id)),
      graph_(std::move(init.graph)),
      bundle_(std::move(init.bundle)),
      site_(std::move(init.site)),
      backend_(std::move(init.backend)),
      config_(std::move(init.config)),
      trace_(id_, graph_.id, site_.fixture_id) {
  if (!config_.clock) {
    config_.clock = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  viewport_ = {0, config_.viewport_height};
}

std::unique_ptr<Session> Session::start(Init init) {
  require_valid(init.graph);
  if (!init.backend) throw Error(ErrorCode::InvalidConfig, "session needs a model backend");
  std::string user_query = init.user_query;
  std::unique_ptr<Session> s(new Session(std::move(init)));
  s->tools_ = tool_schemas_for(s->graph_);
  s->display_ = display_config_for(s->graph_);
  PromptBundle bundle = s->bundle_;
  if (bundle.workflow_prompt.empty()) {
    TemplateBackend expander;
    bundle.workflow_prompt =
        expand_workflow_prompt(render_workflow_text(enumerate_paths(s->graph_), s->graph_), expander).text;
  }
  s->system_prompt_ = assemble_system_prompt(bundle, s->graph_);
  s->history_.push_back({Role::User, user_query, "query"});

  std::lock_guard lock(s->mutex_);
  ChatEvent query;
  query.kind = EventKind::UserMessage;
  query.payload = {{"text", user_query}, {"query", true}};
  s->emit(query);
  s->transition({SessionState::Running, std::nullopt, {}}, nullptr);
  return s;
}

std::int64_t Session::now() const { return config_.clock(); }

ChatEvent Session::emit(ChatEvent e) {
  if (e.timestamp == 0) e.timestamp = now();
  return events_.publish(std::move(e));
}

void Session::transition(StateInfo next, std::vector<ChatEvent>* sink) {
  if (next == state_) return;
  const auto previous = state_.to_string();
  state_ = std::move(next);
  ChatEvent status;
  status.kind = EventKind::Status;
  status.payload = {{"state", state_.to_string()}, {"from", previous}};
  status.step_index = sink ? static_cast<std::int64_t>(step_count_) - 1 : -1;
  auto published = emit(status);
  if (sink) sink->push_back(published);
  state_changed_.notify_all();
}

void Session::finish_if_terminal() {
  if (!state_.terminal() || trace_.sealed()) return;
  trace_.seal(state_.to_string());
  events_.close();
}

std::optional<StepRecord> Session::step() {
  std::unique_lock lock(mutex_);
  if (state_.state != SessionState::Running)
    throw Error(ErrorCode::NotRunning, "session " + id_ + " is " + state_.to_string());

  if (cancel_requested_) {
    transition({SessionState::Cancelled, std::nullopt, {}}, nullptr);
    finish_if_terminal();
    return std::nullopt;
  }
  if (pause_requested_) {
    pause_requested_ = false;
    transition({SessionState::Paused, std::nullopt, {}}, nullptr);
    return std::nullopt;
  }
  if (static_cast<int>(step_count_) >= config_.step_limit) {
    transition({SessionState::Failed, std::nullopt, "STEP_LIMIT"}, nullptr);
    finish_if_terminal();
    return std::nullopt;
  }

  StepRecord record;
  record.step_index = step_count_;
  record.observation = observe(site_, viewport_);
  record.input_context.push_back({Role::System, system_prompt_.text, ""});
  record.input_context.insert(record.input_context.end(), history_.begin(), history_.end());
  record.input_context.push_back({Role::Observation, record.observation.to_prompt_text(), "page"});
  in_step_ = true;

  std::optional<Error> gateway_error;
  lock.unlock();
  try {
    record.output = complete(*backend_, record.input_context, tools_);
  } catch (const Error& e) {
    gateway_error = e;
  }
  lock.lock();
  in_step_ = false;
  ++step_count_;
  record.wall_time = now();

  std::optional<StateInfo> next;
  if (gateway_error) {
    ParseFailure failure{gateway_error->code(), gateway_error->detail(), ""};
    record.output.failure = failure;
    record.parsed_action = failure;
    next = StateInfo{SessionState::Failed, std::nullopt, std::string(code_name(gateway_error->code()))};
  } else {
    std::optional<ParseFailure> failure = record.output.failure;
    std::optional<AgentAction> act;
    if (!failure) {
      try {
        act = action_from_call(*record.output.tool_call, record.output.reasoning);
      } catch (const Error& e) {
        failure = ParseFailure{e.code(), e.detail(), record.output.raw};
      }
    }
    if (failure) {
      record.parsed_action = *failure;
      history_.push_back({Role::Assistant, record.output.raw, ""});
      history_.push_back({Role::User, corrective_instruction(*failure), "corrective"});
      if (++consecutive_failures_ > config_.max_reprompts)
        next = StateInfo{SessionState::Failed, std::nullopt, "MALFORMED_OUTPUT"};
    } else {
      consecutive_failures_ = 0;
      record.parsed_action = *act;
      history_.push_back({Role::Assistant, render_call(to_tool_call(*act), act->reasoning), ""});
      if (auto env = act->env_action()) {
        record.env_result = apply(site_, viewport_, *env);
        history_.push_back({Role::Observation, env_result_text(*env, *record.env_result), "env_result"});
      } else if (std::holds_alternative<action::AskOptions>(act->body)) {
        pending_ask_ = act;
        next = StateInfo{SessionState::AwaitingUser, AwaitKind::Options, {}};
      } else if (std::holds_alternative<action::AskFreeText>(act->body)) {
        pending_ask_ = act;
        next = StateInfo{SessionState::AwaitingUser, AwaitKind::FreeText, {}};
      } else if (std::holds_alternative<action::Confirm>(act->body)) {
        pending_ask_ = act;
        next = StateInfo{SessionState::AwaitingUser, AwaitKind::Confirm, {}};
      } else if (std::holds_alternative<action::Finish>(act->body)) {
        next = StateInfo{SessionState::Completed, std::nullopt, {}};
      }
    }
  }

  // Events of the step itself come before the status changes it caused.
  std::vector<ChatEvent> step_events;
  for (auto e : project_visible(record, display_)) step_events.push_back(emit(std::move(e)));
  if (next) transition(*next, &step_events);

  if (!state_.terminal()) {
    if (cancel_requested_) {
      transition({SessionState::Cancelled, std::nullopt, {}}, &step_events);
    } else if (pause_requested_) {
      pause_requested_ = false;
      transition({SessionState::Paused, std::nullopt, {}}, &step_events);
    }
  }
  record.events_emitted = std::move(step_events);

  seal_record(record);
  trace_.append(record);
  finish_if_terminal();
  return record;
}

StateInfo Session::pause() {
  std::lock_guard lock(mutex_);
  switch (state_.state) {
    case SessionState::Running:
      if (in_step_) {
        pause_requested_ = true;
        return state_;
      }
      transition({SessionState::Paused, std::nullopt, {}}, nullptr);
      return state_;
    case SessionState::AwaitingUser:
      transition({SessionState::Paused, std::nullopt, {}}, nullptr);
      return state_;
    default:
      throw Error(ErrorCode::IllegalTransition, "cannot pause a session that is " + state_.to_string());
  }
}

StateInfo Session::resume() {
  std::lock_guard lock(mutex_);
  if (state_.state != SessionState::Paused)
    throw Error(ErrorCode::IllegalTransition, "cannot resume a session that is " + state_.to_string());
  std::string note = "The user paused and resumed the run; the page may have changed.";
  if (pending_ask_) {
    note += " Your last question was not answered.";
    pending_ask_.reset();
  }
  note += "\n" + observe(site_, viewport_).to_prompt_text();
  history_.push_back({Role::Observation, note, "resume"});
  pause_requested_ = false;
  transition({SessionState::Running, std::nullopt, {}}, nullptr);
  return state_;
}

StateInfo Session::cancel() {
  std::lock_guard lock(mutex_);
  if (state_.terminal() || cancel_requested_)
    throw Error(ErrorCode::IllegalTransition, "cannot cancel a session that is " +
                                                  (cancel_requested_ ? std::string("already cancelling") : state_.to_string()));
  if (in_step_) {
    cancel_requested_ = true;
    return state_;
  }
  cancel_requested_ = true;
  transition({SessionState::Cancelled, std::nullopt, {}}, nullptr);
  finish_if_terminal();
  return state_;
}

ActionResult Session::record_user_env_action(const EnvAction& act) {
  std::lock_guard lock(mutex_);
  if (state_.state != SessionState::Paused)
    throw Error(ErrorCode::NotPaused, "user actions are recorded only while paused; session is " + state_.to_string());
  auto result = apply(site_, viewport_, act);
  if (!result.ok) throw Error(*result.error, result.message);
  history_.push_back({Role::Observation, "The user performed " + describe(act) + " on the page.", "user_action"});
  trace_.add_intervention({step_count_, "user_env_action", {{"action", to_json(act)}, {"result", to_json(result)}}, now()});
  ChatEvent e;
  e.kind = EventKind::UserMessage;
  e.payload = {{"user_action", describe(act)}};
  emit(e);
  return result;
}

StateInfo Session::submit_user_response(const UserResponse& response) {
  std::lock_guard lock(mutex_);
  if (state_.state != SessionState::AwaitingUser || !pending_ask_)
    throw Error(ErrorCode::NotAwaiting, "session is " + state_.to_string());
  const AwaitKind kind = *state_.awaiting;
  const bool matches = (kind == AwaitKind::Options && response.kind != UserResponse::Kind::Confirm) ||
                       (kind == AwaitKind::FreeText && response.kind == UserResponse::Kind::FreeText) ||
                       (kind == AwaitKind::Confirm && response.kind == UserResponse::Kind::Confirm);
  if (!matches) throw Error(ErrorCode::ResponseKindMismatch, "response does not answer " + state_.to_string());

  json payload = {{"response", to_json(response)}};
  std::string content;
  if (kind == AwaitKind::Confirm) {
    const auto& question = std::get<action::Confirm>(pending_ask_->body).question;
    content = response.accept ? "The user accepted: \"" + question + "\""
                              : "The user rejected the confirmation request: \"" + question + "\"";
    payload["text"] = response.accept ? "accept" : "reject";
  } else {
    content = response.text;
    payload["text"] = response.text;
    if (kind == AwaitKind::Options) {
      const auto& options = std::get<action::AskOptions>(pending_ask_->body).options;
      const bool off_menu = std::find(options.begin(), options.end(), response.text) == options.end();
      payload["off_menu"] = off_menu;
    }
  }
  history_.push_back({Role::User, content, "user_response"});
  trace_.add_intervention({step_count_, "user_response", payload, now()});
  ChatEvent e;
  e.kind = EventKind::UserMessage;
  e.payload = payload;
  emit(e);
  pending_ask_.reset();
  transition({SessionState::Running, std::nullopt, {}}, nullptr);
  return state_;
}

StateInfo Session::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::size_t Session::step_count() const {
  std::lock_guard lock(mutex_);
  return step_count_;
}

SimSite Session::site() const {
  std::lock_guard lock(mutex_);
  return site_;
}

Viewport Session::viewport() const {
  std::lock_guard lock(mutex_);
  return viewport_;
}

std::vector<Message> Session::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

std::vector<std::string> Session::pending_options() const {
  std::lock_guard lock(mutex_);
  if (pending_ask_)
    if (const auto* ask = std::get_if<action::AskOptions>(&pending_ask_->body)) return ask->options;
  return {};
}

StateInfo Session::wait_until_actionable(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  state_changed_.wait_for(lock, timeout,
                          [&] { return state_.state == SessionState::Running || state_.terminal(); });
  return state_;
}

// ---------------------------------------------------------------------------
// Conformance

namespace {

std::optional<NodeKind> kind_of(const AgentAction& act) {
  return std::visit(
      [](const auto& b) -> std::optional<NodeKind> {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, action::ShowPlan>) return NodeKind::Plan;
        else if constexpr (std::is_same_v<T, action::SendMessage>) return NodeKind::Message;
        else if constexpr (std::is_same_v<T, action::AskOptions> || std::is_same_v<T, action::AskFreeText>)
          return NodeKind::Interact;
        else if constexpr (std::is_same_v<T, action::Confirm>) return NodeKind::Confirmation;
        else if constexpr (std::is_same_v<T, action::Finish>) return NodeKind::End;
        else return NodeKind::UIActions;
      },
      act.body);
}

std::vector<NodeKind> collapse(const std::vector<NodeKind>& kinds) {
  std::vector<NodeKind> out;
  for (auto k : kinds)
    if (out.empty() || out.back() != k) out.push_back(k);
  return out;
}

}  // namespace

std::string ConformanceReport::to_text() const {
  std::ostringstream out;
  out << "observed:";
  for (auto k : observed) out << ' ' << display_name(k);
  out << '\n';
  if (findings.empty()) out << "conformant\n";
  for (const auto& f : findings) {
    out << f.code << '(' << display_name(f.kind) << ')';
    if (!f.node_id.empty()) out << " node=" << f.node_id;
    if (f.step_index >= 0) out << " step=" << f.step_index;
    out << ": " << f.message << '\n';
  }
  return out.str();
}

json ConformanceReport::to_json() const {
  json arr = json::array();
  for (const auto& f : findings)
    arr.push_back({{"code", f.code},
                   {"node", f.node_id},
                   {"kind", agentbuilder::to_string(f.kind)},
                   {"step_index", f.step_index},
                   {"message", f.message}});
  json kinds = json::array();
  for (auto k : observed) kinds.push_back(agentbuilder::to_string(k));
  return {{"conformant", conformant()}, {"observed", kinds}, {"findings", arr}};
}

ConformanceReport conformance_check(const Trace& trace, const WorkflowGraph& graph) {
  ConformanceReport report;
  const auto records = trace.records();

  std::vector<NodeKind> observed;
  std::vector<std::int64_t> first_step;
  if (!records.empty()) {
    observed.push_back(NodeKind::Start);
    first_step.push_back(0);
  }
  for (const auto& r : records) {
    const auto* act = std::get_if<AgentAction>(&r.parsed_action);
    if (!act) continue;
    auto kind = *kind_of(*act);
    if (observed.empty() || observed.back() != kind) {
      observed.push_back(kind);
      first_step.push_back(static_cast<std::int64_t>(r.step_index));
    }
  }
  report.observed = observed;

  std::map<NodeKind, std::size_t> seen_count;
  for (auto k : observed) ++seen_count[k];
  std::map<NodeKind, std::size_t> nth;
  for (const auto& n : graph.nodes) {
    const std::size_t index = ++nth[n.kind];
    if (seen_count[n.kind] >= index) continue;
    report.findings.push_back({"MISSING_NODE", n.id, n.kind, -1,
                               "workflow node " + std::string(display_name(n.kind)) + " was never exercised"});
  }

  if (!observed.empty() && validate(graph).ok()) {
    const bool completed = observed.back() == NodeKind::End;
    std::size_t best = 0;
    bool matched = false;
    const auto paths = enumerate_paths(graph);
    for (const auto& p : paths.paths) {
      std::vector<NodeKind> kinds;
      for (const auto& id : p.nodes) kinds.push_back(graph.find_node(id)->kind);
      kinds = collapse(kinds);
      std::size_t common = 0;
      while (common < observed.size() && common < kinds.size() && observed[common] == kinds[common]) ++common;
      best = std::max(best, common);
      if (common == observed.size() && (!completed || common == kinds.size())) matched = true;
    }
    if (!matched) {
      const std::size_t at = std::min(best, observed.size() - 1);
      report.findings.push_back(
          {"UNEXPECTED_ORDER", "", observed[at], first_step[at],
           "no workflow path continues with " + std::string(display_name(observed[at])) +
               (at > 0 ? " after " + std::string(display_name(observed[at - 1])) : std::string{})});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Scenarios

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (base_dir.empty() || path.empty() || path.front() == '/') return path;
  return base_dir + "/" + path;
}

json json_or_file(const json& value, const std::string& base_dir) {
  if (value.is_string()) {
    auto j = json::parse(read_file(resolve(base_dir, value.get<std::string>())), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "'" + value.get<std::string>() + "' is not valid JSON");
    return j;
  }
  return value;
}

}  // namespace

std::vector<ControlCommand> control_commands_from_json(const json& j) {
  std::vector<ControlCommand> out;
  for (const auto& c : j) {
    ControlCommand cmd;
    cmd.after_step = c.at("after_step").get<std::size_t>();
    cmd.command = c.at("command").get<std::string>();
    if (cmd.command == "user_action") {
      cmd.action = env_action_from_json(c.at("action"));
    } else if (cmd.command != "pause" && cmd.command != "resume" && cmd.command != "cancel") {
      throw Error(ErrorCode::InvalidScenario, "unknown control command '" + cmd.command + "'");
    }
    out.push_back(std::move(cmd));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.after_step < b.after_step; });
  return out;
}

Scenario scenario_from_json(const json& j, const std::string& base_dir) {
  try {
    Scenario s;
    if (!j.contains("workflow")) throw Error(ErrorCode::InvalidScenario, "scenario needs 'workflow'");
    if (!j.contains("fixture")) throw Error(ErrorCode::InvalidScenario, "scenario needs 'fixture'");
    s.graph = graph_from_json(json_or_file(j.at("workflow"), base_dir));
    s.workflow_id = s.graph.id;
    s.fixture_document = json_or_file(j.at("fixture"), base_dir);
    s.fixture_id = s.fixture_document.value("id", std::string("fixture"));
    if (auto it = j.find("gateway_script"); it != j.end()) {
      s.gateway.kind = BackendKind::Scripted;
      s.gateway.script = script_from_json(json_or_file(*it, base_dir));
    } else if (auto g = j.find("gateway"); g != j.end()) {
      s.gateway = backend_config_from_json(*g, base_dir);
    }
    s.gateway.max_reprompts = j.value("max_reprompts", s.gateway.max_reprompts);
    s.user_query = j.value("user_query", std::string{});
    if (auto b = j.find("bundle"); b != j.end()) s.bundle = prompt_bundle_from_json(json_or_file(*b, base_dir));
    for (const auto& r : j.value("scripted_user_responses", json::array())) s.responses.push_back(user_response_from_json(r));
    s.commands = control_commands_from_json(j.value("control_commands", json::array()));
    s.step_limit = j.value("step_limit", 50);
    s.viewport_height = j.value("viewport_height", 20);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScenario, e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "scenario '" + path + "' is not valid JSON");
  auto slash = path.find_last_of('/');
  return scenario_from_json(j, slash == std::string::npos ? "." : path.substr(0, slash));
}

DriveOutcome drive_session(Session& session, const std::vector<UserResponse>& responses,
                           const std::vector<ControlCommand>& commands) {
  DriveOutcome outcome;
  std::size_t next_command = 0;
  std::size_t next_response = 0;
  while (true) {
    while (next_command < commands.size() && commands[next_command].after_step <= session.step_count()) {
      const auto& cmd = commands[next_command++];
      if (session.state().terminal()) continue;
      if (cmd.command == "pause") session.pause();
      else if (cmd.command == "resume") session.resume();
      else if (cmd.command == "cancel") session.cancel();
      else session.record_user_env_action(*cmd.action);
    }
    const auto st = session.state();
    if (st.terminal()) break;
    if (st.state == SessionState::Running) {
      session.step();
    } else if (st.state == SessionState::AwaitingUser) {
      if (next_response >= responses.size()) {
        outcome.responses_exhausted = true;
        session.cancel();
        break;
      }
      session.submit_user_response(responses[next_response++]);
    } else if (st.state == SessionState::Paused) {
      outcome.stalled = true;
      session.cancel();
      break;
    }
  }
  return outcome;
}

ScenarioRun run_scenario(const Scenario& scenario, std::string session_id, std::function<std::int64_t()> clock) {
  Session::Init init;
  init.id = std::move(session_id);
  init.graph = scenario.graph;
  init.bundle = scenario.bundle;
  init.site = load_fixture(scenario.fixture_document);
  init.backend = make_backend(scenario.gateway);
  init.user_query = scenario.user_query;
  init.config.step_limit = scenario.step_limit;
  init.config.max_reprompts = scenario.gateway.max_reprompts;
  init.config.viewport_height = scenario.viewport_height;
  init.config.clock = clock ? std::move(clock) : logical_clock();
  ScenarioRun run;
  run.session = Session::start(std::move(init));
  run.outcome = drive_session(*run.session, scenario.responses, scenario.commands);
  return run;
}

}  // namespace agentbuilder
