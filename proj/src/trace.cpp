#include "agentbuilder/trace.hpp"

#include <mutex>
#include <sstream>

#include <openssl/evp.h>

namespace agentbuilder {

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::AgentMessage, "agent_message"},     {EventKind::ActionNotice, "action_notice"},
    {EventKind::EnvHighlight, "env_highlight"},     {EventKind::Plan, "plan"},
    {EventKind::Ask, "ask"},                        {EventKind::ConfirmRequest, "confirm_request"},
    {EventKind::UserMessage, "user_message"},       {EventKind::Status, "status"},
    {EventKind::ToolCall, "tool_call"},             {EventKind::Reasoning, "reasoning"},
};

constexpr std::string_view kTraceFormat = "agentbuilder-trace/1";

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

json parsed_action_to_json(const ParsedAction& p) {
  if (const auto* act = std::get_if<AgentAction>(&p)) {
    const auto call = to_tool_call(*act);
    return {{"ok", true}, {"tool", call.name}, {"args", call.args}, {"reasoning", act->reasoning}};
  }
  return {{"ok", false}, {"failure", to_json(std::get<ParseFailure>(p))}};
}

ParsedAction parsed_action_from_json(const json& j) {
  if (j.at("ok").get<bool>())
    return action_from_call({j.at("tool").get<std::string>(), j.at("args")}, j.at("reasoning").get<std::string>());
  return parse_failure_from_json(j.at("failure"));
}

}  // namespace

std::string_view to_string(Channel c) { return c == Channel::Debug ? "debug" : "user_visible"; }

std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kEventNames)
    if (kind == k) return name;
  return "status";
}

std::optional<Channel> channel_from_string(std::string_view text) {
  if (text == "debug") return Channel::Debug;
  if (text == "user_visible") return Channel::UserVisible;
  return std::nullopt;
}

json to_json(const ChatEvent& e) {
  return {{"seq", e.seq},
          {"channel", to_string(e.channel)},
          {"kind", to_string(e.kind)},
          {"payload", e.payload},
          {"step_index", e.step_index},
          {"timestamp", e.timestamp}};
}

ChatEvent chat_event_from_json(const json& j) {
  ChatEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  auto channel = channel_from_string(j.at("channel").get<std::string>());
  if (!channel) throw Error(ErrorCode::ParseError, "unknown channel");
  e.channel = *channel;
  const auto kind = j.at("kind").get<std::string>();
  bool known = false;
  for (const auto& [k, name] : kEventNames)
    if (name == kind) e.kind = k, known = true;
  if (!known) throw Error(ErrorCode::ParseError, "unknown event kind '" + kind + "'");
  e.payload = j.at("payload");
  e.step_index = j.at("step_index").get<std::int64_t>();
  e.timestamp = j.at("timestamp").get<std::int64_t>();
  return e;
}

std::string context_digest(const std::vector<Message>& context) {
  json arr = json::array();
  for (const auto& m : context) arr.push_back(to_json(m));
  return sha256_hex(arr.dump());
}

json to_json(const StepRecord& r, bool with_digest) {
  json context = json::array();
  for (const auto& m : r.input_context) context.push_back(to_json(m));
  json events = json::array();
  for (const auto& e : r.events_emitted) events.push_back(to_json(e));
  json j = {{"type", "step"},
            {"step_index", r.step_index},
            {"observation", to_json(r.observation)},
            {"context_digest", r.context_digest},
            {"input_context", std::move(context)},
            {"output", to_json(r.output)},
            {"parsed_action", parsed_action_to_json(r.parsed_action)},
            {"env_result", r.env_result ? to_json(*r.env_result) : json(nullptr)},
            {"events", std::move(events)},
            {"wall_time", r.wall_time}};
  if (with_digest) j["record_digest"] = r.record_digest;
  return j;
}

StepRecord step_record_from_json(const json& j) {
  StepRecord r;
  r.step_index = j.at("step_index").get<std::size_t>();
  r.observation = observation_from_json(j.at("observation"));
  r.context_digest = j.at("context_digest").get<std::string>();
  for (const auto& m : j.at("input_context")) r.input_context.push_back(message_from_json(m));
  r.output = model_output_from_json(j.at("output"));
  r.parsed_action = parsed_action_from_json(j.at("parsed_action"));
  if (const auto& env = j.at("env_result"); !env.is_null()) r.env_result = action_result_from_json(env);
  for (const auto& e : j.at("events")) r.events_emitted.push_back(chat_event_from_json(e));
  r.wall_time = j.at("wall_time").get<std::int64_t>();
  r.record_digest = j.value("record_digest", std::string{});
  return r;
}

std::string compute_record_digest(const StepRecord& record) { return sha256_hex(to_json(record, false).dump()); }

void seal_record(StepRecord& record) {
  record.context_digest = context_digest(record.input_context);
  record.record_digest = compute_record_digest(record);
}

// ---------------------------------------------------------------------------
// Trace

Trace::Trace(std::string session_id, std::string workflow_id, std::string fixture_id)
    : session_id_(std::move(session_id)), workflow_id_(std::move(workflow_id)), fixture_id_(std::move(fixture_id)) {}

Trace::Trace(const Trace& other) {
  std::shared_lock lock(other.mutex_);
  session_id_ = other.session_id_;
  workflow_id_ = other.workflow_id_;
  fixture_id_ = other.fixture_id_;
  records_ = other.records_;
  interventions_ = other.interventions_;
  final_state_ = other.final_state_;
  sealed_ = other.sealed_;
}

Trace& Trace::operator=(const Trace& other) {
  if (this == &other) return *this;
  Trace copy(other);
  std::unique_lock lock(mutex_);
  session_id_ = std::move(copy.session_id_);
  workflow_id_ = std::move(copy.workflow_id_);
  fixture_id_ = std::move(copy.fixture_id_);
  records_ = std::move(copy.records_);
  interventions_ = std::move(copy.interventions_);
  final_state_ = std::move(copy.final_state_);
  sealed_ = copy.sealed_;
  return *this;
}

void Trace::append(StepRecord record) {
  std::unique_lock lock(mutex_);
  if (sealed_) throw Error(ErrorCode::TraceSealed, "trace of session " + session_id_ + " is sealed");
  if (record.step_index != records_.size())
    throw Error(ErrorCode::IndexGap, "expected step " + std::to_string(records_.size()) + ", got " +
                                         std::to_string(record.step_index));
  records_.push_back(std::move(record));
}

void Trace::add_intervention(Intervention intervention) {
  std::unique_lock lock(mutex_);
  if (sealed_) throw Error(ErrorCode::TraceSealed, "trace of session " + session_id_ + " is sealed");
  interventions_.push_back(std::move(intervention));
}

void Trace::seal(std::string final_state) {
  std::unique_lock lock(mutex_);
  if (sealed_) throw Error(ErrorCode::TraceSealed, "trace already sealed");
  final_state_ = std::move(final_state);
  sealed_ = true;
}

bool Trace::sealed() const {
  std::shared_lock lock(mutex_);
  return sealed_;
}

std::string Trace::final_state() const {
  std::shared_lock lock(mutex_);
  return final_state_;
}

std::size_t Trace::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

const StepRecord& Trace::get(std::size_t index) const {
  std::shared_lock lock(mutex_);
  if (index >= records_.size())
    throw Error(ErrorCode::OutOfRange, "step " + std::to_string(index) + " of " + std::to_string(records_.size()));
  return records_[index];
}

std::vector<StepRecord> Trace::records() const {
  std::shared_lock lock(mutex_);
  return {records_.begin(), records_.end()};
}

std::vector<Intervention> Trace::interventions() const {
  std::shared_lock lock(mutex_);
  return interventions_;
}

bool operator==(const Trace& a, const Trace& b) {
  if (&a == &b) return true;
  std::shared_lock la(a.mutex_), lb(b.mutex_);
  return a.session_id_ == b.session_id_ && a.workflow_id_ == b.workflow_id_ && a.fixture_id_ == b.fixture_id_ &&
         a.records_ == b.records_ && a.interventions_ == b.interventions_ && a.final_state_ == b.final_state_ &&
         a.sealed_ == b.sealed_;
}

// ---------------------------------------------------------------------------
// JSON Lines

std::string export_trace(const Trace& trace) {
  const auto records = trace.records();
  const auto interventions = trace.interventions();
  std::ostringstream out;
  out << json{{"type", "header"},
              {"format", kTraceFormat},
              {"session", trace.session_id()},
              {"workflow", trace.workflow_id()},
              {"fixture", trace.fixture_id()},
              {"sealed", trace.sealed()},
              {"final_state", trace.final_state()},
              {"steps", records.size()}}
             .dump()
      << '\n';
  std::size_t next_intervention = 0;
  auto flush_interventions = [&](std::size_t up_to_step) {
    while (next_intervention < interventions.size() && interventions[next_intervention].after_step <= up_to_step) {
      const auto& iv = interventions[next_intervention++];
      out << json{{"type", "intervention"},
                  {"after_step", iv.after_step},
                  {"kind", iv.kind},
                  {"payload", iv.payload},
                  {"wall_time", iv.wall_time}}
                 .dump()
          << '\n';
    }
  };
  for (const auto& r : records) {
    flush_interventions(r.step_index);
    out << to_json(r).dump() << '\n';
  }
  flush_interventions(static_cast<std::size_t>(-1));
  return out.str();
}

Trace import_trace(std::string_view document) {
  std::istringstream in{std::string(document)};
  std::string line;
  std::size_t line_no = 0;
  std::optional<Trace> trace;
  bool sealed = false;
  std::string final_state;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "line is not a JSON object", where);
    const auto type = j.value("type", std::string{});
    try {
      if (!trace) {
        if (type != "header" || j.value("format", std::string{}) != kTraceFormat)
          throw Error(ErrorCode::ParseError, "first line must be a " + std::string(kTraceFormat) + " header", where);
        trace.emplace(j.at("session").get<std::string>(), j.at("workflow").get<std::string>(),
                      j.at("fixture").get<std::string>());
        sealed = j.at("sealed").get<bool>();
        final_state = j.at("final_state").get<std::string>();
      } else if (type == "step") {
        auto record = step_record_from_json(j);
        if (context_digest(record.input_context) != record.context_digest)
          throw Error(ErrorCode::TamperedRecord, "context digest mismatch for step " + std::to_string(record.step_index), where);
        if (compute_record_digest(record) != record.record_digest)
          throw Error(ErrorCode::TamperedRecord, "record digest mismatch for step " + std::to_string(record.step_index), where);
        trace->append(std::move(record));
      } else if (type == "intervention") {
        trace->add_intervention({j.at("after_step").get<std::size_t>(), j.at("kind").get<std::string>(),
                                 j.at("payload"), j.at("wall_time").get<std::int64_t>()});
      } else {
        throw Error(ErrorCode::ParseError, "unknown line type '" + type + "'", where);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, e.what(), where);
    }
  }
  if (!trace) throw Error(ErrorCode::ParseError, "trace document has no header", "line 1");
  if (sealed) trace->seal(final_state);
  return std::move(*trace);
}

std::vector<ChatEvent> debug_projection(const StepRecord& record) {
  ChatEvent call;
  call.channel = Channel::Debug;
  call.kind = EventKind::ToolCall;
  call.step_index = static_cast<std::int64_t>(record.step_index);
  call.timestamp = record.wall_time;
  if (const auto* act = std::get_if<AgentAction>(&record.parsed_action)) {
    const auto tc = to_tool_call(*act);
    call.payload = {{"tool", tc.name}, {"args", tc.args}};
  } else {
    const auto& failure = std::get<ParseFailure>(record.parsed_action);
    call.payload = {{"raw", failure.raw}, {"failure", code_name(failure.code)}, {"message", failure.message}};
  }
  ChatEvent reasoning = call;
  reasoning.kind = EventKind::Reasoning;
  reasoning.payload = {{"text", record.output.reasoning}, {"empty", record.output.reasoning.empty()}};
  return {std::move(call), std::move(reasoning)};
}

}  // namespace agentbuilder
