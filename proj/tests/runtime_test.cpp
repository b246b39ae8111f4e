#include <doctest.h>

#include <condition_variable>
#include <future>
#include <thread>

#include "agentbuilder/runtime.hpp"
#include "support.hpp"

using namespace agentbuilder;
using testing::call;

namespace {

std::unique_ptr<Session> start(const std::string& workflow, const json& entries, int step_limit = 50,
                               int max_reprompts = 2, std::unique_ptr<ModelBackend> backend = nullptr) {
  Session::Init init;
  init.id = "t";
  init.graph = testing::workflow(workflow);
  init.site = testing::coffee_shop();
  init.backend = backend ? std::move(backend) : testing::scripted(entries);
  init.user_query = "Order me a coffee please!";
  init.config.step_limit = step_limit;
  init.config.max_reprompts = max_reprompts;
  init.config.clock = logical_clock();
  return Session::start(std::move(init));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

json ask_coffee() {
  return call("ask_options", {{"question", "What type of coffee would you like?"},
                              {"options", {"Latte", "Cappuccino", "Mocha"}}});
}

std::vector<ChatEvent> of_kind(const std::vector<ChatEvent>& events, EventKind kind, Channel channel) {
  std::vector<ChatEvent> out;
  for (const auto& e : events)
    if (e.kind == kind && e.channel == channel) out.push_back(e);
  return out;
}

/// A backend whose completion blocks until released, to hold a step in flight.
class GatedBackend final : public ModelBackend {
 public:
  std::string complete_raw(const std::vector<Message>&, std::span<const ToolSchema>) override {
    std::unique_lock lock(m_);
    entered_ = true;
    cv_.notify_all();
    cv_.wait(lock, [&] { return released_; });
    released_ = false;
    entered_ = false;
    return render_call({"scroll", {{"direction", "down"}, {"amount", 1}}});
  }
  std::string expand(std::string_view t) override { return std::string(t); }
  std::string regenerate(std::string_view, std::string_view d) override { return std::string(d); }

  void wait_entered() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return entered_; });
  }
  void release() {
    std::lock_guard lock(m_);
    released_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  bool entered_ = false;
  bool released_ = false;
};

}  // namespace

TEST_CASE("start_session") {
  auto s = start("prototype1", json::array());
  CHECK(s->state().state == SessionState::Running);
  CHECK(s->step_count() == 0);
  CHECK(s->history().front().content == "Order me a coffee please!");
  const auto events = s->events().since(0);
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == EventKind::UserMessage);
  CHECK(events[1].kind == EventKind::Status);
  CHECK(events[1].payload["state"] == "running");
  CHECK(events[1].payload["from"] == "idle");

  Session::Init bad;
  bad.graph.nodes = {{"s", NodeKind::Start, {}, std::nullopt, nullptr}};
  bad.site = testing::coffee_shop();
  bad.backend = std::make_unique<TemplateBackend>();
  CHECK(code_of([&] { Session::start(std::move(bad)); }) == ErrorCode::InvalidGraph);

  Session::Init empty_query;
  empty_query.graph = testing::workflow("start_end");
  empty_query.site = testing::coffee_shop();
  empty_query.backend = std::make_unique<TemplateBackend>();
  CHECK(Session::start(std::move(empty_query))->state().state == SessionState::Running);
}

TEST_CASE("ask_options waits for the user; off-menu answers are accepted and flagged") {
  auto s = start("prototype1", json::array({ask_coffee(), call("finish", {{"summary", "done"}})}));
  const auto r = s->step();
  REQUIRE(r);
  CHECK(s->state().state == SessionState::AwaitingUser);
  CHECK(s->state().awaiting == AwaitKind::Options);
  CHECK(s->pending_options() == std::vector<std::string>{"Latte", "Cappuccino", "Mocha"});
  const auto asks = of_kind(r->events_emitted, EventKind::Ask, Channel::UserVisible);
  REQUIRE(asks.size() == 1);
  CHECK(asks[0].payload["options"].size() == 3);

  CHECK(code_of([&] { s->step(); }) == ErrorCode::NotRunning);
  CHECK(code_of([&] { s->submit_user_response(UserResponse::confirm(true)); }) == ErrorCode::ResponseKindMismatch);
  CHECK(s->submit_user_response(UserResponse::option("Flat white")).state == SessionState::Running);
  const auto iv = s->trace().interventions();
  REQUIRE(iv.size() == 1);
  CHECK(iv[0].payload["off_menu"] == true);
  CHECK(iv[0].after_step == 1);
  CHECK(code_of([&] { s->submit_user_response(UserResponse::option("Latte")); }) == ErrorCode::NotAwaiting);

  s->step();
  CHECK(s->state().state == SessionState::Completed);
  CHECK(code_of([&] { s->step(); }) == ErrorCode::NotRunning);
  CHECK(s->trace().sealed());
}

TEST_CASE("listed option is not flagged; confirm reject is visible to the model") {
  auto s = start("prototype1", json::array({ask_coffee(), call("confirm", {{"question", "Add it to the cart?"}}),
                                            call("finish", {{"summary", "ok"}})}));
  s->step();
  s->submit_user_response(UserResponse::option("Cappuccino"));
  CHECK(s->trace().interventions()[0].payload["off_menu"] == false);
  s->step();
  CHECK(s->state().awaiting == AwaitKind::Confirm);
  CHECK(code_of([&] { s->submit_user_response(UserResponse::free_text("yes")); }) ==
        ErrorCode::ResponseKindMismatch);
  s->submit_user_response(UserResponse::confirm(false));
  CHECK(s->state().state == SessionState::Running);
  const auto r = s->step();
  bool saw_rejection = false;
  for (const auto& m : r->input_context) saw_rejection |= m.content.find("rejected") != std::string::npos;
  CHECK(saw_rejection);
}

TEST_CASE("environment errors go back to the model and the session keeps running") {
  auto s = start("prototype1", json::array({call("click", {{"element", "nav-menu"}}),
                                            call("click", {{"element", "cappuccino-link"}}),
                                            call("click", {{"element", "btn-add-cart"}}),
                                            call("finish", {{"summary", "x"}})}));
  s->step();
  s->step();
  const auto version = s->site().version;
  const auto r = s->step();
  REQUIRE(r->env_result);
  CHECK(r->env_result->error == ErrorCode::ElementNotVisible);
  CHECK(s->state().state == SessionState::Running);
  CHECK(s->site().version == version);
  const auto next = s->step();
  bool saw = false;
  for (const auto& m : next->input_context) saw |= m.content.find("ELEMENT_NOT_VISIBLE") != std::string::npos;
  CHECK(saw);
}

TEST_CASE("malformed output is re-prompted, then fails the session") {
  auto s = start("prototype1", json::array({{{"output", "hmm"}}, {{"output", "still no"}}, {{"output", "nope"}}}), 50, 2);
  s->step();
  CHECK(s->state().state == SessionState::Running);
  const auto h = s->history();
  CHECK(h.back().tag == "corrective");
  s->step();
  CHECK(s->state().state == SessionState::Running);
  s->step();
  CHECK(s->state().state == SessionState::Failed);
  CHECK(s->state().failure_reason == "MALFORMED_OUTPUT");
  CHECK(s->trace().size() == 3);

  // A good reply resets the budget.
  auto t = start("prototype1",
                 json::array({{{"output", "x"}}, call("scroll", {{"direction", "down"}, {"amount", 1}}),
                              {{"output", "y"}}, {{"output", "z"}}, call("finish", {{"summary", "ok"}})}),
                 50, 2);
  for (int i = 0; i < 5; ++i) t->step();
  CHECK(t->state().state == SessionState::Completed);

  // Calls that parse but do not map onto the vocabulary count as malformed too.
  auto u = start("prototype1", json::array({call("ask_options", {{"question", "q"}, {"options", json::array()}})}), 50, 0);
  u->step();
  CHECK(u->state().failure_reason == "MALFORMED_OUTPUT");
}

TEST_CASE("script exhaustion and the step cap fail the session") {
  auto s = start("prototype1", json::array({call("scroll", {{"direction", "down"}, {"amount", 1}})}));
  s->step();
  s->step();
  CHECK(s->state().state == SessionState::Failed);
  CHECK(s->state().failure_reason == "SCRIPT_EXHAUSTED");
  CHECK(s->trace().size() == 2);

  json many = json::array();
  for (int i = 0; i < 10; ++i) many.push_back(call("scroll", {{"direction", "down"}, {"amount", 1}}));
  auto capped = start("prototype1", many, 3);
  for (int i = 0; i < 3; ++i) capped->step();
  CHECK(capped->state().state == SessionState::Running);
  CHECK_FALSE(capped->step().has_value());
  CHECK(capped->state().failure_reason == "STEP_LIMIT");
  CHECK(capped->trace().size() == 3);
}

TEST_CASE("legal and illegal control transitions") {
  auto s = start("prototype1", json::array({ask_coffee(), call("finish", {{"summary", "ok"}})}));
  CHECK(code_of([&] { s->resume(); }) == ErrorCode::IllegalTransition);
  CHECK(code_of([&] { s->record_user_env_action(action::Scroll{}); }) == ErrorCode::NotPaused);
  CHECK(s->pause().state == SessionState::Paused);  // Running -> Paused
  CHECK(code_of([&] { s->pause(); }) == ErrorCode::IllegalTransition);
  CHECK(code_of([&] { s->step(); }) == ErrorCode::NotRunning);
  CHECK(code_of([&] { s->record_user_env_action(action::Click{"ghost"}); }) == ErrorCode::ElementNotFound);
  CHECK(s->state().state == SessionState::Paused);
  CHECK(s->resume().state == SessionState::Running);
  s->step();
  CHECK(s->state().state == SessionState::AwaitingUser);
  CHECK(s->pause().state == SessionState::Paused);  // AwaitingUser -> Paused
  s->resume();
  CHECK(s->history().back().content.find("not answered") != std::string::npos);
  CHECK(s->cancel().state == SessionState::Cancelled);
  CHECK(code_of([&] { s->cancel(); }) == ErrorCode::IllegalTransition);
  CHECK(code_of([&] { s->resume(); }) == ErrorCode::IllegalTransition);
  CHECK(code_of([&] { s->pause(); }) == ErrorCode::IllegalTransition);
  CHECK(s->trace().final_state() == "cancelled");
  CHECK(s->events().closed());
}

TEST_CASE("user actions while paused show up in the next observation") {
  auto s = start("prototype1", json::array({call("click", {{"element", "nav-menu"}}),
                                            call("click", {{"element", "cappuccino-link"}}),
                                            call("finish", {{"summary", "ok"}})}));
  s->step();
  s->step();
  s->pause();
  CHECK(s->record_user_env_action(action::Scroll{action::Direction::Down, 30}).ok);
  const auto added = s->record_user_env_action(action::Click{"btn-add-cart"});
  CHECK(added.ok);
  CHECK(s->site().cart.size() == 1);
  CHECK(s->history().back().tag == "user_action");
  CHECK(s->trace().interventions().size() == 2);
  s->resume();
  const auto r = s->step();
  CHECK(r->observation.cart_summary == "Cappuccino x1");
  CHECK(r->input_context.back().content.find("Cappuccino x1") != std::string::npos);
}

TEST_CASE("project_visible follows the display configuration") {
  auto s = start("prototype1", json::array({call("scroll", {{"direction", "down"}, {"amount", 2}, {"description", "Look further"}},
                                                 "the button is below")}));
  const auto r = *s->step();
  const UIActionsDisplayConfig silent{};
  auto events = project_visible(r, silent);
  CHECK(std::none_of(events.begin(), events.end(), [](auto& e) { return e.channel == Channel::UserVisible; }));
  CHECK(events.size() == 2);

  events = project_visible(r, {true, false, false, false});
  auto notices = of_kind(events, EventKind::ActionNotice, Channel::UserVisible);
  REQUIRE(notices.size() == 1);
  CHECK(notices[0].payload == json({{"name", "scroll"}}));

  events = project_visible(r, {true, true, true, true});
  notices = of_kind(events, EventKind::ActionNotice, Channel::UserVisible);
  REQUIRE(notices.size() == 1);
  CHECK(notices[0].payload == json({{"name", "scroll"}, {"description", "Look further"}, {"reasoning", "the button is below"}}));
  CHECK(of_kind(events, EventKind::EnvHighlight, Channel::UserVisible).size() == 1);
  CHECK(of_kind(events, EventKind::Reasoning, Channel::Debug)[0].payload["text"] == "the button is below");
}

TEST_CASE("pause and cancel requested during an in-flight step apply at its end") {
  auto gate = std::make_unique<GatedBackend>();
  auto* g = gate.get();
  auto s = start("prototype1", json::array(), 50, 2, std::move(gate));

  auto fut = std::async(std::launch::async, [&] { return s->step(); });
  g->wait_entered();
  CHECK(s->pause().state == SessionState::Running);  // deferred
  g->release();
  const auto r = fut.get();
  REQUIRE(r);
  CHECK(s->state().state == SessionState::Paused);
  CHECK(s->trace().size() == 1);
  CHECK(r->events_emitted.back().kind == EventKind::Status);
  CHECK(r->events_emitted.back().payload["state"] == "paused");

  s->resume();
  fut = std::async(std::launch::async, [&] { return s->step(); });
  g->wait_entered();
  s->cancel();
  CHECK(code_of([&] { s->cancel(); }) == ErrorCode::IllegalTransition);
  g->release();
  fut.get();
  CHECK(s->state().state == SessionState::Cancelled);
  CHECK(s->trace().size() == 2);
  CHECK(s->trace().sealed());
}

TEST_CASE("every transition emits one status event and step events precede it") {
  auto run = run_scenario(testing::scenario("coffee_order_no_scroll"));
  const auto events = run.session->events().since(0);
  std::string state = "idle";
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i].seq == i);
    if (events[i].kind != EventKind::Status) continue;
    CHECK(events[i].payload["from"] == state);
    CHECK(events[i].payload["state"] != state);
    state = events[i].payload["state"];
  }
  CHECK(state == "completed");
  for (const auto& r : run.session->trace().records()) {
    bool seen_status = false;
    for (const auto& e : r.events_emitted) {
      if (e.kind == EventKind::Status) seen_status = true;
      else CHECK_FALSE(seen_status);
    }
  }
}

TEST_CASE("conformance examples") {
  const auto p2 = testing::workflow("prototype2");
  const auto compliant = run_scenario(testing::scenario("p2_compliant"));
  CHECK(compliant.session->state().state == SessionState::Completed);
  const auto ok = conformance_check(compliant.session->trace(), p2);
  CHECK(ok.conformant());
  CHECK(ok.observed == std::vector<NodeKind>{NodeKind::Start, NodeKind::Plan, NodeKind::UIActions, NodeKind::Message,
                                             NodeKind::End});

  const auto missing = run_scenario(testing::scenario("p2_missing_plan"));
  const auto bad = conformance_check(missing.session->trace(), p2);
  CHECK_FALSE(bad.conformant());
  CHECK(std::any_of(bad.findings.begin(), bad.findings.end(),
                    [](const Finding& f) { return f.code == "MISSING_NODE" && f.kind == NodeKind::Plan; }));

  const Trace empty("e", "prototype2", "coffee_shop");
  const auto none = conformance_check(empty, p2);
  CHECK(none.findings.size() == p2.nodes.size());
  for (const auto& f : none.findings) CHECK(f.code == "MISSING_NODE");
}
