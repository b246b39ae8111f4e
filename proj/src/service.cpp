#include "agentbuilder/service.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "agentbuilder/compiler.hpp"
#include "agentbuilder/runtime.hpp"
#include "agentbuilder/sim_env.hpp"
#include "agentbuilder/trace.hpp"
#include "agentbuilder/workflow.hpp"

namespace fs = std::filesystem;

namespace agentbuilder {

// ---------------------------------------------------------------------------
// Configuration

ServiceConfig service_config_from_json(const json& j) {
  ServiceConfig c;
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "service config must be an object");
  if (auto it = j.find("listen"); it != j.end()) {
    const auto text = it->get<std::string>();
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "listen must be host:port");
    c.host = text.substr(0, colon);
    c.port = std::stoi(text.substr(colon + 1));
  }
  c.store_dir = j.value("store_dir", c.store_dir);
  c.fixtures_dir = j.value("fixtures_dir", c.fixtures_dir);
  if (auto it = j.find("gateway"); it != j.end()) c.gateway_defaults = *it;
  return c;
}

void apply_env_overrides(ServiceConfig& config) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("AGENTBUILDER_LISTEN")) {
    auto parsed = service_config_from_json({{"listen", *v}});
    config.host = parsed.host;
    config.port = parsed.port;
  }
  if (auto v = env("AGENTBUILDER_STORE_DIR")) config.store_dir = *v;
  if (auto v = env("AGENTBUILDER_FIXTURES_DIR")) config.fixtures_dir = *v;
  if (auto v = env("AGENTBUILDER_GATEWAY")) {
    auto j = json::parse(*v, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "AGENTBUILDER_GATEWAY is not valid JSON");
    config.gateway_defaults = j;
  }
}

ServiceConfig load_service_config(const std::string& path) {
  ServiceConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path + "'");
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "config '" + path + "' is not valid JSON");
    c = service_config_from_json(j);
  }
  apply_env_overrides(c);
  return c;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::WorkflowNotFound:
    case ErrorCode::FixtureNotFound:
    case ErrorCode::SessionNotFound:
    case ErrorCode::OutOfRange:
      return 404;
    case ErrorCode::RevisionConflict:
    case ErrorCode::IllegalTransition:
    case ErrorCode::NotRunning:
    case ErrorCode::NotPaused:
    case ErrorCode::NotAwaiting:
    case ErrorCode::IndexGap:
    case ErrorCode::TraceSealed:
      return 409;
    case ErrorCode::ElementNotFound:
    case ErrorCode::ElementNotVisible:
    case ErrorCode::InvalidTarget:
    case ErrorCode::UnknownUrl:
    case ErrorCode::PreconditionFailed:
    case ErrorCode::MalformedRegeneration:
    case ErrorCode::ResponseKindMismatch:
    case ErrorCode::InvalidGraph:
    case ErrorCode::TamperedRecord:
      return 422;
    case ErrorCode::GatewayUnavailable:
    case ErrorCode::ScriptExhausted:
      return 502;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

json error_body(const Error& e) {
  return {{"error", {{"code", code_name(e.code())}, {"message", e.detail()}, {"where", e.where()}}}};
}

// ---------------------------------------------------------------------------
// Stores

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, p);
}

bool safe_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return id.front() != '.';
}

void require_safe_id(const std::string& id, const char* what) {
  if (!safe_id(id)) throw Error(ErrorCode::BadRequest, std::string(what) + " id must be [A-Za-z0-9._-]+");
}

class WorkflowStore {
 public:
  explicit WorkflowStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    for (const auto& entry : fs::directory_iterator(dir_)) {
      if (entry.path().extension() != ".json") continue;
      auto g = deserialize(read_text(entry.path()));
      docs_[g.id] = std::move(g);
    }
  }

  WorkflowGraph get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = docs_.find(id);
    if (it == docs_.end()) throw Error(ErrorCode::WorkflowNotFound, "no workflow '" + id + "'");
    return it->second;
  }

  std::vector<WorkflowGraph> list() const {
    std::lock_guard lock(mutex_);
    std::vector<WorkflowGraph> out;
    for (const auto& [id, g] : docs_) out.push_back(g);
    return out;
  }

  void create(const WorkflowGraph& g) {
    require_safe_id(g.id, "workflow");
    std::lock_guard lock(mutex_);
    if (docs_.count(g.id)) throw Error(ErrorCode::RevisionConflict, "workflow '" + g.id + "' already exists");
    persist(g);
  }

  /// Replaces the stored document when `expected_revision` matches; the stored copy gets revision + 1.
  WorkflowGraph update(WorkflowGraph g, std::int64_t expected_revision) {
    std::lock_guard lock(mutex_);
    auto it = docs_.find(g.id);
    if (it == docs_.end()) throw Error(ErrorCode::WorkflowNotFound, "no workflow '" + g.id + "'");
    if (it->second.revision != expected_revision)
      throw Error(ErrorCode::RevisionConflict, "workflow '" + g.id + "' is at revision " +
                                                   std::to_string(it->second.revision) + ", not " +
                                                   std::to_string(expected_revision));
    g.revision = expected_revision + 1;
    persist(g);
    return g;
  }

 private:
  void persist(const WorkflowGraph& g) {
    write_text(dir_ / (g.id + ".json"), serialize(g));
    docs_[g.id] = g;
  }

  fs::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, WorkflowGraph> docs_;
};

class FixtureStore {
 public:
  FixtureStore(fs::path dir, const std::string& bundled_dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    if (!bundled_dir.empty() && fs::is_directory(bundled_dir)) load_dir(bundled_dir);
    load_dir(dir_);
  }

  json get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = docs_.find(id);
    if (it == docs_.end()) throw Error(ErrorCode::FixtureNotFound, "no fixture '" + id + "'");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, doc] : docs_) out.push_back(id);
    return out;
  }

  std::string put(const json& doc) {
    const auto site = load_fixture(doc);
    require_safe_id(site.fixture_id, "fixture");
    std::lock_guard lock(mutex_);
    write_text(dir_ / (site.fixture_id + ".json"), doc.dump(2) + "\n");
    docs_[site.fixture_id] = doc;
    return site.fixture_id;
  }

 private:
  void load_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto doc = json::parse(read_text(f));
      docs_[load_fixture(doc).fixture_id] = doc;
    }
  }

  fs::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, json> docs_;
};

struct LiveSession {
  std::unique_ptr<Session> session;
  std::thread executor;
  std::atomic<bool> done{false};
};

json state_json(const StateInfo& s) { return s.to_string(); }

}  // namespace

// ---------------------------------------------------------------------------
// Service

struct Service::Impl {
  ServiceConfig config;
  httplib::Server server;
  WorkflowStore workflows;
  FixtureStore fixtures;
  fs::path trace_dir;
  std::thread listener;
  int bound_port = -1;
  std::atomic<bool> stopping{false};

  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions;
  std::uint64_t next_session = 1;

  explicit Impl(ServiceConfig c)
      : config(std::move(c)),
        workflows(fs::path(config.store_dir) / "workflows"),
        fixtures(fs::path(config.store_dir) / "fixtures", config.fixtures_dir),
        trace_dir(fs::path(config.store_dir) / "traces") {
    fs::create_directories(trace_dir);
    // Session ids stay unique across restarts: continue after the highest stored trace.
    for (const auto& entry : fs::directory_iterator(trace_dir)) {
      const auto stem = entry.path().stem().string();
      if (stem.rfind("s", 0) == 0 && stem.size() > 1 && stem.find_first_not_of("0123456789", 1) == std::string::npos)
        next_session = std::max<std::uint64_t>(next_session, std::stoull(stem.substr(1)) + 1);
    }
    routes();
  }

  std::shared_ptr<LiveSession> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::SessionNotFound, "no live session '" + id + "'");
    return it->second;
  }

  std::optional<Trace> stored_trace(const std::string& id) {
    if (!safe_id(id)) return std::nullopt;
    const auto path = trace_dir / (id + ".jsonl");
    if (!fs::exists(path)) return std::nullopt;
    return import_trace(read_text(path));
  }

  Trace trace_of(const std::string& id) {
    {
      std::lock_guard lock(sessions_mutex);
      if (auto it = sessions.find(id); it != sessions.end()) return it->second->session->trace();
    }
    if (auto t = stored_trace(id)) return *t;
    throw Error(ErrorCode::SessionNotFound, "no session '" + id + "'");
  }

  void persist_trace(const Session& s) { write_text(trace_dir / (s.id() + ".jsonl"), export_trace(s.trace())); }

  static void run_interactive(Session& s, const std::atomic<bool>& stopping) {
    while (!stopping) {
      const auto st = s.wait_until_actionable(std::chrono::milliseconds(200));
      if (st.terminal()) return;
      if (st.state != SessionState::Running) continue;
      try {
        s.step();
      } catch (const Error& e) {
        // A control operation won the race for the state; re-check.
        if (e.code() != ErrorCode::NotRunning) throw;
      }
    }
  }

  json create_session(const json& body) {
    if (!body.is_object()) throw Error(ErrorCode::BadRequest, "session request must be an object");
    const auto workflow_id = body.value("workflow_id", std::string{});
    const auto fixture_id = body.value("fixture_id", std::string{});
    if (workflow_id.empty()) throw Error(ErrorCode::BadRequest, "workflow_id is required");
    if (fixture_id.empty()) throw Error(ErrorCode::BadRequest, "fixture_id is required");

    Session::Init init;
    init.graph = workflows.get(workflow_id);
    init.site = load_fixture(fixtures.get(fixture_id));
    auto gateway = backend_config_from_json(body.value("gateway", config.gateway_defaults));
    init.backend = make_backend(gateway);
    init.user_query = body.value("user_query", std::string{});
    if (auto b = body.find("bundle"); b != body.end()) init.bundle = prompt_bundle_from_json(*b);
    init.config.step_limit = body.value("step_limit", 50);
    init.config.viewport_height = body.value("viewport_height", 20);
    init.config.max_reprompts = body.value("max_reprompts", gateway.max_reprompts);

    std::vector<UserResponse> responses;
    for (const auto& r : body.value("scripted_user_responses", json::array())) responses.push_back(user_response_from_json(r));
    auto commands = control_commands_from_json(body.value("control_commands", json::array()));
    const bool driven = body.contains("scripted_user_responses") || body.contains("control_commands");

    auto live = std::make_shared<LiveSession>();
    {
      std::lock_guard lock(sessions_mutex);
      init.id = "s" + std::to_string(next_session++);
      live->session = Session::start(std::move(init));
      sessions[live->session->id()] = live;
    }
    Session* s = live->session.get();
    live->executor = std::thread([this, live, s, driven, responses = std::move(responses),
                                  commands = std::move(commands)] {
      try {
        if (driven)
          drive_session(*s, responses, commands);
        else
          run_interactive(*s, stopping);
      } catch (const std::exception&) {
        if (!s->state().terminal()) {
          try {
            s->cancel();
          } catch (const Error&) {
          }
        }
      }
      if (s->state().terminal()) persist_trace(*s);
      live->done = true;
    });
    return {{"id", s->id()}, {"state", state_json(s->state())}};
  }

  json session_json(const Session& s) {
    return {{"id", s.id()},
            {"workflow_id", s.graph().id},
            {"state", state_json(s.state())},
            {"step_count", s.step_count()},
            {"pending_options", s.pending_options()},
            {"events", s.events().size()}};
  }

  // -------------------------------------------------------------------------

  static void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "request body is not valid JSON");
    return j;
  }

  template <typename F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_json(res, error_body(e), http_status(e.code()));
      } catch (const json::exception& e) {
        send_json(res, error_body(Error(ErrorCode::BadRequest, e.what())), 400);
      } catch (const std::exception& e) {
        send_json(res, error_body(Error(ErrorCode::IoError, e.what())), 500);
      }
    };
  }

  void control(const char* route, StateInfo (Session::*op)()) {
    server.Post(std::string("/sessions/([^/]+)/") + route, guarded([this, op](const auto& req, auto& res) {
                  auto live = find_session(req.matches[1]);
                  auto st = ((*live->session).*op)();
                  send_json(res, {{"id", live->session->id()}, {"state", state_json(st)}}, 202);
                }));
  }

  void stream_events(const httplib::Request& req, httplib::Response& res) {
    auto live = find_session(req.matches[1]);
    bool user_visible = true, debug = true;
    if (req.has_param("channels")) {
      user_visible = debug = false;
      std::stringstream list(req.get_param_value("channels"));
      std::string item;
      while (std::getline(list, item, ',')) {
        auto ch = channel_from_string(item);
        if (!ch) throw Error(ErrorCode::BadRequest, "unknown channel '" + item + "'");
        (*ch == Channel::Debug ? debug : user_visible) = true;
      }
    }
    std::uint64_t from = 0;
    if (req.has_param("from_seq")) from = std::stoull(req.get_param_value("from_seq"));
    else if (req.has_header("Last-Event-ID")) from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;

    auto next = std::make_shared<std::uint64_t>(from);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, live, next, user_visible, debug](std::size_t, httplib::DataSink& sink) {
          const auto& log = live->session->events();
          while (!stopping) {
            const bool closed = log.closed();
            auto events = log.since(*next);
            if (!events.empty()) {
              std::string chunk;
              for (const auto& e : events) {
                *next = e.seq + 1;
                if ((e.channel == Channel::UserVisible && !user_visible) || (e.channel == Channel::Debug && !debug))
                  continue;
                chunk += "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
                         "\ndata: " + to_json(e).dump() + "\n\n";
              }
              if (!chunk.empty() && !sink.write(chunk.data(), chunk.size())) return false;
              continue;
            }
            if (closed) break;
            log.wait(*next, std::chrono::milliseconds(500));
          }
          sink.done();
          return true;
        });
  }

  void routes() {
    server.Get("/workflows", guarded([this](const auto&, auto& res) {
                 json arr = json::array();
                 for (const auto& g : workflows.list())
                   arr.push_back({{"id", g.id}, {"name", g.name}, {"revision", g.revision}});
                 send_json(res, arr);
               }));
    server.Post("/workflows", guarded([this](const auto& req, auto& res) {
                  auto g = graph_from_json(parse_body(req));
                  workflows.create(g);
                  send_json(res, {{"id", g.id}, {"revision", g.revision}, {"validation", validate(g).to_json()}}, 201);
                }));
    server.Get("/workflows/([^/]+)", guarded([this](const auto& req, auto& res) {
                 res.set_content(serialize(workflows.get(req.matches[1])), "application/json");
               }));
    server.Put("/workflows/([^/]+)", guarded([this](const auto& req, auto& res) {
                 auto body = parse_body(req);
                 auto g = graph_from_json(body);
                 if (g.id != std::string(req.matches[1]))
                   throw Error(ErrorCode::BadRequest, "document id does not match the route");
                 if (!body.contains("revision"))
                   throw Error(ErrorCode::MissingField, "update needs the revision it was based on", "/revision");
                 auto stored = workflows.update(g, g.revision);
                 res.set_content(serialize(stored), "application/json");
               }));
    server.Post("/workflows/([^/]+)/compile", guarded([this](const auto& req, auto& res) {
                  auto body = parse_body(req);
                  auto g = workflows.get(req.matches[1]);
                  PromptBundle bundle;
                  if (auto b = body.find("bundle"); b != body.end()) bundle = prompt_bundle_from_json(*b);
                  auto backend = make_backend(backend_config_from_json(body.value("gateway", config.gateway_defaults)));
                  auto c = compile_workflow(g, bundle, *backend);
                  send_json(res, {{"path_text", c.path_text},
                                  {"workflow_prompt", c.workflow_prompt},
                                  {"system_prompt", c.system_prompt.text},
                                  {"warnings", c.warnings}});
                }));
    server.Post("/workflows/([^/]+)/generate", guarded([this](const auto& req, auto& res) {
                  auto body = parse_body(req);
                  auto current = workflows.get(req.matches[1]);
                  if (!body.contains("edited_prompt")) throw Error(ErrorCode::MissingField, "edited_prompt is required");
                  auto backend = make_backend(backend_config_from_json(body.value("gateway", config.gateway_defaults)));
                  auto next = generate_workflow_from_prompt(body.at("edited_prompt").template get<std::string>(), current,
                                                            *backend);
                  next.id = current.id;
                  auto stored = workflows.update(next, current.revision);
                  res.set_content(serialize(stored), "application/json");
                }));

    server.Get("/fixtures", guarded([this](const auto&, auto& res) { send_json(res, fixtures.ids()); }));
    server.Get("/fixtures/([^/]+)", guarded([this](const auto& req, auto& res) {
                 send_json(res, fixtures.get(req.matches[1]));
               }));
    server.Post("/fixtures", guarded([this](const auto& req, auto& res) {
                  send_json(res, {{"id", fixtures.put(parse_body(req))}}, 201);
                }));

    server.Post("/sessions", guarded([this](const auto& req, auto& res) {
                  send_json(res, create_session(parse_body(req)), 201);
                }));
    server.Get("/sessions/([^/]+)", guarded([this](const auto& req, auto& res) {
                 send_json(res, session_json(*find_session(req.matches[1])->session));
               }));
    control("pause", &Session::pause);
    control("resume", &Session::resume);
    control("cancel", &Session::cancel);
    server.Post("/sessions/([^/]+)/response", guarded([this](const auto& req, auto& res) {
                  auto live = find_session(req.matches[1]);
                  auto st = live->session->submit_user_response(user_response_from_json(parse_body(req)));
                  send_json(res, {{"id", live->session->id()}, {"state", state_json(st)}}, 202);
                }));
    server.Post("/sessions/([^/]+)/user-action", guarded([this](const auto& req, auto& res) {
                  auto live = find_session(req.matches[1]);
                  auto result = live->session->record_user_env_action(env_action_from_json(parse_body(req)));
                  send_json(res, to_json(result), 202);
                }));
    server.Get("/sessions/([^/]+)/trace", guarded([this](const auto& req, auto& res) {
                 res.set_content(export_trace(trace_of(req.matches[1])), "application/x-ndjson");
               }));
    server.Get("/sessions/([^/]+)/trace/(\\d+)", guarded([this](const auto& req, auto& res) {
                 auto trace = trace_of(req.matches[1]);
                 send_json(res, to_json(trace.get(std::stoull(req.matches[2]))));
               }));
    server.Get("/sessions/([^/]+)/events", guarded([this](const auto& req, auto& res) { stream_events(req, res); }));
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

const ServiceConfig& Service::config() const { return impl_->config; }

int Service::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  if (impl_->config.port == 0)
    impl_->bound_port = impl_->server.bind_to_any_port(impl_->config.host);
  else
    impl_->bound_port = impl_->server.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1;
  if (impl_->bound_port < 0)
    throw Error(ErrorCode::IoError, "cannot listen on " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  return impl_->bound_port;
}

void Service::listen() {
  bind();
  impl_->server.listen_after_bind();
}

int Service::start() {
  const int port = bind();
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  std::vector<std::shared_ptr<LiveSession>> live;
  {
    std::lock_guard lock(impl_->sessions_mutex);
    for (auto& [id, s] : impl_->sessions) live.push_back(s);
  }
  for (auto& s : live) {
    if (!s->session->state().terminal()) {
      try {
        s->session->cancel();
      } catch (const Error&) {
      }
    }
  }
  for (auto& s : live)
    if (s->executor.joinable()) s->executor.join();
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace agentbuilder
