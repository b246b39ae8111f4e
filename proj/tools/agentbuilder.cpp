// Headless entry point: validate, compile, run, replay, conformance, serve.
//
// Exit status: 0 success, 1 validation or conformance findings, 2 usage error,
// 3 engine failure.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "agentbuilder/compiler.hpp"
#include "agentbuilder/runtime.hpp"
#include "agentbuilder/service.hpp"
#include "agentbuilder/trace.hpp"
#include "agentbuilder/workflow.hpp"

using namespace agentbuilder;

namespace {

constexpr int kOk = 0;
constexpr int kFindings = 1;
constexpr int kUsage = 2;
constexpr int kEngine = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

json read_json(const std::string& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "'" + path + "' is not valid JSON");
  return j;
}

std::string dir_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  return slash == std::string::npos ? "." : path.substr(0, slash);
}

int cmd_validate(const std::string& file) {
  WorkflowGraph g;
  try {
    g = deserialize(read_file(file));
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kFindings;
  }
  const auto report = validate(g);
  std::cout << report.to_text();
  return report.ok() ? kOk : kFindings;
}

int cmd_compile(const std::string& file, const std::string& bundle_file, const std::string& gateway_file,
                const std::string& out) {
  WorkflowGraph g;
  try {
    g = deserialize(read_file(file));
    require_valid(g);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kFindings;
  }
  PromptBundle bundle;
  if (!bundle_file.empty()) bundle = prompt_bundle_from_json(read_json(bundle_file));
  BackendConfig gateway;
  if (!gateway_file.empty()) gateway = backend_config_from_json(read_json(gateway_file), dir_of(gateway_file));
  auto backend = make_backend(gateway);
  const auto c = compile_workflow(g, bundle, *backend);
  for (const auto& w : c.warnings) std::cerr << "warning " << w << '\n';
  if (out.empty())
    std::cout << c.system_prompt.text;
  else
    write_file(out, c.system_prompt.text);
  return kOk;
}

std::string action_text(const StepRecord& r) {
  if (const auto* f = std::get_if<ParseFailure>(&r.parsed_action))
    return std::string("malformed output: ") + std::string(code_name(f->code)) + ": " + f->message;
  const auto call = to_tool_call(std::get<AgentAction>(r.parsed_action));
  return call.name + " " + call.args.dump();
}

void print_step(std::ostream& out, const StepRecord& r, bool debug, bool detailed) {
  out << "step " << r.step_index << "  " << r.observation.url << "  v" << r.observation.version << '\n';
  out << "  action: " << action_text(r) << '\n';
  if (r.env_result) {
    out << "  result: ";
    if (r.env_result->ok)
      out << "ok";
    else
      out << code_name(*r.env_result->error) << ": " << r.env_result->message;
    if (!r.env_result->effects.empty()) {
      out << " [";
      for (std::size_t i = 0; i < r.env_result->effects.size(); ++i) out << (i ? ", " : "") << r.env_result->effects[i];
      out << ']';
    }
    out << '\n';
  }
  for (const auto& e : r.events_emitted) {
    if (e.channel == Channel::Debug && !debug) continue;
    out << "  " << (e.channel == Channel::Debug ? "[debug] " : "") << to_string(e.kind) << ' ' << e.payload.dump()
        << '\n';
  }
  if (detailed) {
    out << "  context_digest: " << r.context_digest << '\n';
    out << "  observation:\n" << r.observation.snapshot;
    out << "  accessibility tree:\n" << r.observation.accessibility_tree;
    out << "  input context (" << r.input_context.size() << " messages):\n";
    for (const auto& m : r.input_context) {
      out << "  --- " << to_string(m.role) << (m.tag.empty() ? "" : " [" + m.tag + "]") << '\n' << m.content << '\n';
    }
    out << "  raw output: " << r.output.raw << '\n';
  }
}

int cmd_run(const std::string& scenario_file, const std::string& trace_out) {
  const auto scenario = load_scenario(scenario_file);
  auto run = run_scenario(scenario);
  const auto& s = *run.session;
  const auto state = s.state();
  std::cout << "session " << s.id() << ": " << state.to_string() << " after " << s.step_count() << " steps\n";
  const auto site = s.site();
  std::cout << "cart: " << observe(site, s.viewport()).cart_summary << "; orders: " << site.orders.size() << '\n';
  if (!trace_out.empty()) write_file(trace_out, export_trace(s.trace()));
  if (run.outcome.responses_exhausted) {
    std::cerr << "the agent asked for more user responses than the scenario scripts\n";
    return kEngine;
  }
  if (run.outcome.stalled) {
    std::cerr << "the scenario left the session paused\n";
    return kEngine;
  }
  if (state.state == SessionState::Failed) {
    std::cerr << "session failed: " << state.failure_reason << '\n';
    return kEngine;
  }
  return kOk;
}

int cmd_replay(const std::string& trace_file, std::optional<std::size_t> step, bool debug) {
  const auto trace = import_trace(read_file(trace_file));
  if (step) {
    print_step(std::cout, trace.get(*step), debug, true);
    return kOk;
  }
  std::cout << "trace " << trace.session_id() << "  workflow " << trace.workflow_id() << "  fixture "
            << trace.fixture_id() << "  " << trace.size() << " steps  " << trace.final_state() << '\n';
  const auto records = trace.records();
  const auto interventions = trace.interventions();
  std::size_t next = 0;
  for (std::size_t i = 0; i <= records.size(); ++i) {
    while (next < interventions.size() && interventions[next].after_step == i) {
      const auto& iv = interventions[next++];
      std::cout << "user " << iv.kind << ' ' << iv.payload.dump() << '\n';
    }
    if (i < records.size()) print_step(std::cout, records[i], debug, false);
  }
  return kOk;
}

int cmd_conformance(const std::string& trace_file, const std::string& workflow_file) {
  const auto trace = import_trace(read_file(trace_file));
  const auto graph = deserialize(read_file(workflow_file));
  const auto report = conformance_check(trace, graph);
  std::cout << report.to_text();
  return report.conformant() ? kOk : kFindings;
}

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

int cmd_serve(const std::string& config_file) {
  auto config = load_service_config(config_file);
#ifdef AGENTBUILDER_BUNDLED_FIXTURES
  if (config.fixtures_dir.empty()) config.fixtures_dir = AGENTBUILDER_BUNDLED_FIXTURES;
#endif
  Service service(config);
  const int port = service.bind();
  std::cerr << "listening on " << config.host << ':' << port << ", store " << config.store_dir << '\n';
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::atomic<bool> finished{false};
  std::thread watcher([&] {
    while (!g_interrupted && !finished) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
  });
  service.listen();
  finished = true;
  watcher.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Workflow-driven interface agent prototyping engine"};
  app.require_subcommand(1);

  std::string file, file2, bundle, gateway, out, trace_out, config;
  std::optional<std::size_t> step;
  bool debug = false;

  auto* validate_cmd = app.add_subcommand("validate", "Validate a workflow document");
  validate_cmd->add_option("workflow", file, "Workflow file")->required();

  auto* compile_cmd = app.add_subcommand("compile", "Compile a workflow into its system prompt");
  compile_cmd->add_option("workflow", file, "Workflow file")->required();
  compile_cmd->add_option("--bundle", bundle, "Prompt bundle JSON");
  compile_cmd->add_option("--gateway", gateway, "Gateway config JSON used to expand the workflow prompt");
  compile_cmd->add_option("--out", out, "Write the prompt here instead of stdout");

  auto* run_cmd = app.add_subcommand("run", "Run a scripted scenario");
  run_cmd->add_option("scenario", file, "Scenario file")->required();
  run_cmd->add_option("--trace-out", trace_out, "Write the trace (JSON Lines)");

  auto* replay_cmd = app.add_subcommand("replay", "Print the step records of a trace");
  replay_cmd->add_option("trace", file, "Trace file")->required();
  replay_cmd->add_option("--step", step, "Print one step in full");
  replay_cmd->add_flag("--debug", debug, "Include tool_call and reasoning events");

  auto* conformance_cmd = app.add_subcommand("conformance", "Compare a trace with its workflow");
  conformance_cmd->add_option("trace", file, "Trace file")->required();
  conformance_cmd->add_option("workflow", file2, "Workflow file")->required();

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
  serve_cmd->add_option("--config", config, "Service config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(file);
    if (*compile_cmd) return cmd_compile(file, bundle, gateway, out);
    if (*run_cmd) return cmd_run(file, trace_out);
    if (*replay_cmd) return cmd_replay(file, step, debug);
    if (*conformance_cmd) return cmd_conformance(file, file2);
    if (*serve_cmd) return cmd_serve(config);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::IoError:
      case ErrorCode::InvalidScenario:
        return kUsage;
      case ErrorCode::ParseError:
      case ErrorCode::MissingNodes:
      case ErrorCode::MissingField:
      case ErrorCode::UnknownNodeKind:
      case ErrorCode::DanglingEdge:
      case ErrorCode::InvalidGraph:
      case ErrorCode::TamperedRecord:
      case ErrorCode::InvalidFixture:
      case ErrorCode::NoPages:
      case ErrorCode::DuplicateElement:
        return kFindings;
      default: return kEngine;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEngine;
  }
  return kUsage;
}
