#include "agentbuilder/compiler.hpp"

#include <set>
#include <sstream>

namespace agentbuilder {

// ---------------------------------------------------------------------------
// Paths

PathSet enumerate_paths(const WorkflowGraph& graph) {
  require_valid(graph);
  PathSet out;
  std::vector<std::vector<std::size_t>> adjacency;
  std::vector<std::string> ids;
  for (const auto& n : graph.nodes) ids.push_back(n.id);
  auto index_of = [&](const std::string& id) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return i;
    return ids.size();
  };
  adjacency.resize(ids.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) adjacency[index_of(graph.edges[e].from)].push_back(e);

  std::vector<bool> used(graph.edges.size(), false);
  Path current;
  current.nodes.push_back(graph.start()->id);

  auto walk = [&](auto&& self, std::size_t node) -> void {
    bool extended = false;
    bool blocked = false;
    for (std::size_t e : adjacency[node]) {
      if (used[e]) {
        blocked = true;
        continue;
      }
      extended = true;
      used[e] = true;
      current.edges.push_back(e);
      current.nodes.push_back(graph.edges[e].to);
      self(self, index_of(graph.edges[e].to));
      current.nodes.pop_back();
      current.edges.pop_back();
      used[e] = false;
    }
    if (!extended) {
      if (blocked) out.truncated = true;
      out.paths.push_back(current);
    }
  };
  walk(walk, index_of(graph.start()->id));
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string node_phrase(const Node& node) {
  switch (node.kind) {
    case NodeKind::Start: return "receive the user's task";
    case NodeKind::End: return "finish the task and report the outcome to the user";
    case NodeKind::UIActions:
      return "perform UI actions on the web page (click, scroll, type text, or visit a page)";
    case NodeKind::Plan: return "show the user a plan listing the high-level steps you will take";
    case NodeKind::Message: return "send a message to the user";
    case NodeKind::Interact:
      return std::get<InteractConfig>(node.config).mode == InteractMode::OptionsDropdown
                 ? "ask the user a question and offer a drop-down list of options"
                 : "ask the user an open-ended question they answer in free text";
    case NodeKind::Confirmation: return "ask the user to confirm before you proceed; they may accept or reject";
  }
  return "continue";
}

std::string condition_phrase(const EdgeCondition& c) {
  switch (c.type) {
    case ConditionType::Always: return {};
    case ConditionType::Error: return "you encounter an error";
    case ConditionType::Risk: return "the next action is risky";
    case ConditionType::MissingInfo: return "you are missing information needed to proceed";
    case ConditionType::Custom: return c.text;
  }
  return {};
}

void render_path(std::ostream& out, const Path& path, const WorkflowGraph& graph) {
  out << "1. Receive the user's task.\n";
  for (std::size_t i = 0; i < path.edges.size(); ++i) {
    const auto& edge = graph.edges[path.edges[i]];
    const Node* node = graph.find_node(edge.to);
    out << (i + 2) << ". Next, ";
    if (!edge.condition.is_always()) out << "when " << condition_phrase(edge.condition) << ": ";
    out << node_phrase(*node);
    if (node->label && !node->label->empty()) out << " (" << *node->label << ")";
    out << ".\n";
  }
  const Node* last = graph.find_node(path.nodes.back());
  if (last && last->kind != NodeKind::End && !path.edges.empty())
    out << "   This path returns to an earlier step; repeat from there as needed.\n";
}

}  // namespace

std::string render_workflow_text(const PathSet& paths, const WorkflowGraph& graph) {
  std::ostringstream out;
  const bool numbered = paths.paths.size() > 1;
  for (std::size_t p = 0; p < paths.paths.size(); ++p) {
    if (numbered) {
      if (p > 0) out << '\n';
      out << "Path " << (p + 1) << ":\n";
    }
    render_path(out, paths.paths[p], graph);
  }
  return out.str();
}

std::vector<std::string> step_headings(std::string_view path_text) {
  std::vector<std::string> headings;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos < path_text.size()) {
    auto end = path_text.find('\n', pos);
    if (end == std::string_view::npos) end = path_text.size();
    std::string_view line = path_text.substr(pos, end - pos);
    std::size_t digits = 0;
    while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
    if (digits > 0 && line.size() > digits + 1 && line[digits] == '.' && line[digits + 1] == ' ' &&
        seen.insert(std::string(line)).second)
      headings.emplace_back(line);
    pos = end + 1;
  }
  return headings;
}

Expansion expand_workflow_prompt(std::string_view path_text, ModelBackend& gateway) {
  Expansion result;
  std::string expanded = gateway.expand(path_text);
  for (const auto& heading : step_headings(path_text)) {
    if (expanded.find(heading) == std::string::npos) {
      result.text = std::string(path_text);
      result.warnings.push_back("STRUCTURE_LOST: expansion dropped step \"" + heading + "\"");
      return result;
    }
  }
  result.text = std::move(expanded);
  return result;
}

// ---------------------------------------------------------------------------
// Assembly

json to_json(const PromptBundle& b) {
  return {{"workflow_prompt", b.workflow_prompt},
          {"capabilities_prompt", b.capabilities_prompt},
          {"user_info_prompt", b.user_info_prompt},
          {"other_instructions", b.other_instructions}};
}

PromptBundle prompt_bundle_from_json(const json& j) {
  PromptBundle b;
  b.workflow_prompt = j.value("workflow_prompt", std::string{});
  b.capabilities_prompt = j.value("capabilities_prompt", std::string{});
  b.user_info_prompt = j.value("user_info_prompt", std::string{});
  b.other_instructions = j.value("other_instructions", std::string{});
  return b;
}

std::string_view section_title(PromptSection section) {
  switch (section) {
    case PromptSection::Workflow: return "Workflow";
    case PromptSection::Capabilities: return "Agent Capabilities";
    case PromptSection::UserInfo: return "User Information";
    case PromptSection::OtherInstructions: return "Other Instructions";
  }
  return "";
}

std::string_view SystemPrompt::section_text(PromptSection section) const {
  for (const auto& s : section_spans)
    if (s.section == section) return std::string_view(text).substr(s.begin, s.end - s.begin);
  return {};
}

const std::string_view kRolePreamble =
    "You are a web agent that completes tasks for a user on a website. At every turn you receive the "
    "current page (url, visible accessibility tree, cart) and must answer with exactly one tool call.\n";

SystemPrompt assemble_system_prompt(const PromptBundle& bundle, const WorkflowGraph& graph) {
  SystemPrompt prompt;
  prompt.text = kRolePreamble;
  const std::pair<PromptSection, const std::string*> sections[] = {
      {PromptSection::Workflow, &bundle.workflow_prompt},
      {PromptSection::Capabilities, &bundle.capabilities_prompt},
      {PromptSection::UserInfo, &bundle.user_info_prompt},
      {PromptSection::OtherInstructions, &bundle.other_instructions},
  };
  for (const auto& [section, body] : sections) {
    if (body->empty()) continue;
    prompt.text += "\n## ";
    prompt.text += section_title(section);
    prompt.text += "\n";
    SectionSpan span{section, prompt.text.size(), 0};
    prompt.text += *body;
    span.end = prompt.text.size();
    prompt.section_spans.push_back(span);
    if (body->back() != '\n') prompt.text += '\n';
  }

  prompt.text += "\n## Tool Usage\nAvailable tools: ";
  std::vector<ToolSchema> tools = validate(graph).ok() ? tool_schemas_for(graph) : environment_tools();
  for (std::size_t i = 0; i < tools.size(); ++i) prompt.text += (i ? ", " : "") + tools[i].name;
  prompt.text +=
      ".\nReply with a single JSON object {\"tool\": <name>, \"args\": {...}, \"reasoning\": <why>}. "
      "UI actions accept an optional \"description\" argument shown to the user. Call finish when the task is "
      "done.\n";
  return prompt;
}

// ---------------------------------------------------------------------------
// Regeneration

WorkflowGraph generate_workflow_from_prompt(std::string_view edited_prompt, const WorkflowGraph& current,
                                            ModelBackend& gateway) {
  require_valid(current);
  const std::string reply = gateway.regenerate(edited_prompt, serialize(current));
  WorkflowGraph next;
  try {
    next = deserialize(reply);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedRegeneration, std::string("regenerated document rejected: ") + e.what());
  }
  auto report = validate(next);
  if (!report.ok())
    throw Error(ErrorCode::MalformedRegeneration,
                "regenerated workflow does not validate: " + report.errors.front().code + " " +
                    report.errors.front().subject);
  next.revision = current.revision + 1;
  return next;
}

Compilation compile_workflow(const WorkflowGraph& graph, const PromptBundle& bundle, ModelBackend& gateway) {
  Compilation c;
  c.path_text = render_workflow_text(enumerate_paths(graph), graph);
  PromptBundle effective = bundle;
  if (effective.workflow_prompt.empty()) {
    auto expansion = expand_workflow_prompt(c.path_text, gateway);
    effective.workflow_prompt = std::move(expansion.text);
    c.warnings = std::move(expansion.warnings);
  }
  c.workflow_prompt = effective.workflow_prompt;
  c.system_prompt = assemble_system_prompt(effective, graph);
  return c;
}

}  // namespace agentbuilder
