#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agentbuilder/gateway.hpp"
#include "agentbuilder/workflow.hpp"

namespace agentbuilder {

/// An edge-simple walk from Start. `edges` indexes into WorkflowGraph::edges.
struct Path {
  std::vector<std::size_t> edges;
  std::vector<std::string> nodes;  // Start first; nodes.size() == edges.size() + 1

  friend bool operator==(const Path&, const Path&) = default;
};

struct PathSet {
  std::vector<Path> paths;
  /// True when some walk stopped because every remaining edge was already used.
  bool truncated = false;
};

/// Depth-first enumeration of maximal edge-simple paths from Start. Children are
/// visited in edge declaration order. Throws INVALID_GRAPH on validation errors.
PathSet enumerate_paths(const WorkflowGraph& graph);

/// Fixed-phrasing step lists, one per path, byte-deterministic.
std::string render_workflow_text(const PathSet& paths, const WorkflowGraph& graph);

/// Numbered step lines of a rendered workflow text. The expansion guard requires
/// each of them to survive verbatim.
std::vector<std::string> step_headings(std::string_view path_text);

struct Expansion {
  std::string text;
  /// "STRUCTURE_LOST" when the backend dropped a step and the raw text was kept.
  std::vector<std::string> warnings;
};

Expansion expand_workflow_prompt(std::string_view path_text, ModelBackend& gateway);

struct PromptBundle {
  std::string workflow_prompt;
  std::string capabilities_prompt;
  std::string user_info_prompt;
  std::string other_instructions;
};

json to_json(const PromptBundle& bundle);
PromptBundle prompt_bundle_from_json(const json& j);

enum class PromptSection { Workflow, Capabilities, UserInfo, OtherInstructions };

std::string_view section_title(PromptSection section);

struct SectionSpan {
  PromptSection section;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive byte offset
};

struct SystemPrompt {
  std::string text;
  std::vector<SectionSpan> section_spans;

  std::string_view section_text(PromptSection section) const;
};

extern const std::string_view kRolePreamble;

/// Role preamble, then Workflow, Agent Capabilities, User Information and Other
/// Instructions (empty ones omitted), then a footer naming the offered tools.
SystemPrompt assemble_system_prompt(const PromptBundle& bundle, const WorkflowGraph& graph);

/// Asks the backend to rewrite the workflow document from an edited prompt.
/// Throws MALFORMED_REGENERATION when the reply does not parse or validate;
/// the input graph is never touched. The result carries revision + 1.
WorkflowGraph generate_workflow_from_prompt(std::string_view edited_prompt, const WorkflowGraph& current,
                                            ModelBackend& gateway);

/// enumerate_paths + render_workflow_text + expansion + assembly.
struct Compilation {
  std::string path_text;
  std::string workflow_prompt;
  SystemPrompt system_prompt;
  std::vector<std::string> warnings;
};

/// When bundle.workflow_prompt is empty it is generated from the graph through the gateway.
Compilation compile_workflow(const WorkflowGraph& graph, const PromptBundle& bundle, ModelBackend& gateway);

}  // namespace agentbuilder
