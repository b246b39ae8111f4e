#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace agentbuilder {

using json = nlohmann::json;

enum class NodeKind { Start, End, UIActions, Plan, Message, Interact, Confirmation };

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view text);
/// Human-facing name ("UI Actions", "Confirm", ...).
std::string_view display_name(NodeKind kind);

/// What the chat and the page show when the agent performs a UI action.
/// All four switches are independent; all-false is a silent agent.
struct UIActionsDisplayConfig {
  bool show_action_name = false;
  bool show_description = false;
  bool show_reasoning = false;
  bool page_preview = false;

  friend bool operator==(const UIActionsDisplayConfig&, const UIActionsDisplayConfig&) = default;
};

enum class InteractMode { OptionsDropdown, FreeText };

struct InteractConfig {
  InteractMode mode = InteractMode::OptionsDropdown;

  friend bool operator==(const InteractConfig&, const InteractConfig&) = default;
};

using NodeConfig = std::variant<std::monostate, UIActionsDisplayConfig, InteractConfig>;

struct Node {
  std::string id;
  NodeKind kind = NodeKind::Start;
  NodeConfig config;
  std::optional<std::string> label;
  /// Opaque editor metadata (canvas position etc.). Stored, never interpreted.
  json meta;

  friend bool operator==(const Node&, const Node&) = default;
};

enum class ConditionType { Always, Error, Risk, MissingInfo, Custom };

struct EdgeCondition {
  ConditionType type = ConditionType::Always;
  std::string text;  // only meaningful for Custom

  static EdgeCondition always() { return {}; }
  static EdgeCondition custom(std::string text) { return {ConditionType::Custom, std::move(text)}; }

  bool is_always() const { return type == ConditionType::Always; }
  /// Short label used in diffs and prompts: "always", "error", ..., or the custom text.
  std::string label() const;

  friend bool operator==(const EdgeCondition&, const EdgeCondition&) = default;
};

struct Edge {
  std::string id;
  std::string from;
  std::string to;
  EdgeCondition condition;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct WorkflowGraph {
  std::string id;
  std::string name;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::int64_t revision = 0;

  const Node* find_node(std::string_view node_id) const;
  /// The unique Start node, or the first one when the graph is invalid.
  const Node* start() const;
  std::vector<const Edge*> outgoing(std::string_view node_id) const;

  friend bool operator==(const WorkflowGraph&, const WorkflowGraph&) = default;
};

// ---------------------------------------------------------------------------
// Validation

struct Issue {
  std::string code;
  std::string subject;  // node or edge id; empty for graph-level issues
  std::string message;

  friend bool operator==(const Issue&, const Issue&) = default;
};

struct ValidationReport {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;

  bool ok() const { return errors.empty(); }
  json to_json() const;
  /// One issue per line, errors first. Empty string when there is nothing to report.
  std::string to_text() const;

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

ValidationReport validate(const WorkflowGraph& graph);

/// Throws Error(InvalidGraph) listing the first error when validate() is not clean.
void require_valid(const WorkflowGraph& graph);

// ---------------------------------------------------------------------------
// Canonical document form

json to_json(const WorkflowGraph& graph);
WorkflowGraph graph_from_json(const json& doc);

/// Canonical text: sorted keys, two-space indent, declaration order for
/// nodes and edges, trailing newline. Equal graphs give identical bytes.
std::string serialize(const WorkflowGraph& graph);
WorkflowGraph deserialize(std::string_view document);

// ---------------------------------------------------------------------------
// Structural diff

struct DiffReport {
  std::vector<Node> added_nodes;
  std::vector<Node> removed_nodes;
  std::vector<std::pair<Node, Node>> changed_nodes;  // (before, after)
  std::vector<Edge> added_edges;
  std::vector<Edge> removed_edges;
  std::vector<std::pair<Edge, Edge>> changed_edges;

  bool empty() const;
  std::size_t size() const;
  json to_json() const;
};

/// Compares two graphs up to renaming of node and edge ids. Nodes are paired
/// by (kind, config, label) first, then by kind alone (reported as changed);
/// ties are broken by depth-first discovery order from Start.
DiffReport structural_diff(const WorkflowGraph& before, const WorkflowGraph& after);

}  // namespace agentbuilder
