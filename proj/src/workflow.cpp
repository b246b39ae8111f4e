#include "agentbuilder/workflow.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "agentbuilder/error.hpp"

namespace agentbuilder {

namespace {

constexpr std::pair<NodeKind, std::string_view> kKindNames[] = {
    {NodeKind::Start, "start"},         {NodeKind::End, "end"},
    {NodeKind::UIActions, "ui_actions"}, {NodeKind::Plan, "plan"},
    {NodeKind::Message, "message"},     {NodeKind::Interact, "interact"},
    {NodeKind::Confirmation, "confirmation"},
};

constexpr std::pair<ConditionType, std::string_view> kConditionNames[] = {
    {ConditionType::Always, "always"},
    {ConditionType::Error, "error"},
    {ConditionType::Risk, "risk"},
    {ConditionType::MissingInfo, "missing_info"},
    {ConditionType::Custom, "custom"},
};

bool config_matches_kind(const Node& node) {
  switch (node.kind) {
    case NodeKind::UIActions:
      return std::holds_alternative<UIActionsDisplayConfig>(node.config);
    case NodeKind::Interact:
      return std::holds_alternative<InteractConfig>(node.config);
    default:
      return std::holds_alternative<std::monostate>(node.config);
  }
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<NodeKind> node_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  return std::nullopt;
}

std::string_view display_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Start: return "Start";
    case NodeKind::End: return "End";
    case NodeKind::UIActions: return "UI Actions";
    case NodeKind::Plan: return "Plan";
    case NodeKind::Message: return "Message";
    case NodeKind::Interact: return "Interact";
    case NodeKind::Confirmation: return "Confirm";
  }
  return "?";
}

std::string EdgeCondition::label() const {
  if (type == ConditionType::Custom) return text;
  for (const auto& [t, name] : kConditionNames)
    if (t == type) return std::string(name);
  return "?";
}

const Node* WorkflowGraph::find_node(std::string_view node_id) const {
  for (const auto& n : nodes)
    if (n.id == node_id) return &n;
  return nullptr;
}

const Node* WorkflowGraph::start() const {
  for (const auto& n : nodes)
    if (n.kind == NodeKind::Start) return &n;
  return nullptr;
}

std::vector<const Edge*> WorkflowGraph::outgoing(std::string_view node_id) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges)
    if (e.from == node_id) out.push_back(&e);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

json ValidationReport::to_json() const {
  auto issues = [](const std::vector<Issue>& list) {
    json arr = json::array();
    for (const auto& i : list)
      arr.push_back({{"code", i.code}, {"subject", i.subject}, {"message", i.message}});
    return arr;
  };
  return {{"errors", issues(errors)}, {"warnings", issues(warnings)}};
}

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  for (const auto& i : errors)
    out << "error " << i.code << ' ' << (i.subject.empty() ? "-" : i.subject) << ": " << i.message << '\n';
  for (const auto& i : warnings)
    out << "warning " << i.code << ' ' << (i.subject.empty() ? "-" : i.subject) << ": " << i.message << '\n';
  return out.str();
}

ValidationReport validate(const WorkflowGraph& graph) {
  ValidationReport report;
  auto error = [&](std::string code, std::string subject, std::string message) {
    report.errors.push_back({std::move(code), std::move(subject), std::move(message)});
  };
  auto warn = [&](std::string code, std::string subject, std::string message) {
    report.warnings.push_back({std::move(code), std::move(subject), std::move(message)});
  };

  std::set<std::string> node_ids;
  const Node* first_start = nullptr;
  bool has_end = false;
  for (const auto& n : graph.nodes) {
    if (n.id.empty()) error("EMPTY_ID", "", "node with empty id");
    if (!node_ids.insert(n.id).second)
      error("DUPLICATE_NODE_ID", n.id, "node id declared more than once");
    if (n.kind == NodeKind::Start) {
      if (first_start)
        error("DUPLICATE_START", n.id, "graph already has Start node '" + first_start->id + "'");
      else
        first_start = &n;
    }
    if (n.kind == NodeKind::End) has_end = true;
    if (!config_matches_kind(n))
      error("CONFIG_MISMATCH", n.id, "config does not match node kind " + std::string(to_string(n.kind)));
  }
  if (!first_start) error("NO_START", "", "graph has no Start node");
  if (!has_end) error("NO_END", "", "graph has no End node");

  std::set<std::string> edge_ids;
  for (const auto& e : graph.edges) {
    if (!edge_ids.insert(e.id).second)
      error("DUPLICATE_EDGE_ID", e.id, "edge id declared more than once");
    const Node* from = graph.find_node(e.from);
    const Node* to = graph.find_node(e.to);
    if (!from || !to) {
      error("DANGLING_EDGE", e.id, "edge references unknown node '" + (from ? e.to : e.from) + "'");
      continue;
    }
    if (to->kind == NodeKind::Start) error("START_HAS_INCOMING", e.id, "edge enters the Start node");
    if (from->kind == NodeKind::End) error("END_HAS_OUTGOING", e.id, "edge leaves an End node");
    if (e.from == e.to && from->kind != NodeKind::UIActions)
      error("SELF_LOOP", e.id, "only UI Actions nodes may loop onto themselves");
    if (e.condition.type == ConditionType::Custom &&
        (e.condition.text.empty() || e.condition.text.find_first_of("\r\n") != std::string::npos))
      error("INVALID_CONDITION", e.id, "custom condition text must be non-empty and single-line");
  }

  if (first_start) {
    std::set<std::string> seen{first_start->id};
    std::queue<std::string> frontier;
    frontier.push(first_start->id);
    while (!frontier.empty()) {
      auto cur = frontier.front();
      frontier.pop();
      for (const auto* e : graph.outgoing(cur))
        if (graph.find_node(e->to) && seen.insert(e->to).second) frontier.push(e->to);
    }
    for (const auto& n : graph.nodes)
      if (!seen.count(n.id)) warn("UNREACHABLE_NODE", n.id, "node is not reachable from Start");
  }

  std::set<std::string> flagged;
  for (const auto& n : graph.nodes) {
    int always = 0;
    for (const auto* e : graph.outgoing(n.id))
      if (e->condition.is_always()) ++always;
    if (always > 1 && flagged.insert(n.id).second)
      warn("AMBIGUOUS_BRANCH", n.id, "node has " + std::to_string(always) + " unconditional outgoing edges");
  }

  auto order = [](const Issue& a, const Issue& b) {
    return std::tie(a.subject, a.code) < std::tie(b.subject, b.code);
  };
  std::stable_sort(report.errors.begin(), report.errors.end(), order);
  std::stable_sort(report.warnings.begin(), report.warnings.end(), order);
  return report;
}

void require_valid(const WorkflowGraph& graph) {
  auto report = validate(graph);
  if (!report.ok()) {
    const auto& first = report.errors.front();
    throw Error(ErrorCode::InvalidGraph,
                first.code + (first.subject.empty() ? "" : " on '" + first.subject + "'") + ": " + first.message);
  }
}

// ---------------------------------------------------------------------------
// Documents

namespace {

json config_to_json(const NodeConfig& config) {
  if (const auto* ui = std::get_if<UIActionsDisplayConfig>(&config)) {
    return {{"show_action_name", ui->show_action_name},
            {"show_description", ui->show_description},
            {"show_reasoning", ui->show_reasoning},
            {"page_preview", ui->page_preview}};
  }
  if (const auto* ia = std::get_if<InteractConfig>(&config))
    return {{"mode", ia->mode == InteractMode::OptionsDropdown ? "options_dropdown" : "free_text"}};
  return nullptr;
}

json condition_to_json(const EdgeCondition& c) {
  json out = {{"type", c.label()}};
  if (c.type == ConditionType::Custom) {
    out["type"] = "custom";
    out["text"] = c.text;
  }
  return out;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MissingField, std::string("missing field '") + key + "'", where);
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a string", where + "/" + key);
  return v.get<std::string>();
}

bool require_bool(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_boolean()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a boolean", where + "/" + key);
  return v.get<bool>();
}

NodeConfig config_from_json(NodeKind kind, const json& node, const std::string& where) {
  auto it = node.find("config");
  const bool absent = it == node.end() || it->is_null();
  const std::string at = where + "/config";
  switch (kind) {
    case NodeKind::UIActions: {
      if (absent) throw Error(ErrorCode::MissingField, "ui_actions node requires a config", where);
      if (!it->is_object()) throw Error(ErrorCode::ParseError, "config must be an object", at);
      return UIActionsDisplayConfig{require_bool(*it, "show_action_name", at),
                                    require_bool(*it, "show_description", at),
                                    require_bool(*it, "show_reasoning", at),
                                    require_bool(*it, "page_preview", at)};
    }
    case NodeKind::Interact: {
      if (absent) throw Error(ErrorCode::MissingField, "interact node requires a config", where);
      if (!it->is_object()) throw Error(ErrorCode::ParseError, "config must be an object", at);
      auto mode = require_string(*it, "mode", at);
      if (mode == "options_dropdown") return InteractConfig{InteractMode::OptionsDropdown};
      if (mode == "free_text") return InteractConfig{InteractMode::FreeText};
      throw Error(ErrorCode::ParseError, "unknown interact mode '" + mode + "'", at + "/mode");
    }
    default:
      if (!absent && !(it->is_object() && it->empty()))
        throw Error(ErrorCode::ParseError, std::string(to_string(kind)) + " nodes carry no config", at);
      return std::monostate{};
  }
}

EdgeCondition condition_from_json(const json& edge, const std::string& where) {
  auto it = edge.find("condition");
  if (it == edge.end() || it->is_null()) return EdgeCondition::always();
  const std::string at = where + "/condition";
  if (!it->is_object()) throw Error(ErrorCode::ParseError, "condition must be an object", at);
  auto type = require_string(*it, "type", at);
  for (const auto& [t, name] : kConditionNames) {
    if (name != type) continue;
    EdgeCondition c{t, {}};
    if (t == ConditionType::Custom) c.text = require_string(*it, "text", at);
    return c;
  }
  throw Error(ErrorCode::ParseError, "unknown condition type '" + type + "'", at + "/type");
}

}  // namespace

json to_json(const WorkflowGraph& graph) {
  json nodes = json::array();
  for (const auto& n : graph.nodes) {
    json node = {{"id", n.id},
                 {"kind", to_string(n.kind)},
                 {"label", n.label ? json(*n.label) : json(nullptr)},
                 {"config", config_to_json(n.config)}};
    if (!n.meta.is_null()) node["meta"] = n.meta;
    nodes.push_back(std::move(node));
  }
  json edges = json::array();
  for (const auto& e : graph.edges)
    edges.push_back({{"id", e.id}, {"from", e.from}, {"to", e.to}, {"condition", condition_to_json(e.condition)}});
  return {{"id", graph.id},
          {"name", graph.name},
          {"revision", graph.revision},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

WorkflowGraph graph_from_json(const json& doc) {
  if (doc.is_null() || (doc.is_object() && !doc.contains("nodes")))
    throw Error(ErrorCode::MissingNodes, "document has no nodes", "/nodes");
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "workflow document must be an object", "");

  WorkflowGraph g;
  g.id = require_string(doc, "id", "");
  if (auto it = doc.find("name"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::ParseError, "name must be a string", "/name");
    g.name = it->get<std::string>();
  }
  if (auto it = doc.find("revision"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error(ErrorCode::ParseError, "revision must be an integer", "/revision");
    g.revision = it->get<std::int64_t>();
  }

  const auto& nodes = doc.at("nodes");
  if (!nodes.is_array()) throw Error(ErrorCode::ParseError, "nodes must be an array", "/nodes");
  if (nodes.empty()) throw Error(ErrorCode::MissingNodes, "nodes array is empty", "/nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = "/nodes/" + std::to_string(i);
    const auto& jn = nodes[i];
    if (!jn.is_object()) throw Error(ErrorCode::ParseError, "node must be an object", where);
    Node n;
    n.id = require_string(jn, "id", where);
    auto kind_text = require_string(jn, "kind", where);
    auto kind = node_kind_from_string(kind_text);
    if (!kind) throw Error(ErrorCode::UnknownNodeKind, "unknown node kind '" + kind_text + "'", where + "/kind");
    n.kind = *kind;
    n.config = config_from_json(n.kind, jn, where);
    if (auto it = jn.find("label"); it != jn.end() && !it->is_null()) {
      if (!it->is_string()) throw Error(ErrorCode::ParseError, "label must be a string", where + "/label");
      n.label = it->get<std::string>();
    }
    if (auto it = jn.find("meta"); it != jn.end()) n.meta = *it;
    g.nodes.push_back(std::move(n));
  }

  const auto& edges = require(doc, "edges", "");
  if (!edges.is_array()) throw Error(ErrorCode::ParseError, "edges must be an array", "/edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string where = "/edges/" + std::to_string(i);
    const auto& je = edges[i];
    if (!je.is_object()) throw Error(ErrorCode::ParseError, "edge must be an object", where);
    Edge e;
    e.id = require_string(je, "id", where);
    e.from = require_string(je, "from", where);
    e.to = require_string(je, "to", where);
    if (!g.find_node(e.from))
      throw Error(ErrorCode::DanglingEdge, "edge '" + e.id + "' starts at unknown node '" + e.from + "'", where + "/from");
    if (!g.find_node(e.to))
      throw Error(ErrorCode::DanglingEdge, "edge '" + e.id + "' ends at unknown node '" + e.to + "'", where + "/to");
    e.condition = condition_from_json(je, where);
    g.edges.push_back(std::move(e));
  }
  return g;
}

std::string serialize(const WorkflowGraph& graph) { return to_json(graph).dump(2) + "\n"; }

WorkflowGraph deserialize(std::string_view document) {
  if (document.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(ErrorCode::MissingNodes, "empty document", "/nodes");
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what(), "byte " + std::to_string(e.byte));
  }
  return graph_from_json(doc);
}

// ---------------------------------------------------------------------------
// Diff

bool DiffReport::empty() const { return size() == 0; }

std::size_t DiffReport::size() const {
  return added_nodes.size() + removed_nodes.size() + changed_nodes.size() + added_edges.size() +
         removed_edges.size() + changed_edges.size();
}

json DiffReport::to_json() const {
  auto node_j = [](const Node& n) {
    return json{{"id", n.id}, {"kind", to_string(n.kind)}, {"label", n.label ? json(*n.label) : json(nullptr)}};
  };
  auto edge_j = [](const Edge& e) {
    return json{{"id", e.id}, {"from", e.from}, {"to", e.to}, {"condition", e.condition.label()}};
  };
  json out = {{"added_nodes", json::array()},   {"removed_nodes", json::array()},
              {"changed_nodes", json::array()}, {"added_edges", json::array()},
              {"removed_edges", json::array()}, {"changed_edges", json::array()}};
  for (const auto& n : added_nodes) out["added_nodes"].push_back(node_j(n));
  for (const auto& n : removed_nodes) out["removed_nodes"].push_back(node_j(n));
  for (const auto& [a, b] : changed_nodes) out["changed_nodes"].push_back({{"before", node_j(a)}, {"after", node_j(b)}});
  for (const auto& e : added_edges) out["added_edges"].push_back(edge_j(e));
  for (const auto& e : removed_edges) out["removed_edges"].push_back(edge_j(e));
  for (const auto& [a, b] : changed_edges) out["changed_edges"].push_back({{"before", edge_j(a)}, {"after", edge_j(b)}});
  return out;
}

namespace {

// Depth-first preorder from Start following edge declaration order;
// unreachable nodes follow in declaration order.
std::vector<const Node*> discovery_order(const WorkflowGraph& g) {
  std::vector<const Node*> order;
  std::set<std::string> seen;
  auto visit = [&](auto&& self, const Node* n) -> void {
    if (!n || !seen.insert(n->id).second) return;
    order.push_back(n);
    for (const auto* e : g.outgoing(n->id)) self(self, g.find_node(e->to));
  };
  visit(visit, g.start());
  // Unreachable regions follow edge declaration order so node order does not matter.
  for (const auto& e : g.edges) visit(visit, g.find_node(e.from));
  for (const auto& n : g.nodes)
    if (!seen.count(n.id)) {
      seen.insert(n.id);
      order.push_back(&n);
    }
  return order;
}

std::string signature(const Node& n) {
  return std::string(to_string(n.kind)) + '\x1f' + config_to_json(n.config).dump() + '\x1f' +
         (n.label ? "1" + *n.label : "0");
}

}  // namespace

DiffReport structural_diff(const WorkflowGraph& before, const WorkflowGraph& after) {
  DiffReport diff;
  const auto order_a = discovery_order(before);
  const auto order_b = discovery_order(after);
  std::map<std::string, std::string> a_to_b;
  std::set<const Node*> used_a, used_b;

  auto pair_by = [&](auto key_of, bool changed) {
    std::map<std::string, std::vector<const Node*>> groups_a, groups_b;
    for (const auto* n : order_a)
      if (!used_a.count(n)) groups_a[key_of(*n)].push_back(n);
    for (const auto* n : order_b)
      if (!used_b.count(n)) groups_b[key_of(*n)].push_back(n);
    std::vector<std::pair<const Node*, const Node*>> pairs;
    for (auto& [key, list_a] : groups_a) {
      auto it = groups_b.find(key);
      if (it == groups_b.end()) continue;
      for (std::size_t i = 0; i < std::min(list_a.size(), it->second.size()); ++i)
        pairs.emplace_back(list_a[i], it->second[i]);
    }
    // report in discovery order of the "before" graph
    std::map<const Node*, std::size_t> rank;
    for (std::size_t i = 0; i < order_a.size(); ++i) rank[order_a[i]] = i;
    std::sort(pairs.begin(), pairs.end(), [&](auto& x, auto& y) { return rank[x.first] < rank[y.first]; });
    for (auto [a, b] : pairs) {
      used_a.insert(a);
      used_b.insert(b);
      a_to_b[a->id] = b->id;
      if (changed) diff.changed_nodes.emplace_back(*a, *b);
    }
  };
  pair_by(signature, false);
  pair_by([](const Node& n) { return std::string(to_string(n.kind)); }, true);

  for (const auto* n : order_a)
    if (!used_a.count(n)) diff.removed_nodes.push_back(*n);
  for (const auto* n : order_b)
    if (!used_b.count(n)) diff.added_nodes.push_back(*n);

  auto mapped = [&](const std::string& id) -> std::optional<std::string> {
    auto it = a_to_b.find(id);
    if (it == a_to_b.end()) return std::nullopt;
    return it->second;
  };

  std::vector<bool> b_used(after.edges.size(), false);
  std::vector<const Edge*> rest_a;
  for (const auto& ea : before.edges) {
    auto from = mapped(ea.from), to = mapped(ea.to);
    bool matched = false;
    if (from && to) {
      for (std::size_t j = 0; j < after.edges.size(); ++j) {
        const auto& eb = after.edges[j];
        if (!b_used[j] && eb.from == *from && eb.to == *to && eb.condition == ea.condition) {
          b_used[j] = matched = true;
          break;
        }
      }
    }
    if (!matched) rest_a.push_back(&ea);
  }
  for (const auto* ea : rest_a) {
    auto from = mapped(ea->from);
    bool paired = false;
    if (from) {
      for (std::size_t j = 0; j < after.edges.size(); ++j) {
        if (!b_used[j] && after.edges[j].from == *from) {
          b_used[j] = paired = true;
          diff.changed_edges.emplace_back(*ea, after.edges[j]);
          break;
        }
      }
    }
    if (!paired) diff.removed_edges.push_back(*ea);
  }
  for (std::size_t j = 0; j < after.edges.size(); ++j)
    if (!b_used[j]) diff.added_edges.push_back(after.edges[j]);
  return diff;
}

}  // namespace agentbuilder
