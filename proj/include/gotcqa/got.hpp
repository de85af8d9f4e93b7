#pragma once

// Graph-of-Thought intermediate representation: typed operator nodes joined by
// directed "chain of thought" edges, plus validation, terminal normalization,
// step planning and the structured-text / DOT encodings.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gotcqa/error.hpp"

namespace gotcqa {

enum class OperatorType { Loc, Num, Log, Find, Generic };

constexpr std::string_view to_string(OperatorType t) {
  switch (t) {
    case OperatorType::Loc: return "Loc";
    case OperatorType::Num: return "Num";
    case OperatorType::Log: return "Log";
    case OperatorType::Find: return "Find";
    case OperatorType::Generic: return "Generic";
  }
  return "?";
}

inline std::optional<OperatorType> parse_operator_type(std::string_view s) {
  for (auto t : {OperatorType::Loc, OperatorType::Num, OperatorType::Log, OperatorType::Find,
                 OperatorType::Generic}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

using NodeId = std::int32_t;

/// Sentinel for the virtual start node that carries the self-data reasoning
/// output. Lies outside the (non-negative) node id space.
inline constexpr NodeId kVirtualStart = -1;

struct OperatorNode {
  NodeId id = 0;
  std::string content;
  OperatorType type = OperatorType::Generic;

  friend bool operator==(const OperatorNode&, const OperatorNode&) = default;
};

using Edge = std::pair<NodeId, NodeId>;

/// Immutable operator DAG. Construction does not validate; call validate().
class Got {
 public:
  Got() = default;
  Got(std::vector<OperatorNode> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {}

  const std::vector<OperatorNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const OperatorNode* find(NodeId id) const {
    auto it = std::find_if(nodes_.begin(), nodes_.end(), [id](const auto& n) { return n.id == id; });
    return it == nodes_.end() ? nullptr : &*it;
  }
  bool contains(NodeId id) const { return find(id) != nullptr; }

  const OperatorNode& node(NodeId id) const {
    const auto* n = find(id);
    if (n == nullptr) fail(Errc::UnknownNode, "node " + std::to_string(id) + " is not in the graph");
    return *n;
  }

  std::size_t indegree(NodeId id) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [id](const Edge& e) { return e.second == id; }));
  }
  std::size_t outdegree(NodeId id) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [id](const Edge& e) { return e.first == id; }));
  }

  /// Nodes with out-degree zero, ascending id.
  std::vector<NodeId> sinks() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (outdegree(n.id) == 0) out.push_back(n.id);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<NodeId> ids() const {
    std::vector<NodeId> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(n.id);
    return out;
  }

  std::vector<Edge> sorted_edges() const {
    auto e = edges_;
    std::sort(e.begin(), e.end());
    return e;
  }

  /// Node lists compare in order; edges compare as sets.
  friend bool operator==(const Got& a, const Got& b) {
    return a.nodes_ == b.nodes_ && a.sorted_edges() == b.sorted_edges();
  }

 private:
  std::vector<OperatorNode> nodes_;
  std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string code;  // EMPTY_GRAPH, DUPLICATE_ID, NEGATIVE_ID, EMPTY_CONTENT,
                     // DANGLING_EDGE, SELF_EDGE, DUPLICATE_EDGE, CYCLE
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [code](const Violation& v) { return v.code == code; });
  }
};

namespace detail {

// Kahn layering over the edges whose endpoints are both declared. Returns the
// layers and the set of nodes left over (non-empty iff a cycle exists).
inline std::pair<std::vector<std::vector<NodeId>>, std::vector<NodeId>> kahn_layers(const Got& got) {
  std::map<NodeId, std::size_t> indeg;
  std::map<NodeId, std::vector<NodeId>> succ;
  for (const auto& n : got.nodes()) indeg.emplace(n.id, 0);
  std::set<Edge> seen;
  for (const auto& e : got.edges()) {
    if (!indeg.count(e.first) || !indeg.count(e.second) || !seen.insert(e).second) continue;
    ++indeg[e.second];
    succ[e.first].push_back(e.second);
  }
  std::vector<std::vector<NodeId>> layers;
  std::vector<NodeId> frontier;
  for (const auto& [id, d] : indeg)
    if (d == 0) frontier.push_back(id);
  std::size_t placed = 0;
  while (!frontier.empty()) {
    std::sort(frontier.begin(), frontier.end());
    placed += frontier.size();
    std::vector<NodeId> next;
    for (NodeId id : frontier)
      for (NodeId s : succ[id])
        if (--indeg[s] == 0) next.push_back(s);
    layers.push_back(std::move(frontier));
    frontier = std::move(next);
  }
  std::vector<NodeId> leftover;
  if (placed != indeg.size())
    for (const auto& [id, d] : indeg)
      if (d != 0) leftover.push_back(id);
  return {std::move(layers), std::move(leftover)};
}

}  // namespace detail

inline ValidationReport validate(const Got& got) {
  ValidationReport report;
  auto add = [&report](std::string code, std::string msg) {
    report.violations.push_back({std::move(code), std::move(msg)});
  };
  if (got.empty()) add("EMPTY_GRAPH", "graph has no operator nodes");

  std::set<NodeId> ids;
  for (const auto& n : got.nodes()) {
    if (!ids.insert(n.id).second) add("DUPLICATE_ID", "node id " + std::to_string(n.id) + " declared twice");
    if (n.id < 0) add("NEGATIVE_ID", "node id " + std::to_string(n.id) + " is negative");
    if (n.content.empty()) add("EMPTY_CONTENT", "node " + std::to_string(n.id) + " has empty content");
  }
  std::set<Edge> seen;
  for (const auto& [from, to] : got.edges()) {
    const std::string tag = "(" + std::to_string(from) + "," + std::to_string(to) + ")";
    if (!ids.count(from) || !ids.count(to)) add("DANGLING_EDGE", "edge " + tag + " references an undeclared node");
    if (from == to) add("SELF_EDGE", "edge " + tag + " is a self loop");
    if (!seen.insert({from, to}).second) add("DUPLICATE_EDGE", "edge " + tag + " appears twice");
  }
  auto [layers, leftover] = detail::kahn_layers(got);
  if (!leftover.empty()) {
    std::string members;
    for (NodeId id : leftover) members += (members.empty() ? "" : ",") + std::to_string(id);
    add("CYCLE", "nodes {" + members + "} lie on or behind a cycle");
  }
  return report;
}

/// Precursor set of a node: always the virtual start plus every direct
/// predecessor. Ascending order, so kVirtualStart comes first.
inline std::vector<NodeId> predecessors(const Got& got, NodeId id) {
  if (!got.contains(id)) fail(Errc::UnknownNode, "node " + std::to_string(id) + " is not in the graph");
  std::vector<NodeId> out{kVirtualStart};
  for (const auto& [from, to] : got.edges())
    if (to == id && std::find(out.begin(), out.end(), from) == out.end()) out.push_back(from);
  std::sort(out.begin(), out.end());
  return out;
}

/// Direct GoT predecessors only (no virtual start), ascending.
inline std::vector<NodeId> graph_predecessors(const Got& got, NodeId id) {
  auto pre = predecessors(got, id);
  pre.erase(pre.begin());
  return pre;
}

/// Guarantees a unique sink: multiple sinks are fused under a synthetic Log
/// "collect" node with the next free id.
inline Got normalize(const Got& got) {
  const auto sinks = got.sinks();
  if (sinks.size() <= 1) return got;
  NodeId next = 0;
  for (const auto& n : got.nodes()) next = std::max(next, n.id + 1);
  auto nodes = got.nodes();
  auto edges = got.edges();
  nodes.push_back({next, "collect", OperatorType::Log});
  for (NodeId s : sinks) edges.emplace_back(s, next);
  return Got(std::move(nodes), std::move(edges));
}

// ---------------------------------------------------------------------------
// Planning

struct ExecutionPlan {
  std::vector<std::vector<NodeId>> steps;

  std::size_t step_of(NodeId id) const {
    for (std::size_t k = 0; k < steps.size(); ++k)
      if (std::find(steps[k].begin(), steps[k].end(), id) != steps[k].end()) return k;
    fail(Errc::UnknownNode, "node " + std::to_string(id) + " is not scheduled");
  }

  friend bool operator==(const ExecutionPlan&, const ExecutionPlan&) = default;
};

/// Kahn layering: step k holds exactly the nodes whose predecessors all sit in
/// earlier steps; ascending id within a step.
inline ExecutionPlan plan(const Got& got) {
  auto [layers, leftover] = detail::kahn_layers(got);
  if (!leftover.empty())
    fail(Errc::CyclicGraph, "graph contains a cycle; cannot schedule");
  return ExecutionPlan{std::move(layers)};
}

// ---------------------------------------------------------------------------
// Structured text (JSON) schema:
//   {"nodes": [{"id": 1, "type": "Loc", "content": "locate p1"}, ...],
//    "edges": [[1, 3], ...]}

inline nlohmann::json to_json(const Got& got) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : got.nodes())
    nodes.push_back({{"id", n.id}, {"type", std::string(to_string(n.type))}, {"content", n.content}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : got.sorted_edges()) edges.push_back({a, b});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline Got got_from_json(const nlohmann::json& j) {
  auto bad = [](const std::string& where, const std::string& why) -> void {
    fail(Errc::SchemaError, "at " + where + ": " + why);
  };
  if (!j.is_object()) bad("$", "expected an object");
  if (!j.contains("nodes") || !j["nodes"].is_array()) bad("$.nodes", "missing or not an array");
  if (j.contains("edges") && !j["edges"].is_array()) bad("$.edges", "not an array");

  std::vector<OperatorNode> nodes;
  std::set<NodeId> ids;
  const auto& jn = j["nodes"];
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string where = "$.nodes[" + std::to_string(i) + "]";
    const auto& n = jn[i];
    if (!n.is_object()) bad(where, "expected an object");
    if (!n.contains("id") || !n["id"].is_number_integer()) bad(where + ".id", "missing or not an integer");
    if (!n.contains("type") || !n["type"].is_string()) bad(where + ".type", "missing or not a string");
    if (!n.contains("content") || !n["content"].is_string()) bad(where + ".content", "missing or not a string");
    const auto id = n["id"].get<std::int64_t>();
    if (id < 0 || id > INT32_MAX) bad(where + ".id", "id out of range");
    const auto type_name = n["type"].get<std::string>();
    const auto type = parse_operator_type(type_name);
    if (!type) bad(where + ".type", "unknown operator type \"" + type_name + "\"");
    if (!ids.insert(static_cast<NodeId>(id)).second) bad(where + ".id", "duplicate node id " + std::to_string(id));
    nodes.push_back({static_cast<NodeId>(id), n["content"].get<std::string>(), *type});
  }
  std::vector<Edge> edges;
  if (j.contains("edges")) {
    const auto& je = j["edges"];
    for (std::size_t i = 0; i < je.size(); ++i) {
      const auto& e = je[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
        bad("$.edges[" + std::to_string(i) + "]", "expected [from, to] integer pair");
      edges.emplace_back(e[0].get<NodeId>(), e[1].get<NodeId>());
    }
  }
  return Got(std::move(nodes), std::move(edges));
}

/// indent < 0 gives the single-line canonical form.
inline std::string serialize(const Got& got, int indent = -1) { return to_json(got).dump(indent); }

inline Got deserialize(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::SchemaError, "malformed text at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return got_from_json(j);
}

// ---------------------------------------------------------------------------
// DOT export

namespace detail {
inline std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}
}  // namespace detail

inline std::string to_dot(const Got& got) {
  std::vector<const OperatorNode*> order;
  for (const auto& n : got.nodes()) order.push_back(&n);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::string out = "digraph got {\n";
  for (const auto* n : order) {
    out += "  n" + std::to_string(n->id) + " [label=\"" + std::to_string(n->id) + ":" +
           std::string(to_string(n->type)) + ":" + detail::dot_escape(n->content) + "\"];\n";
  }
  for (const auto& [a, b] : got.sorted_edges())
    out += "  n" + std::to_string(a) + " -> n" + std::to_string(b) + ";\n";
  out += "}\n";
  return out;
}

}  // namespace gotcqa
