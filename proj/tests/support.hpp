#pragma once

// Shared fixtures for unit and acceptance tests: random DAGs and oracles
// that are written independently of the library's own algorithms.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "gotcqa/got.hpp"
#include "gotcqa/rng.hpp"

namespace gotcqa::testing {

/// The two-entity difference question's graph: two Loc, two Num, one Log.
inline Got two_entity_got() {
  return Got({{1, "locate p1", OperatorType::Loc},
              {2, "locate p2", OperatorType::Loc},
              {3, "value at p1", OperatorType::Num},
              {4, "value at p2", OperatorType::Num},
              {5, "difference", OperatorType::Log}},
             {{1, 3}, {2, 4}, {3, 5}, {4, 5}});
}

/// Random DAG with 1..max_nodes nodes and scattered (non-contiguous) ids.
/// Edges only run forward in a hidden random order, so the graph is acyclic.
inline Got random_dag(Rng& rng, std::size_t max_nodes = 12, double edge_prob = 0.3) {
  const auto n = 1 + rng.index(max_nodes);
  std::set<NodeId> pool;
  while (pool.size() < n) pool.insert(static_cast<NodeId>(rng.index(4 * max_nodes)));
  std::vector<NodeId> order(pool.begin(), pool.end());
  rng.shuffle(std::span<NodeId>(order));
  static const OperatorType kTypes[] = {OperatorType::Loc, OperatorType::Num, OperatorType::Log};
  std::vector<OperatorNode> nodes;
  for (NodeId id : order) nodes.push_back({id, "node " + std::to_string(id), kTypes[rng.index(3)]});
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform(0.0, 1.0) < edge_prob) edges.emplace_back(order[i], order[j]);
  rng.shuffle(std::span<Edge>(edges));
  return Got(std::move(nodes), std::move(edges));
}

/// Longest-path layering by exhaustive path enumeration: a node's step is
/// the number of edges on the longest path that ends at it.
inline std::vector<std::vector<NodeId>> longest_path_layers(const Got& g) {
  std::map<NodeId, std::vector<NodeId>> parents;
  for (const auto& [a, b] : g.edges()) parents[b].push_back(a);
  std::function<std::size_t(NodeId)> depth = [&](NodeId v) -> std::size_t {
    std::size_t best = 0;
    for (NodeId p : parents[v]) best = std::max(best, depth(p) + 1);
    return best;
  };
  std::vector<std::vector<NodeId>> layers;
  for (const auto& node : g.nodes()) {
    const auto k = depth(node.id);
    if (layers.size() <= k) layers.resize(k + 1);
    layers[k].push_back(node.id);
  }
  for (auto& l : layers) std::sort(l.begin(), l.end());
  return layers;
}

/// Brute-force reachability cycle test.
inline bool has_cycle(const Got& g) {
  for (const auto& start : g.nodes()) {
    std::set<NodeId> seen;
    std::vector<NodeId> stack{start.id};
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& [a, b] : g.edges()) {
        if (a != v) continue;
        if (b == start.id) return true;
        if (seen.insert(b).second) stack.push_back(b);
      }
    }
  }
  return false;
}

}  // namespace gotcqa::testing
