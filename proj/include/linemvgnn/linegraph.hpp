#pragma once

// Line-graph view of a transaction graph: one line node per transaction and a
// directed line edge p => q whenever p's payee is q's payer, i.e. money that
// arrived through p can leave through q.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "linemvgnn/error.hpp"
#include "linemvgnn/graph.hpp"

namespace lmv {

using LineNodeId = std::size_t;

struct LineEdge {
  LineNodeId pred;
  LineNodeId succ;
  friend bool operator==(const LineEdge&, const LineEdge&) = default;
  friend auto operator<=>(const LineEdge&, const LineEdge&) = default;
};

/// Which edges may act as predecessors at their payee. With in-degree
/// sampling active, a node whose in-degree exceeds tau keeps a uniform sample
/// of tau in-edges; every other edge is retained.
struct PredecessorSampling {
  std::vector<bool> retained;
  std::optional<std::size_t> tau;
  std::uint64_t seed = 0;

  bool all_retained() const { return !tau.has_value(); }
  bool is_retained(EdgeId e) const { return retained.empty() || retained[e]; }
};

inline PredecessorSampling sample_predecessors(const TransactionGraph& g, std::optional<std::size_t> tau,
                                               std::uint64_t seed) {
  PredecessorSampling s;
  s.tau = tau;
  s.seed = seed;
  if (!tau) return s;
  if (*tau < 1) throw argument_error("tau must be at least 1");
  s.retained.assign(g.num_edges(), true);
  std::mt19937_64 rng(seed);
  std::vector<EdgeId> picked;
  for (NodeId w = 0; w < g.num_nodes(); ++w) {
    auto in = g.in_edges(w);
    if (in.size() <= *tau) continue;
    for (EdgeId e : in) s.retained[e] = false;
    picked.clear();
    std::sample(in.begin(), in.end(), std::back_inserter(picked), *tau, rng);
    for (EdgeId e : picked) s.retained[e] = true;
  }
  return s;
}

/// q exactly reverses p: p = (s -> u), q = (u -> s). A self-loop reverses
/// itself and any parallel self-loop.
inline bool is_reversal(const Edge& p, const Edge& q) { return p.dst == q.src && q.dst == p.src; }

struct LineGraphView {
  std::vector<EdgeId> base_edge_of;  // line node -> transaction
  std::vector<LineEdge> line_edges;  // sorted, unique
  std::size_t dummy_edge_feature_dim = 1;
  bool non_backtracking = true;
  PredecessorSampling sampling;

  std::size_t num_nodes() const { return base_edge_of.size(); }
  std::size_t num_edges() const { return line_edges.size(); }
};

inline LineGraphView build_line_graph(const TransactionGraph& g, const PredecessorSampling& sampling,
                                      bool non_backtracking) {
  LineGraphView lg;
  lg.non_backtracking = non_backtracking;
  lg.sampling = sampling;
  lg.base_edge_of.resize(g.num_edges());
  for (EdgeId e = 0; e < g.num_edges(); ++e) lg.base_edge_of[e] = e;

  const auto& edges = g.edges();
  std::size_t reserve = 0;
  for (NodeId w = 0; w < g.num_nodes(); ++w) reserve += g.in_degree(w) * g.out_degree(w);
  lg.line_edges.reserve(reserve);
  for (NodeId w = 0; w < g.num_nodes(); ++w)
    for (EdgeId p : g.in_edges(w)) {
      if (!sampling.is_retained(p)) continue;
      for (EdgeId q : g.out_edges(w)) {
        if (non_backtracking && is_reversal(edges[p], edges[q])) continue;
        lg.line_edges.push_back({p, q});
      }
    }
  std::sort(lg.line_edges.begin(), lg.line_edges.end());
  lg.line_edges.erase(std::unique(lg.line_edges.begin(), lg.line_edges.end()), lg.line_edges.end());
  return lg;
}

inline LineGraphView build_line_graph(const TransactionGraph& g, bool non_backtracking,
                                      std::optional<std::size_t> tau = std::nullopt, std::uint64_t seed = 0) {
  return build_line_graph(g, sample_predecessors(g, tau, seed), non_backtracking);
}

/// Edges whose payee is e's payer, ascending edge id.
inline std::vector<EdgeId> edge_predecessors(const TransactionGraph& g, EdgeId e, bool non_backtracking,
                                             const PredecessorSampling* sampling = nullptr) {
  const Edge& q = g.edge(e);
  std::vector<EdgeId> out;
  for (EdgeId p : g.in_edges(q.src)) {
    if (sampling && !sampling->is_retained(p)) continue;
    if (non_backtracking && is_reversal(g.edges()[p], q)) continue;
    out.push_back(p);
  }
  return out;
}

/// Edges whose payer is e's payee, ascending edge id.
inline std::vector<EdgeId> edge_successors(const TransactionGraph& g, EdgeId e, bool non_backtracking,
                                           const PredecessorSampling* sampling = nullptr) {
  const Edge& p = g.edge(e);
  std::vector<EdgeId> out;
  if (sampling && !sampling->is_retained(e)) return out;
  for (EdgeId q : g.out_edges(p.dst)) {
    if (non_backtracking && is_reversal(p, g.edges()[q])) continue;
    out.push_back(q);
  }
  return out;
}

struct LineGraphStats {
  std::size_t graph_nodes = 0;
  std::size_t graph_edges = 0;
  std::size_t line_nodes = 0;
  std::size_t line_edges = 0;
  std::size_t degree_product_sum = 0;  // sum_w indeg(w) * outdeg(w)
  std::size_t reversal_pairs = 0;      // ordered (p, q) with q reversing p
  bool identity_holds = false;
};

/// Counts the line graph of g and checks |E(L)| against
/// sum_w indeg(w) * outdeg(w) (minus reversal pairs when non-backtracking).
/// Assumes no sampling.
inline LineGraphStats line_graph_stats(const TransactionGraph& g, bool non_backtracking) {
  LineGraphStats s;
  s.graph_nodes = g.num_nodes();
  s.graph_edges = g.num_edges();
  const LineGraphView lg = build_line_graph(g, non_backtracking);
  s.line_nodes = lg.num_nodes();
  s.line_edges = lg.num_edges();
  for (NodeId w = 0; w < g.num_nodes(); ++w) {
    s.degree_product_sum += g.in_degree(w) * g.out_degree(w);
    for (EdgeId p : g.in_edges(w))
      for (EdgeId q : g.out_edges(w))
        if (is_reversal(g.edges()[p], g.edges()[q])) ++s.reversal_pairs;
  }
  const std::size_t expected = s.degree_product_sum - (non_backtracking ? s.reversal_pairs : 0);
  s.identity_holds = s.line_nodes == s.graph_edges && s.line_edges == expected;
  return s;
}

}  // namespace lmv
