#pragma once

// Self-checks shared by the command-line tool and the test suites: random
// attributed graphs, explicit-vs-direct edge propagation agreement and a
// finite-difference check of a full model loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/graph.hpp"
#include "linemvgnn/linegraph.hpp"
#include "linemvgnn/model.hpp"

namespace lmv {

struct RandomGraphOptions {
  std::size_t max_nodes = 60;
  std::size_t max_edges = 200;
  std::size_t node_dim = 3;
  std::size_t edge_dim = 2;
  double self_loop_rate = 0.05;
  double reciprocal_rate = 0.2;  // chance an edge is followed by its reversal
  double parallel_rate = 0.1;    // chance an edge is duplicated
};

/// Multigraph with self-loops, reciprocal and parallel edges, and normal
/// features.
inline TransactionGraph random_attributed_graph(std::mt19937_64& rng, const RandomGraphOptions& opt = {}) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(1, opt.max_nodes))(rng);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(0, opt.max_edges)(rng);
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  while (edges.size() < target) {
    NodeId s = node(rng), d = node(rng);
    if (s == d && u(rng) > opt.self_loop_rate && n > 1) continue;
    edges.push_back({s, d});
    if (edges.size() < target && u(rng) < opt.reciprocal_rate) edges.push_back({d, s});
    if (edges.size() < target && u(rng) < opt.parallel_rate) edges.push_back({s, d});
  }
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix nf(n, opt.node_dim), ef(edges.size(), opt.edge_dim);
  for (double& x : nf.values()) x = z(rng);
  for (double& x : ef.values()) x = z(rng);
  return TransactionGraph(n, std::move(edges), std::move(nf), std::move(ef));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

struct EquivalenceReport {
  std::size_t trials = 0;
  double max_abs_diff = 0.0;
  std::size_t max_edges_seen = 0;
  std::size_t max_nodes_seen = 0;
};

/// Runs the full model with edge propagation on an explicit line graph and
/// directly on the transaction graph, on fresh random graphs and parameters,
/// cycling through both combine modes and both backtracking modes.
inline EquivalenceReport equivalence_check(std::size_t trials, std::size_t max_edges, std::size_t max_nodes,
                                           std::uint64_t seed) {
  EquivalenceReport rep;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < trials; ++i) {
    RandomGraphOptions go;
    go.max_edges = max_edges;
    go.max_nodes = max_nodes;
    const TransactionGraph g = random_attributed_graph(rng, go);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 8;
    cfg.combine = i % 2 == 0 ? Combine::cat : Combine::add;
    cfg.non_backtracking = (i / 2) % 2 == 0;
    cfg.node_dim = go.node_dim;
    cfg.edge_dim = go.edge_dim;
    ModelParameters mp = init_parameters(cfg, rng());
    Tape t1(false), t2(false);
    const LineGraphView lg = build_line_graph(g, cfg.non_backtracking);
    const Matrix a = line_mvgnn_forward_explicit(t1, g, lg, mp, cfg).value();
    const Matrix b = line_mvgnn_forward_refined(t2, g, mp, cfg).value();
    rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(a, b));
    rep.max_edges_seen = std::max(rep.max_edges_seen, g.num_edges());
    rep.max_nodes_seen = std::max(rep.max_nodes_seen, g.num_nodes());
    ++rep.trials;
  }
  return rep;
}

/// Finite-difference check of the weighted cross-entropy of a full model on a
/// random labeled graph, w.r.t. every parameter.
inline GradCheckResult model_gradient_check(const ModelConfig& base, std::size_t max_edges, std::uint64_t seed,
                                            double h = 1e-5) {
  std::mt19937_64 rng(seed);
  RandomGraphOptions go;
  go.max_nodes = std::max<std::size_t>(2, max_edges / 2);
  go.max_edges = max_edges;
  go.node_dim = base.node_dim;
  go.edge_dim = base.edge_dim;
  TransactionGraph g = random_attributed_graph(rng, go);
  std::vector<int> labels(g.num_nodes());
  for (std::size_t v = 0; v < labels.size(); ++v) labels[v] = int(v % 3 == 0);
  ModelParameters mp = init_parameters(base, rng());
  // Move to a generic point: zero biases put isolated nodes with dead
  // activations exactly on a ReLU kink, and the initial alpha/beta values
  // are symmetric.
  std::normal_distribution<double> z(0.0, 0.3);
  for (Parameter* p : mp.all())
    if (p->value.rows() == 1)
      for (double& x : p->value.values()) x += z(rng);
  const PropagationPlan plan = make_plan(g, base);
  auto fn = [&](Tape& t) {
    auto out = forward(t, mp, base, plan, g.node_features(), g.edge_features());
    return softmax_cross_entropy(out.logits, labels, {0.7, 1.3});
  };
  auto params = mp.all();
  return check_parameter_gradients(fn, params, h);
}

}  // namespace lmv
