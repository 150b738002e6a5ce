#pragma once

// MVGNN layers and the LineMVGNN stack.
//
// An MVGNN layer aggregates messages from in-neighbors and from out-neighbors
// with one shared message map, combines the two aggregates (weighted sum or
// concatenation + linear map) and applies a vertex update:
//
//   m_in(v)  = sum_{(w,e) in in(v)}  ReLU(M [h_w || e])
//   m_out(v) = sum_{(w,e) in out(v)} ReLU(M [h_w || e])
//   C        = a * m_in + (1 - a) * m_out        (add)
//            | F [m_in || m_out]                  (cat)
//   h'_v     = ReLU(U [h_v || C])
//
// LineMVGNN interleaves an edge-side MVGNN layer on the line graph (line edge
// features are the constant [1]) with a node-side layer on the transaction
// graph, updating edge embeddings residually. The edge-side layer can run on
// an explicit line graph or directly on the transaction graph.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/error.hpp"
#include "linemvgnn/graph.hpp"
#include "linemvgnn/linegraph.hpp"

namespace lmv {

enum class Combine { add, cat };

inline const char* to_string(Combine c) { return c == Combine::add ? "add" : "cat"; }

struct ModelConfig {
  std::size_t depth = 2;
  std::size_t hidden_dim = 64;
  Combine combine = Combine::cat;
  bool use_line_graph_view = true;  // LGV
  bool use_two_way = true;          // TWMP
  bool non_backtracking = true;
  bool refined_mode = true;  // edge propagation without an explicit line graph
  std::size_t node_dim = 0;
  std::size_t edge_dim = 0;
  std::optional<std::size_t> tau;  // predecessor in-degree sampling threshold
  std::uint64_t sampling_seed = 0;

  void validate() const {
    if (depth < 1) throw argument_error("model depth must be at least 1");
    if (hidden_dim < 1) throw argument_error("hidden_dim must be at least 1");
    if (tau && *tau < 1) throw argument_error("tau must be at least 1");
  }
};

/// y = x W + b with W of shape (in, out).
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(name + ".weight", glorot_uniform(in, out, rng)), bias(name + ".bias", Matrix(1, out)) {}

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var operator()(Tape& t, Var x) { return add_bias(matmul(x, t.param(weight)), t.param(bias)); }
};

struct MvgnnLayerParams {
  Linear message;
  Linear update;
  std::optional<Linear> combine;    // cat mode with two-way messages
  std::optional<Parameter> alpha;   // add mode with two-way messages

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&message.weight);
    out.push_back(&message.bias);
    out.push_back(&update.weight);
    out.push_back(&update.bias);
    if (combine) {
      out.push_back(&combine->weight);
      out.push_back(&combine->bias);
    }
    if (alpha) out.push_back(&*alpha);
  }
};

struct LayerOptions {
  Combine combine = Combine::cat;
  bool two_way = true;
};

inline MvgnnLayerParams make_layer(const std::string& name, std::size_t state_dim, std::size_t link_dim,
                                   std::size_t hidden, const LayerOptions& opt, std::mt19937_64& rng) {
  MvgnnLayerParams p;
  p.message = Linear(name + ".message", state_dim + link_dim, hidden, rng);
  if (opt.two_way) {
    if (opt.combine == Combine::cat)
      p.combine = Linear(name + ".combine", 2 * hidden, hidden, rng);
    else
      p.alpha = Parameter(name + ".alpha", Matrix(1, 1, 0.5));
  }
  p.update = Linear(name + ".update", state_dim + hidden, hidden, rng);
  return p;
}

struct ModelParameters {
  std::vector<MvgnnLayerParams> node_layers;
  std::vector<MvgnnLayerParams> edge_layers;  // empty without the line-graph view
  std::optional<Linear> edge_projection;      // first residual when edge_dim != hidden
  std::vector<Parameter> beta;                // depth - 1 layer-aggregation scalars
  Linear classifier;

  /// Stable order: edge layer l, node layer l for each l, projection, betas,
  /// classifier.
  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    for (std::size_t l = 0; l < node_layers.size(); ++l) {
      if (l < edge_layers.size()) edge_layers[l].collect(out);
      node_layers[l].collect(out);
    }
    if (edge_projection) {
      out.push_back(&edge_projection->weight);
      out.push_back(&edge_projection->bias);
    }
    for (auto& b : beta) out.push_back(&b);
    out.push_back(&classifier.weight);
    out.push_back(&classifier.bias);
    return out;
  }

  std::size_t num_scalars() {
    std::size_t n = 0;
    for (Parameter* p : all()) n += p->value.size();
    return n;
  }
};

/// Glorot-uniform weights, zero biases, alpha = 0.5, beta_l = 1 / depth.
inline ModelParameters init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParameters mp;
  const LayerOptions opt{cfg.combine, cfg.use_two_way};
  const std::size_t h = cfg.hidden_dim;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string tag = std::to_string(l);
    if (cfg.use_line_graph_view)
      mp.edge_layers.push_back(make_layer("edge." + tag, l == 0 ? cfg.edge_dim : h, 1, h, opt, rng));
    const std::size_t link = cfg.use_line_graph_view ? h : cfg.edge_dim;
    mp.node_layers.push_back(make_layer("node." + tag, l == 0 ? cfg.node_dim : h, link, h, opt, rng));
  }
  if (cfg.use_line_graph_view && cfg.edge_dim != h) mp.edge_projection = Linear("edge.projection", cfg.edge_dim, h, rng);
  for (std::size_t l = 0; l + 1 < cfg.depth; ++l)
    mp.beta.emplace_back("beta." + std::to_string(l), Matrix(1, 1, 1.0 / double(cfg.depth)));
  mp.classifier = Linear("classifier", h, 2, rng);
  return mp;
}

/// Index arrays for propagating over one graph, built once and reused across
/// forward passes.
struct PropagationPlan {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  bool non_backtracking = true;
  bool explicit_line_graph = false;
  PredecessorSampling sampling;

  RowIndex edge_src;  // payer of each edge
  RowIndex edge_dst;  // payee of each edge

  // Explicit route: line edges pred => succ.
  RowIndex line_pred;
  RowIndex line_succ;

  // Direct route. Edges are grouped by ordered endpoint pair; reverse_group
  // maps an edge to the group of its reversal, or to num_groups (a row that
  // never receives anything) when no reversed edge exists.
  RowIndex retained;       // edges that may act as predecessors
  RowIndex retained_dst;
  RowIndex retained_group;
  RowIndex pair_group;
  RowIndex reverse_group;
  std::size_t num_groups = 0;
};

namespace detail {

inline void fill_common(PropagationPlan& plan, const TransactionGraph& g) {
  plan.num_nodes = g.num_nodes();
  plan.num_edges = g.num_edges();
  std::vector<std::size_t> src(g.num_edges()), dst(g.num_edges());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    src[e] = g.edges()[e].src;
    dst[e] = g.edges()[e].dst;
  }
  plan.edge_src = make_index(std::move(src));
  plan.edge_dst = make_index(std::move(dst));
}

}  // namespace detail

/// Plan for edge propagation over an already built line graph.
inline PropagationPlan make_explicit_plan(const TransactionGraph& g, const LineGraphView& lg) {
  if (lg.num_nodes() != g.num_edges()) throw data_error("line graph does not match transaction graph edge count");
  PropagationPlan plan;
  detail::fill_common(plan, g);
  plan.explicit_line_graph = true;
  plan.non_backtracking = lg.non_backtracking;
  plan.sampling = lg.sampling;
  std::vector<std::size_t> pred, succ;
  pred.reserve(lg.num_edges());
  succ.reserve(lg.num_edges());
  for (const LineEdge& le : lg.line_edges) {
    if (le.pred >= g.num_edges() || le.succ >= g.num_edges())
      throw data_error("line edge refers to a missing transaction");
    pred.push_back(lg.base_edge_of[le.pred]);
    succ.push_back(lg.base_edge_of[le.succ]);
  }
  plan.line_pred = make_index(std::move(pred));
  plan.line_succ = make_index(std::move(succ));
  return plan;
}

/// Plan for edge propagation straight on the transaction graph.
inline PropagationPlan make_direct_plan(const TransactionGraph& g, const PredecessorSampling& sampling,
                                        bool non_backtracking) {
  PropagationPlan plan;
  detail::fill_common(plan, g);
  plan.non_backtracking = non_backtracking;
  plan.sampling = sampling;

  std::map<std::pair<NodeId, NodeId>, std::size_t> groups;
  std::vector<std::size_t> group(g.num_edges());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edges()[e];
    auto [it, inserted] = groups.try_emplace({ed.src, ed.dst}, groups.size());
    group[e] = it->second;
  }
  plan.num_groups = groups.size();
  std::vector<std::size_t> reverse(g.num_edges());
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edges()[e];
    auto it = groups.find({ed.dst, ed.src});
    reverse[e] = it == groups.end() ? plan.num_groups : it->second;
  }
  std::vector<std::size_t> kept, kept_dst, kept_group;
  for (EdgeId e = 0; e < g.num_edges(); ++e)
    if (sampling.is_retained(e)) {
      kept.push_back(e);
      kept_dst.push_back(g.edges()[e].dst);
      kept_group.push_back(group[e]);
    }
  plan.retained = make_index(std::move(kept));
  plan.retained_dst = make_index(std::move(kept_dst));
  plan.retained_group = make_index(std::move(kept_group));
  plan.pair_group = make_index(std::move(group));
  plan.reverse_group = make_index(std::move(reverse));
  return plan;
}

/// Plan matching the configuration's route and sampling flags.
inline PropagationPlan make_plan(const TransactionGraph& g, const ModelConfig& cfg) {
  const PredecessorSampling sampling = sample_predecessors(g, cfg.tau, cfg.sampling_seed);
  if (cfg.use_line_graph_view && !cfg.refined_mode)
    return make_explicit_plan(g, build_line_graph(g, sampling, cfg.non_backtracking));
  return make_direct_plan(g, sampling, cfg.non_backtracking);
}

// ---------------------------------------------------------------------------
// Layers

/// C(m_in, m_out); with two-way messages off this is m_in.
inline Var combine_messages(Tape& t, MvgnnLayerParams& p, Var m_in, std::optional<Var> m_out) {
  if (!m_out) return m_in;
  if (p.combine) return (*p.combine)(t, concat_cols(m_in, *m_out));
  if (!p.alpha) throw argument_error("two-way layer has neither combine map nor alpha");
  Var a = t.param(*p.alpha);
  return add(scale(m_in, a), scale(*m_out, affine(a, -1.0, 1.0)));
}

inline Var vertex_update(Tape& t, MvgnnLayerParams& p, Var h, Var combined) {
  return relu(p.update(t, concat_cols(h, combined)));
}

/// One MVGNN layer over a set of directed links sender -> receiver carrying
/// per-link features. Every target with no links receives zero messages.
inline Var mvgnn_layer(Tape& t, MvgnnLayerParams& p, Var h, Var link_features, const RowIndex& senders,
                       const RowIndex& receivers, bool two_way) {
  const std::size_t n = h.rows();
  if (link_features.rows() != senders->size() || senders->size() != receivers->size())
    throw argument_error("mvgnn_layer: link feature rows must match link count");
  if (p.message.in_dim() != h.cols() + link_features.cols())
    throw argument_error("mvgnn_layer: message map expects " + std::to_string(p.message.in_dim()) + " inputs, got " +
                         std::to_string(h.cols() + link_features.cols()));
  auto message = [&](const RowIndex& from) {
    return relu(p.message(t, concat_cols(row_gather(h, from), link_features)));
  };
  Var m_in = row_scatter_add(message(senders), receivers, n);
  std::optional<Var> m_out;
  if (two_way) m_out = row_scatter_add(message(receivers), senders, n);
  return vertex_update(t, p, h, combine_messages(t, p, m_in, m_out));
}

/// Node-side layer on the transaction graph; `edge_state` has one row per edge.
inline Var node_layer(Tape& t, MvgnnLayerParams& p, const PropagationPlan& plan, Var h, Var edge_state,
                      bool two_way) {
  if (h.rows() != plan.num_nodes || edge_state.rows() != plan.num_edges)
    throw argument_error("node_layer: activation rows do not match the graph");
  return mvgnn_layer(t, p, h, edge_state, plan.edge_src, plan.edge_dst, two_way);
}

/// Convenience form on a graph: h has one row per node, e one row per edge.
inline Var mvgnn_layer(Tape& t, const TransactionGraph& g, MvgnnLayerParams& p, Var h, Var e,
                       const LayerOptions& opt) {
  PropagationPlan plan;
  detail::fill_common(plan, g);
  if (opt.two_way && opt.combine == Combine::cat && !p.combine)
    throw argument_error("mvgnn_layer: cat combine requested but layer has no combine map");
  if (opt.two_way && opt.combine == Combine::add && !p.alpha)
    throw argument_error("mvgnn_layer: add combine requested but layer has no alpha");
  return node_layer(t, p, plan, h, e, opt.two_way);
}

/// Edge-side layer over explicit line edges; returns the update delta.
inline Var edge_layer_explicit(Tape& t, MvgnnLayerParams& p, const PropagationPlan& plan, Var state, bool two_way) {
  Var ones = t.constant(Matrix(plan.line_pred->size(), 1, 1.0));
  return mvgnn_layer(t, p, state, ones, plan.line_pred, plan.line_succ, two_way);
}

/// Edge-side layer computed on the transaction graph without enumerating
/// edge pairs. Since the message of a predecessor depends only on that
/// predecessor, the sum over predecessors of q is the sum of retained
/// messages arriving at q's payer, minus those of edges reversing q when
/// backtracking is excluded. Successor sums work the same way from the payee.
inline Var edge_layer_direct(Tape& t, MvgnnLayerParams& p, const PropagationPlan& plan, Var state, bool two_way) {
  const std::size_t m = plan.num_edges;
  if (state.rows() != m) throw argument_error("edge layer: state rows must equal edge count");
  if (p.message.in_dim() != state.cols() + 1) throw argument_error("edge layer: message map dimension mismatch");
  Var ones = t.constant(Matrix(m, 1, 1.0));
  Var mu = relu(p.message(t, concat_cols(state, ones)));
  const bool sampled = !plan.sampling.all_retained();
  const std::size_t groups = plan.num_groups + 1;

  Var mu_kept = sampled ? row_gather(mu, plan.retained) : mu;
  const RowIndex& kept_dst = sampled ? plan.retained_dst : plan.edge_dst;
  const RowIndex& kept_group = sampled ? plan.retained_group : plan.pair_group;

  Var m_in = row_gather(row_scatter_add(mu_kept, kept_dst, plan.num_nodes), plan.edge_src);
  if (plan.non_backtracking)
    m_in = sub(m_in, row_gather(row_scatter_add(mu_kept, kept_group, groups), plan.reverse_group));

  std::optional<Var> m_out;
  if (two_way) {
    Var out = row_gather(row_scatter_add(mu, plan.edge_src, plan.num_nodes), plan.edge_dst);
    if (plan.non_backtracking)
      out = sub(out, row_gather(row_scatter_add(mu, plan.pair_group, groups), plan.reverse_group));
    if (sampled) out = row_scatter_add(row_gather(out, plan.retained), plan.retained, m);
    m_out = out;
  }
  return vertex_update(t, p, state, combine_messages(t, p, m_in, m_out));
}

/// z = sum_{l<L} beta_l h^(l) + (1 - sum beta_l) h^(L).
inline Var aggregate_layers(std::span<const Var> layers, std::span<const Var> beta) {
  if (layers.empty()) throw argument_error("aggregate_layers: no layers");
  if (beta.size() + 1 != layers.size()) throw argument_error("aggregate_layers: need exactly depth - 1 betas");
  if (beta.empty()) return layers.back();
  Var beta_sum = beta[0];
  Var z = scale(layers[0], beta[0]);
  for (std::size_t l = 1; l < beta.size(); ++l) {
    beta_sum = add(beta_sum, beta[l]);
    z = add(z, scale(layers[l], beta[l]));
  }
  return add(z, scale(layers.back(), affine(beta_sum, -1.0, 1.0)));
}

inline Var aggregate_layers(Tape& t, std::span<const Var> layers, ModelParameters& mp) {
  std::vector<Var> beta;
  for (auto& b : mp.beta) beta.push_back(t.param(b));
  return aggregate_layers(layers, std::span<const Var>(beta));
}

/// Affine map to two logits per node (licit, illicit).
inline Var classify(Tape& t, Var z, ModelParameters& mp) { return mp.classifier(t, z); }

struct ForwardOutput {
  Var z;
  Var logits;
  std::vector<Var> node_states;  // h^(1) .. h^(L)
  std::optional<Var> edge_state; // t^(L) with the line-graph view on
};

/// Full LineMVGNN forward; the plan decides whether edge propagation runs on
/// an explicit line graph or directly on the transaction graph.
inline ForwardOutput forward(Tape& t, ModelParameters& mp, const ModelConfig& cfg, const PropagationPlan& plan,
                             const Matrix& node_features, const Matrix& edge_features) {
  cfg.validate();
  if (node_features.rows() != plan.num_nodes || edge_features.rows() != plan.num_edges)
    throw argument_error("forward: feature rows do not match the graph");
  if (node_features.cols() != cfg.node_dim || edge_features.cols() != cfg.edge_dim)
    throw argument_error("forward: feature widths do not match the model configuration");
  if (mp.node_layers.size() != cfg.depth) throw argument_error("forward: parameters built for a different depth");
  if (cfg.use_line_graph_view && mp.edge_layers.size() != cfg.depth)
    throw argument_error("forward: parameters lack edge-side layers");
  if (cfg.use_line_graph_view && !plan.explicit_line_graph && !plan.reverse_group)
    throw argument_error("forward: plan has no edge propagation indices");

  ForwardOutput out;
  Var h = t.constant(node_features);
  Var e0 = t.constant(edge_features);
  std::optional<Var> edge_state;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    Var links = e0;
    if (cfg.use_line_graph_view) {
      Var prev = edge_state ? *edge_state : e0;
      Var delta = plan.explicit_line_graph ? edge_layer_explicit(t, mp.edge_layers[l], plan, prev, cfg.use_two_way)
                                           : edge_layer_direct(t, mp.edge_layers[l], plan, prev, cfg.use_two_way);
      if (!edge_state && mp.edge_projection) prev = (*mp.edge_projection)(t, prev);
      edge_state = add(prev, delta);
      links = *edge_state;
    }
    h = node_layer(t, mp.node_layers[l], plan, h, links, cfg.use_two_way);
    out.node_states.push_back(h);
  }
  out.edge_state = edge_state;
  out.z = aggregate_layers(t, out.node_states, mp);
  out.logits = classify(t, out.z, mp);
  return out;
}

/// Forward with edge propagation over the given explicit line graph.
inline Var line_mvgnn_forward_explicit(Tape& t, const TransactionGraph& g, const LineGraphView& lg,
                                       ModelParameters& mp, const ModelConfig& cfg) {
  if (lg.non_backtracking != cfg.non_backtracking) throw data_error("line graph built with different flags");
  return forward(t, mp, cfg, make_explicit_plan(g, lg), g.node_features(), g.edge_features()).z;
}

/// Forward with edge propagation straight on the transaction graph.
inline Var line_mvgnn_forward_refined(Tape& t, const TransactionGraph& g, ModelParameters& mp,
                                      const ModelConfig& cfg) {
  const PropagationPlan plan =
      make_direct_plan(g, sample_predecessors(g, cfg.tau, cfg.sampling_seed), cfg.non_backtracking);
  return forward(t, mp, cfg, plan, g.node_features(), g.edge_features()).z;
}

}  // namespace lmv
