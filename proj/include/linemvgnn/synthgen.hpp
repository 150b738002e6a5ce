#pragma once

// Synthetic money-laundering pattern injection.
//
// Patterns (directed path, cycle, clique, three-layer multipartite fan-in) are
// built on fresh accounts labeled illicit and receive transaction rows drawn
// from a pool. Paths and cycles carry time-ordered rows so money flows forward
// (a cycle has exactly one wrap-around edge that breaks the order) and all
// edges of one path or cycle share a single amount.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/error.hpp"
#include "linemvgnn/graph.hpp"

namespace lmv {

/// One transaction attribute row: timestamp, amount and further numeric
/// attributes (categoricals one-hot encoded).
struct TransactionRow {
  double timestamp = 0.0;
  double amount = 0.0;
  std::vector<double> attributes;
};

struct TransactionPool {
  std::vector<std::string> attribute_names;
  std::vector<TransactionRow> rows;

  std::size_t feature_dim() const { return 2 + attribute_names.size(); }

  /// Edge feature layout: [timestamp, amount, attributes...].
  void write_features(const TransactionRow& r, std::span<double> out) const {
    out[0] = r.timestamp;
    out[1] = r.amount;
    std::copy(r.attributes.begin(), r.attributes.end(), out.begin() + 2);
  }
};

/// Pool of `n` rows: timestamp uniform over one day (as a fraction in [0,1)),
/// log-amount normal, and `categorical` one-hot columns of `levels` levels.
inline TransactionPool synthetic_pool(std::size_t n, std::uint64_t seed, std::size_t categorical = 2,
                                      std::size_t levels = 3) {
  TransactionPool pool;
  for (std::size_t c = 0; c < categorical; ++c)
    for (std::size_t k = 0; k < levels; ++k)
      pool.attribute_names.push_back("cat" + std::to_string(c) + "_" + std::to_string(k));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> day(0.0, 1.0);
  std::normal_distribution<double> log_amount(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> level(0, levels - 1);
  pool.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TransactionRow r;
    r.timestamp = day(rng);
    r.amount = std::exp(log_amount(rng));
    r.attributes.assign(categorical * levels, 0.0);
    for (std::size_t c = 0; c < categorical; ++c) r.attributes[c * levels + level(rng)] = 1.0;
    pool.rows.push_back(std::move(r));
  }
  return pool;
}

enum class PatternKind { path = 0, cycle, clique, multipartite };

inline const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::path: return "path";
    case PatternKind::cycle: return "cycle";
    case PatternKind::clique: return "clique";
    case PatternKind::multipartite: return "multipartite";
  }
  return "?";
}

struct SizeRange {
  std::size_t min;
  std::size_t max;
};

struct InjectionConfig {
  double target_illicit_fraction = 1.0 / 3.0;
  std::array<double, 4> pattern_weights{1.0, 1.0, 1.0, 1.0};  // path, cycle, clique, multipartite
  SizeRange path_size{10, 20};
  SizeRange cycle_size{10, 20};
  SizeRange clique_size{5, 10};
  std::array<std::size_t, 3> multipartite_layers{5, 3, 1};
  /// Benign edges linking each pattern to random background accounts.
  std::size_t attachment_edges = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (target_illicit_fraction < 0.0 || target_illicit_fraction >= 1.0)
      throw argument_error("target_illicit_fraction must lie in [0, 1)");
    for (const SizeRange& r : {path_size, cycle_size, clique_size})
      if (r.min > r.max || r.min < 2) throw argument_error("pattern size range invalid");
    if (std::accumulate(pattern_weights.begin(), pattern_weights.end(), 0.0) <= 0.0)
      throw argument_error("pattern weights must not all be zero");
    for (double w : pattern_weights)
      if (w < 0.0) throw argument_error("pattern weights must be non-negative");
    for (std::size_t s : multipartite_layers)
      if (s == 0) throw argument_error("multipartite layers must be non-empty");
  }
};

/// Pattern on local node ids 0..num_nodes-1.
struct PatternShape {
  PatternKind kind;
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<std::size_t> layer_sizes;  // multipartite only
};

/// Path: chain 0->1->...->n-1. Cycle: the chain plus the wrap edge n-1->0,
/// listed last. Clique: every ordered pair. Multipartite: complete between
/// consecutive layers, layer by layer.
inline PatternShape generate_pattern(PatternKind kind, std::mt19937_64& rng, const InjectionConfig& cfg = {}) {
  auto draw = [&](SizeRange r) { return std::uniform_int_distribution<std::size_t>(r.min, r.max)(rng); };
  PatternShape s{kind, 0, {}, {}};
  switch (kind) {
    case PatternKind::path:
    case PatternKind::cycle: {
      s.num_nodes = draw(kind == PatternKind::path ? cfg.path_size : cfg.cycle_size);
      for (std::size_t i = 0; i + 1 < s.num_nodes; ++i) s.edges.push_back({i, i + 1});
      if (kind == PatternKind::cycle) s.edges.push_back({s.num_nodes - 1, 0});
      break;
    }
    case PatternKind::clique: {
      s.num_nodes = draw(cfg.clique_size);
      for (std::size_t i = 0; i < s.num_nodes; ++i)
        for (std::size_t j = 0; j < s.num_nodes; ++j)
          if (i != j) s.edges.push_back({i, j});
      break;
    }
    case PatternKind::multipartite: {
      s.layer_sizes.assign(cfg.multipartite_layers.begin(), cfg.multipartite_layers.end());
      std::size_t offset = 0;
      for (std::size_t l = 0; l + 1 < s.layer_sizes.size(); ++l) {
        const std::size_t next = offset + s.layer_sizes[l];
        for (std::size_t i = 0; i < s.layer_sizes[l]; ++i)
          for (std::size_t j = 0; j < s.layer_sizes[l + 1]; ++j) s.edges.push_back({offset + i, next + j});
        offset = next;
      }
      s.num_nodes = offset + s.layer_sizes.back();
      break;
    }
  }
  return s;
}

struct AttributedPattern {
  PatternShape shape;
  std::vector<std::size_t> pool_rows;  // per edge
  std::vector<TransactionRow> rows;    // per edge, after amount sharing
};

/// Draws one distinct pool row per edge and assigns them. Paths, cycles and
/// multipartite patterns get rows sorted by timestamp in edge order (ties by
/// pool order); cliques keep the draw order. Paths and cycles then take the
/// amount of one randomly chosen selected row on every edge.
inline AttributedPattern assign_transactions(PatternShape shape, const TransactionPool& pool, std::mt19937_64& rng) {
  const std::size_t e = shape.edges.size();
  if (pool.rows.size() < e)
    throw data_error("assign_transactions: pool has " + std::to_string(pool.rows.size()) + " rows, pattern needs " +
                     std::to_string(e));
  // Partial Fisher-Yates: the first e slots are a uniform draw in random order.
  std::vector<std::size_t> picked(pool.rows.size());
  std::iota(picked.begin(), picked.end(), std::size_t{0});
  for (std::size_t i = 0; i < e; ++i)
    std::swap(picked[i], picked[std::uniform_int_distribution<std::size_t>(i, picked.size() - 1)(rng)]);
  picked.resize(e);

  if (shape.kind != PatternKind::clique)
    std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
      const double ta = pool.rows[a].timestamp, tb = pool.rows[b].timestamp;
      return ta < tb || (ta == tb && a < b);
    });

  AttributedPattern ap{std::move(shape), picked, {}};
  for (std::size_t r : picked) ap.rows.push_back(pool.rows[r]);
  if (e > 0 && (ap.shape.kind == PatternKind::path || ap.shape.kind == PatternKind::cycle)) {
    const double amount = ap.rows[std::uniform_int_distribution<std::size_t>(0, e - 1)(rng)].amount;
    for (auto& r : ap.rows) r.amount = amount;
  }
  return ap;
}

struct InjectedPattern {
  PatternKind kind;
  std::vector<NodeId> nodes;
  std::vector<EdgeId> edges;
  std::vector<std::size_t> pool_rows;
  std::vector<EdgeId> attachment_edges;
};

struct InjectionResult {
  TransactionGraph graph;
  std::vector<InjectedPattern> patterns;
};

inline std::size_t count_illicit(const TransactionGraph& g) {
  return std::size_t(std::count(g.labels().begin(), g.labels().end(), Label::illicit));
}

/// Adds patterns on new illicit accounts until the illicit share of all nodes
/// reaches the target. Existing nodes, edges and labels are kept as they are;
/// new node feature rows are zero.
inline InjectionResult inject(const TransactionGraph& g, const TransactionPool& pool, const InjectionConfig& cfg) {
  cfg.validate();
  if (g.num_nodes() == 0) throw argument_error("inject: background graph is empty");
  if (g.edge_features().cols() != pool.feature_dim() && g.num_edges() > 0)
    throw argument_error("inject: pool feature width differs from background edge features");
  InjectionResult res;
  if (cfg.target_illicit_fraction <= 0.0) {
    res.graph = g;
    return res;
  }

  std::mt19937_64 rng(cfg.seed);
  const std::size_t d_edge = pool.feature_dim();
  std::size_t num_nodes = g.num_nodes();
  std::vector<Edge> edges = g.edges();
  std::vector<double> edge_feat = g.edge_features().values();
  std::vector<Label> labels = g.labels();
  std::size_t illicit = count_illicit(g);
  std::discrete_distribution<int> pick_kind(cfg.pattern_weights.begin(), cfg.pattern_weights.end());
  std::uniform_int_distribution<std::size_t> pick_background(0, g.num_nodes() - 1);
  std::uniform_int_distribution<std::size_t> pick_row(0, pool.rows.empty() ? 0 : pool.rows.size() - 1);
  std::vector<double> buf(d_edge);

  auto push_edge = [&](Edge e, const TransactionRow& row) {
    edges.push_back(e);
    pool.write_features(row, buf);
    edge_feat.insert(edge_feat.end(), buf.begin(), buf.end());
    return edges.size() - 1;
  };

  while (double(illicit) < cfg.target_illicit_fraction * double(num_nodes)) {
    const auto kind = PatternKind(pick_kind(rng));
    AttributedPattern ap = assign_transactions(generate_pattern(kind, rng, cfg), pool, rng);
    InjectedPattern ip{kind, {}, {}, ap.pool_rows, {}};
    const NodeId base = num_nodes;
    for (std::size_t i = 0; i < ap.shape.num_nodes; ++i) {
      ip.nodes.push_back(base + i);
      labels.push_back(Label::illicit);
    }
    num_nodes += ap.shape.num_nodes;
    illicit += ap.shape.num_nodes;
    for (std::size_t i = 0; i < ap.shape.edges.size(); ++i) {
      const Edge& le = ap.shape.edges[i];
      ip.edges.push_back(push_edge({base + le.src, base + le.dst}, ap.rows[i]));
    }
    std::uniform_int_distribution<std::size_t> pick_member(0, ap.shape.num_nodes - 1);
    for (std::size_t k = 0; k < cfg.attachment_edges; ++k) {
      const NodeId inside = base + pick_member(rng);
      const NodeId outside = pick_background(rng);
      const bool outgoing = std::bernoulli_distribution(0.5)(rng);
      const Edge e = outgoing ? Edge{inside, outside} : Edge{outside, inside};
      ip.attachment_edges.push_back(push_edge(e, pool.rows[pick_row(rng)]));
    }
    res.patterns.push_back(std::move(ip));
  }

  Matrix node_feat(num_nodes, g.node_features().cols());
  std::copy(g.node_features().values().begin(), g.node_features().values().end(), node_feat.values().begin());
  std::vector<Split> splits = g.splits();
  splits.resize(num_nodes, Split::none);
  const std::size_t m = edges.size();
  res.graph = TransactionGraph(num_nodes, std::move(edges), std::move(node_feat),
                               Matrix(m, d_edge, std::move(edge_feat)), std::move(labels), std::move(splits));
  return res;
}

struct BackgroundOptions {
  /// Append in/out degree columns as node features.
  bool structural_features = true;
};

/// Seeded random digraph: every node's out-degree is
/// Binomial(n - 1, avg_out_degree / (n - 1)) with payees drawn uniformly
/// among the other nodes; edges carry pool rows drawn with replacement and
/// every node is labeled licit.
inline TransactionGraph random_background(std::size_t n_nodes, double avg_out_degree, const TransactionPool& pool,
                                          std::uint64_t seed, const BackgroundOptions& opt = {}) {
  if (n_nodes < 1) throw argument_error("random_background: need at least one node");
  if (avg_out_degree < 0.0) throw argument_error("random_background: negative degree");
  if (pool.rows.empty() && n_nodes > 1 && avg_out_degree > 0.0)
    throw argument_error("random_background: empty transaction pool");
  std::mt19937_64 rng(seed);
  std::vector<Edge> edges;
  if (n_nodes > 1) {
    const double p = std::min(1.0, avg_out_degree / double(n_nodes - 1));
    std::binomial_distribution<std::size_t> degree(n_nodes - 1, p);
    std::uniform_int_distribution<std::size_t> other(0, n_nodes - 2);
    for (NodeId v = 0; v < n_nodes; ++v) {
      const std::size_t k = degree(rng);
      for (std::size_t i = 0; i < k; ++i) {
        NodeId w = other(rng);
        if (w >= v) ++w;
        edges.push_back({v, w});
      }
    }
  }
  Matrix ef(edges.size(), pool.feature_dim());
  if (!edges.empty()) {
    std::uniform_int_distribution<std::size_t> pick_row(0, pool.rows.size() - 1);
    for (EdgeId e = 0; e < edges.size(); ++e) pool.write_features(pool.rows[pick_row(rng)], ef.row(e));
  }
  TransactionGraph g(n_nodes, std::move(edges), Matrix(n_nodes, 0), std::move(ef),
                     std::vector<Label>(n_nodes, Label::licit));
  return opt.structural_features ? augment_structural_features(g) : g;
}

struct SyntheticBenchmarkConfig {
  std::size_t background_nodes = 5000;
  double avg_out_degree = 2.0;
  std::size_t pool_rows = 20000;
  InjectionConfig injection;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  bool log_scale_degrees = false;
  std::uint64_t seed = 0;
};

struct SyntheticBenchmark {
  TransactionGraph graph;
  std::vector<InjectedPattern> patterns;
};

/// Background -> injection -> structural node features -> random split, all
/// derived from one seed.
inline SyntheticBenchmark make_synthetic_benchmark(const SyntheticBenchmarkConfig& cfg) {
  const TransactionPool pool = synthetic_pool(cfg.pool_rows, cfg.seed * 4 + 1);
  const TransactionGraph background =
      random_background(cfg.background_nodes, cfg.avg_out_degree, pool, cfg.seed * 4 + 2, {false});
  InjectionConfig icfg = cfg.injection;
  icfg.seed = cfg.seed * 4 + 3;
  InjectionResult ir = inject(background, pool, icfg);
  TransactionGraph g = augment_structural_features(ir.graph, {cfg.log_scale_degrees});
  g = random_split(g, cfg.split, cfg.seed * 4 + 4);
  return {std::move(g), std::move(ir.patterns)};
}

}  // namespace lmv
