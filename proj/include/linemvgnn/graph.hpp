#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/error.hpp"

namespace lmv {

using NodeId = std::size_t;
using EdgeId = std::size_t;

enum class Label : std::int8_t { licit = 0, illicit = 1, unlabeled = -1 };
enum class Split : std::uint8_t { none = 0, train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

/// Payer -> payee.
struct Edge {
  NodeId src;
  NodeId dst;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  NodeId node;
  EdgeId edge;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Immutable directed attributed multigraph of accounts and transactions.
///
/// Parallel edges and self-loops are allowed. In- and out-incidence are kept
/// as CSR arrays sorted by edge id, built once at construction.
class TransactionGraph {
 public:
  TransactionGraph() = default;

  TransactionGraph(std::size_t num_nodes, std::vector<Edge> edges, Matrix node_features, Matrix edge_features,
                   std::vector<Label> labels = {}, std::vector<Split> splits = {})
      : num_nodes_(num_nodes),
        edges_(std::move(edges)),
        node_features_(std::move(node_features)),
        edge_features_(std::move(edge_features)),
        labels_(std::move(labels)),
        splits_(std::move(splits)) {
    if (labels_.empty()) labels_.assign(num_nodes_, Label::unlabeled);
    if (splits_.empty()) splits_.assign(num_nodes_, Split::none);
    if (node_features_.rows() == 0 && node_features_.cols() == 0) node_features_ = Matrix(num_nodes_, 0);
    if (edge_features_.rows() == 0 && edge_features_.cols() == 0) edge_features_ = Matrix(edges_.size(), 0);
    validate();
    build_index();
  }

  /// Graph with no features and no labels.
  static TransactionGraph from_edges(std::size_t num_nodes, std::vector<Edge> edges) {
    const std::size_t m = edges.size();
    return TransactionGraph(num_nodes, std::move(edges), Matrix(num_nodes, 0), Matrix(m, 0));
  }

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const {
    check_edge(e);
    return edges_[e];
  }
  const Matrix& node_features() const { return node_features_; }
  const Matrix& edge_features() const { return edge_features_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<Split>& splits() const { return splits_; }

  /// Incoming edge ids of v, ascending.
  std::span<const EdgeId> in_edges(NodeId v) const {
    check_node(v);
    return {in_edges_.data() + in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]};
  }
  std::span<const EdgeId> out_edges(NodeId v) const {
    check_node(v);
    return {out_edges_.data() + out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]};
  }
  std::size_t in_degree(NodeId v) const { return in_edges(v).size(); }
  std::size_t out_degree(NodeId v) const { return out_edges(v).size(); }

  // Derived graphs; the receiver is left untouched.
  TransactionGraph with_node_features(Matrix f) const {
    return {num_nodes_, edges_, std::move(f), edge_features_, labels_, splits_};
  }
  TransactionGraph with_edge_features(Matrix f) const {
    return {num_nodes_, edges_, node_features_, std::move(f), labels_, splits_};
  }
  TransactionGraph with_labels(std::vector<Label> labels) const {
    return {num_nodes_, edges_, node_features_, edge_features_, std::move(labels), splits_};
  }
  TransactionGraph with_splits(std::vector<Split> splits) const {
    return {num_nodes_, edges_, node_features_, edge_features_, labels_, std::move(splits)};
  }

  std::size_t count_split(Split s) const { return std::size_t(std::count(splits_.begin(), splits_.end(), s)); }

  void check_node(NodeId v) const {
    if (v >= num_nodes_) throw argument_error("node id " + std::to_string(v) + " out of range");
  }
  void check_edge(EdgeId e) const {
    if (e >= edges_.size()) throw argument_error("edge id " + std::to_string(e) + " out of range");
  }

 private:
  void validate() const {
    for (const Edge& e : edges_)
      if (e.src >= num_nodes_ || e.dst >= num_nodes_) throw argument_error("edge endpoint out of range");
    if (node_features_.rows() != num_nodes_) throw argument_error("node feature rows must equal node count");
    if (edge_features_.rows() != edges_.size()) throw argument_error("edge feature rows must equal edge count");
    if (labels_.size() != num_nodes_ || splits_.size() != num_nodes_)
      throw argument_error("labels and splits need one entry per node");
    for (std::size_t v = 0; v < num_nodes_; ++v)
      if (splits_[v] != Split::none && labels_[v] == Label::unlabeled)
        throw argument_error("split mask set on unlabeled node " + std::to_string(v));
  }

  void build_index() {
    in_offsets_.assign(num_nodes_ + 1, 0);
    out_offsets_.assign(num_nodes_ + 1, 0);
    for (const Edge& e : edges_) {
      ++in_offsets_[e.dst + 1];
      ++out_offsets_[e.src + 1];
    }
    std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
    std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
    in_edges_.resize(edges_.size());
    out_edges_.resize(edges_.size());
    std::vector<std::size_t> in_fill(in_offsets_.begin(), in_offsets_.end() - 1);
    std::vector<std::size_t> out_fill(out_offsets_.begin(), out_offsets_.end() - 1);
    // Increasing edge id order keeps every bucket sorted.
    for (EdgeId id = 0; id < edges_.size(); ++id) {
      in_edges_[in_fill[edges_[id].dst]++] = id;
      out_edges_[out_fill[edges_[id].src]++] = id;
    }
  }

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  Matrix node_features_;
  Matrix edge_features_;
  std::vector<Label> labels_;
  std::vector<Split> splits_;
  std::vector<std::size_t> in_offsets_{0}, out_offsets_{0};
  std::vector<EdgeId> in_edges_, out_edges_;
};

/// (payer, edge) for every edge arriving at v, ascending edge id.
inline std::vector<Neighbor> in_neighbors(const TransactionGraph& g, NodeId v) {
  std::vector<Neighbor> out;
  for (EdgeId e : g.in_edges(v)) out.push_back({g.edges()[e].src, e});
  return out;
}

/// (payee, edge) for every edge leaving v, ascending edge id.
inline std::vector<Neighbor> out_neighbors(const TransactionGraph& g, NodeId v) {
  std::vector<Neighbor> out;
  for (EdgeId e : g.out_edges(v)) out.push_back({g.edges()[e].dst, e});
  return out;
}

struct StructuralFeatureOptions {
  /// Append log(1 + degree) instead of the raw count.
  bool log_scale = false;
};

/// Appends [in_degree, out_degree] columns to the node features. Calling it
/// twice appends twice.
inline TransactionGraph augment_structural_features(const TransactionGraph& g,
                                                    const StructuralFeatureOptions& opt = {}) {
  const Matrix& base = g.node_features();
  Matrix f(g.num_nodes(), base.cols() + 2);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (std::size_t c = 0; c < base.cols(); ++c) f(v, c) = base(v, c);
    double in = double(g.in_degree(v)), out = double(g.out_degree(v));
    if (opt.log_scale) {
      in = std::log1p(in);
      out = std::log1p(out);
    }
    f(v, base.cols()) = in;
    f(v, base.cols() + 1) = out;
  }
  return g.with_node_features(std::move(f));
}

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// Train gets ceil(r_train * n), val gets r_val * n rounded to nearest (capped
/// by what is left), test the rest. 10 -> (6,2,2), 5 -> (3,1,1), 31 -> (19,6,6).
inline SplitSizes split_sizes(std::size_t n, std::array<double, 3> ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-12) throw argument_error("split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0.0) throw argument_error("split ratios must be non-negative");
  // Guard against 0.6 * 10 evaluating to 6.000000000000001.
  auto ceil_frac = [](double x) { return std::size_t(std::ceil(x - 1e-9)); };
  SplitSizes s;
  s.train = std::min(n, ceil_frac(ratios[0] * double(n)));
  s.val = std::min(n - s.train, std::size_t(std::floor(ratios[1] * double(n) + 0.5)));
  s.test = n - s.train - s.val;
  return s;
}

/// Seeded permutation of the labeled nodes into train/val/test masks.
inline TransactionGraph random_split(const TransactionGraph& g, std::array<double, 3> ratios, std::uint64_t seed) {
  std::vector<NodeId> labeled;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (g.labels()[v] != Label::unlabeled) labeled.push_back(v);
  if (labeled.empty()) throw data_error("random_split: graph has no labeled nodes");
  const SplitSizes sz = split_sizes(labeled.size(), ratios);
  std::mt19937_64 rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  std::vector<Split> splits(g.num_nodes(), Split::none);
  for (std::size_t i = 0; i < labeled.size(); ++i)
    splits[labeled[i]] = i < sz.train ? Split::train : (i < sz.train + sz.val ? Split::val : Split::test);
  return g.with_splits(std::move(splits));
}

}  // namespace lmv
