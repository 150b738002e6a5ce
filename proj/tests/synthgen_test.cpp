#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "linemvgnn/synthgen.hpp"

using namespace lmv;

namespace {

std::size_t descents_around_cycle(const std::vector<TransactionRow>& rows) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[(i + 1) % rows.size()].timestamp < rows[i].timestamp) ++d;
  return d;
}

// Upper 1% points of the chi-square distribution.
double chi2_critical_01(std::size_t dof) {
  static const std::map<std::size_t, double> table{{5, 15.086}, {10, 23.209}};
  return table.at(dof);
}

double chi_square_uniform(const std::vector<std::size_t>& counts) {
  const double n = double(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  const double expected = n / double(counts.size());
  double x = 0.0;
  for (std::size_t c : counts) x += (double(c) - expected) * (double(c) - expected) / expected;
  return x;
}

}  // namespace

TEST(Patterns, ShapesHaveTheStatedEdgeCounts) {
  std::mt19937_64 rng(1);
  InjectionConfig cfg;
  cfg.path_size = {10, 10};
  const PatternShape path = generate_pattern(PatternKind::path, rng, cfg);
  EXPECT_EQ(path.num_nodes, 10u);
  EXPECT_EQ(path.edges.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(path.edges[i], (Edge{i, i + 1}));

  const PatternShape mp = generate_pattern(PatternKind::multipartite, rng);
  EXPECT_EQ(mp.num_nodes, 9u);
  EXPECT_EQ(mp.edges.size(), 18u);
  EXPECT_EQ(mp.layer_sizes, (std::vector<std::size_t>{5, 3, 1}));

  for (int i = 0; i < 200; ++i) {
    const PatternShape c = generate_pattern(PatternKind::cycle, rng);
    EXPECT_EQ(c.edges.size(), c.num_nodes);
    EXPECT_EQ(c.edges.back(), (Edge{c.num_nodes - 1, 0}));
    const PatternShape k = generate_pattern(PatternKind::clique, rng);
    EXPECT_EQ(k.edges.size(), k.num_nodes * (k.num_nodes - 1));
    std::set<std::pair<NodeId, NodeId>> pairs;
    for (const Edge& e : k.edges) {
      EXPECT_NE(e.src, e.dst);
      pairs.insert({e.src, e.dst});
    }
    EXPECT_EQ(pairs.size(), k.edges.size());
  }
}

TEST(Patterns, SizesAreUniformOverTheirRanges) {
  std::mt19937_64 rng(2024);
  const std::size_t draws = 10000;
  for (PatternKind kind : {PatternKind::path, PatternKind::cycle, PatternKind::clique}) {
    const SizeRange r = kind == PatternKind::clique ? SizeRange{5, 10} : SizeRange{10, 20};
    std::vector<std::size_t> counts(r.max - r.min + 1, 0);
    for (std::size_t i = 0; i < draws; ++i) {
      const std::size_t n = generate_pattern(kind, rng).num_nodes;
      ASSERT_GE(n, r.min);
      ASSERT_LE(n, r.max);
      ++counts[n - r.min];
    }
    for (std::size_t c : counts) EXPECT_GT(c, 0u);
    EXPECT_LT(chi_square_uniform(counts), chi2_critical_01(counts.size() - 1)) << to_string(kind);
  }
}

TEST(Transactions, PathTimestampsIncreaseAndShareOneAmount) {
  const TransactionPool pool = synthetic_pool(500, 3);
  std::mt19937_64 rng(4);
  InjectionConfig cfg;
  cfg.path_size = {10, 10};
  for (int trial = 0; trial < 50; ++trial) {
    const AttributedPattern ap = assign_transactions(generate_pattern(PatternKind::path, rng, cfg), pool, rng);
    ASSERT_EQ(ap.rows.size(), 9u);
    for (std::size_t i = 0; i + 1 < 9; ++i) EXPECT_LT(ap.rows[i].timestamp, ap.rows[i + 1].timestamp);
    std::set<double> amounts;
    for (const auto& r : ap.rows) amounts.insert(r.amount);
    ASSERT_EQ(amounts.size(), 1u);
    bool from_selected = false;
    for (std::size_t row : ap.pool_rows) from_selected |= pool.rows[row].amount == *amounts.begin();
    EXPECT_TRUE(from_selected);
    EXPECT_EQ(std::set<std::size_t>(ap.pool_rows.begin(), ap.pool_rows.end()).size(), 9u);
  }
}

TEST(Transactions, EveryCycleHasExactlyOneDescent) {
  const TransactionPool pool = synthetic_pool(500, 5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const AttributedPattern ap = assign_transactions(generate_pattern(PatternKind::cycle, rng), pool, rng);
    EXPECT_EQ(descents_around_cycle(ap.rows), 1u);
    // The descent sits on the wrap-around pair.
    EXPECT_GT(ap.rows.back().timestamp, ap.rows.front().timestamp);
  }
}

TEST(Transactions, MultipartiteLayersAreChronological) {
  const TransactionPool pool = synthetic_pool(200, 7);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const AttributedPattern ap = assign_transactions(generate_pattern(PatternKind::multipartite, rng), pool, rng);
    double first_max = 0.0, second_min = 1e9;
    for (std::size_t i = 0; i < ap.shape.edges.size(); ++i) {
      const bool first_layer = ap.shape.edges[i].src < 5;
      if (first_layer) first_max = std::max(first_max, ap.rows[i].timestamp);
      else second_min = std::min(second_min, ap.rows[i].timestamp);
    }
    EXPECT_LT(first_max, second_min);
  }
}

TEST(Transactions, CliquesKeepDrawOrderAndOwnAmounts) {
  const TransactionPool pool = synthetic_pool(300, 9);
  std::mt19937_64 rng(10);
  bool unsorted = false, mixed_amounts = false;
  for (int trial = 0; trial < 20; ++trial) {
    const AttributedPattern ap = assign_transactions(generate_pattern(PatternKind::clique, rng), pool, rng);
    for (std::size_t i = 0; i < ap.rows.size(); ++i) EXPECT_EQ(ap.rows[i].amount, pool.rows[ap.pool_rows[i]].amount);
    unsorted |= !std::is_sorted(ap.rows.begin(), ap.rows.end(),
                                [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    mixed_amounts |= ap.rows.front().amount != ap.rows.back().amount;
  }
  EXPECT_TRUE(unsorted);
  EXPECT_TRUE(mixed_amounts);
}

TEST(Transactions, SmallPoolIsADataError) {
  const TransactionPool pool = synthetic_pool(5, 11);
  std::mt19937_64 rng(12);
  InjectionConfig cfg;
  cfg.path_size = {10, 10};
  EXPECT_THROW(assign_transactions(generate_pattern(PatternKind::path, rng, cfg), pool, rng), data_error);
}

TEST(Injection, FractionOvershootIsBounded) {
  const TransactionPool pool = synthetic_pool(5000, 13);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TransactionGraph bg = random_background(1000, 2.0, pool, seed);
    InjectionConfig cfg;
    cfg.seed = seed;
    const InjectionResult r = inject(bg, pool, cfg);
    const double frac = double(count_illicit(r.graph)) / double(r.graph.num_nodes());
    EXPECT_GE(frac, 1.0 / 3.0);
    EXPECT_LE(frac, 1.0 / 3.0 + 20.0 / 1333.0);
  }
}

TEST(Injection, ZeroFractionLeavesGraphUnchanged) {
  const TransactionPool pool = synthetic_pool(100, 14);
  const TransactionGraph bg = random_background(50, 2.0, pool, 15);
  InjectionConfig cfg;
  cfg.target_illicit_fraction = 0.0;
  const InjectionResult r = inject(bg, pool, cfg);
  EXPECT_TRUE(r.patterns.empty());
  EXPECT_EQ(r.graph.edges(), bg.edges());
  EXPECT_EQ(r.graph.labels(), bg.labels());
  EXPECT_EQ(r.graph.node_features(), bg.node_features());
  EXPECT_EQ(r.graph.edge_features(), bg.edge_features());
}

TEST(Injection, LabelsAreSoundAndBackgroundIsUntouched) {
  const TransactionPool pool = synthetic_pool(2000, 16);
  const TransactionGraph bg = random_background(300, 2.0, pool, 17);
  InjectionConfig cfg;
  cfg.seed = 18;
  cfg.attachment_edges = 2;
  const InjectionResult r = inject(bg, pool, cfg);
  const TransactionGraph& g = r.graph;

  std::set<NodeId> members;
  std::set<EdgeId> pattern_edges;
  for (const InjectedPattern& p : r.patterns) {
    members.insert(p.nodes.begin(), p.nodes.end());
    EXPECT_EQ(p.attachment_edges.size(), 2u);
    EXPECT_EQ(p.pool_rows.size(), p.edges.size());
    for (EdgeId e : p.edges) {
      pattern_edges.insert(e);
      EXPECT_TRUE(std::count(p.nodes.begin(), p.nodes.end(), g.edge(e).src));
      EXPECT_TRUE(std::count(p.nodes.begin(), p.nodes.end(), g.edge(e).dst));
    }
    for (EdgeId e : p.attachment_edges) {
      const Edge ed = g.edge(e);
      EXPECT_NE(ed.src < bg.num_nodes(), ed.dst < bg.num_nodes());
    }
    std::size_t expected = 0;
    switch (p.kind) {
      case PatternKind::path: expected = p.nodes.size() - 1; break;
      case PatternKind::cycle: expected = p.nodes.size(); break;
      case PatternKind::clique: expected = p.nodes.size() * (p.nodes.size() - 1); break;
      case PatternKind::multipartite: expected = 18; break;
    }
    EXPECT_EQ(p.edges.size(), expected);
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    EXPECT_EQ(g.labels()[v] == Label::illicit, members.count(v) == 1) << v;
  for (NodeId v : members) EXPECT_GE(v, bg.num_nodes());

  for (EdgeId e = 0; e < bg.num_edges(); ++e) {
    EXPECT_EQ(g.edge(e), bg.edge(e));
    EXPECT_EQ(std::vector<double>(g.edge_features().row(e).begin(), g.edge_features().row(e).end()),
              std::vector<double>(bg.edge_features().row(e).begin(), bg.edge_features().row(e).end()));
  }
  for (NodeId v = 0; v < bg.num_nodes(); ++v) EXPECT_EQ(g.labels()[v], bg.labels()[v]);
  EXPECT_EQ(g.node_features().cols(), bg.node_features().cols());
}

TEST(Injection, IsDeterministicPerSeed) {
  const TransactionPool pool = synthetic_pool(1000, 19);
  const TransactionGraph bg = random_background(200, 2.0, pool, 20);
  InjectionConfig cfg;
  cfg.seed = 21;
  const InjectionResult a = inject(bg, pool, cfg), b = inject(bg, pool, cfg);
  EXPECT_EQ(a.graph.edges(), b.graph.edges());
  EXPECT_EQ(a.graph.edge_features(), b.graph.edge_features());
  cfg.seed = 22;
  EXPECT_NE(inject(bg, pool, cfg).graph.edges(), a.graph.edges());
}

TEST(Injection, PatternWeightsSelectKinds) {
  const TransactionPool pool = synthetic_pool(1000, 23);
  const TransactionGraph bg = random_background(200, 2.0, pool, 24);
  InjectionConfig cfg;
  cfg.pattern_weights = {0.0, 1.0, 0.0, 0.0};
  for (const auto& p : inject(bg, pool, cfg).patterns) EXPECT_EQ(p.kind, PatternKind::cycle);
  cfg.pattern_weights = {0.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(inject(bg, pool, cfg), argument_error);
}

TEST(Background, EdgeCountConcentrates) {
  const TransactionPool pool = synthetic_pool(100, 25);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TransactionGraph g = random_background(100, 2.0, pool, seed);
    EXPECT_GE(g.num_edges(), 150u);
    EXPECT_LE(g.num_edges(), 250u);
    for (const Edge& e : g.edges()) EXPECT_NE(e.src, e.dst);
    for (Label l : g.labels()) EXPECT_EQ(l, Label::licit);
  }
}

TEST(Background, DeterministicWithDegreeFeatures) {
  const TransactionPool pool = synthetic_pool(100, 26);
  const TransactionGraph a = random_background(80, 2.0, pool, 27), b = random_background(80, 2.0, pool, 27);
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.edge_features(), b.edge_features());
  ASSERT_EQ(a.node_features().cols(), 2u);
  for (NodeId v = 0; v < a.num_nodes(); ++v) {
    EXPECT_EQ(a.node_features()(v, 0), double(a.in_degree(v)));
    EXPECT_EQ(a.node_features()(v, 1), double(a.out_degree(v)));
  }
  EXPECT_EQ(random_background(80, 2.0, pool, 27, {false}).node_features().cols(), 0u);
  EXPECT_EQ(random_background(1, 2.0, pool, 0).num_edges(), 0u);
}

TEST(Benchmark, PipelineIsSeededEndToEnd) {
  SyntheticBenchmarkConfig cfg;
  cfg.background_nodes = 300;
  cfg.seed = 5;
  const SyntheticBenchmark a = make_synthetic_benchmark(cfg), b = make_synthetic_benchmark(cfg);
  EXPECT_EQ(a.graph.edges(), b.graph.edges());
  EXPECT_EQ(a.graph.splits(), b.graph.splits());
  EXPECT_EQ(a.graph.node_features(), b.graph.node_features());
  EXPECT_EQ(a.graph.node_features().cols(), 2u);
  EXPECT_EQ(a.graph.edge_features().cols(), 8u);
  const std::size_t labeled = a.graph.num_nodes();
  EXPECT_EQ(a.graph.count_split(Split::train) + a.graph.count_split(Split::val) + a.graph.count_split(Split::test),
            labeled);
  // Degrees include the injected and attachment edges.
  for (NodeId v = 0; v < a.graph.num_nodes(); ++v)
    EXPECT_EQ(a.graph.node_features()(v, 0), double(a.graph.in_degree(v)));
}
