#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "linemvgnn/checks.hpp"
#include "linemvgnn/graph.hpp"

using namespace lmv;

namespace {
enum : NodeId { a = 0, b = 1, c = 2, d = 3 };
}

TEST(Neighbors, InNeighborsListEveryPayer) {
  const auto g = TransactionGraph::from_edges(3, {{a, b}, {c, b}});
  EXPECT_EQ(in_neighbors(g, b), (std::vector<Neighbor>{{a, 0}, {c, 1}}));
  EXPECT_TRUE(in_neighbors(g, a).empty());
}

TEST(Neighbors, ParallelEdgesYieldOneEntryEach) {
  const auto g = TransactionGraph::from_edges(2, {{a, b}, {a, b}});
  EXPECT_EQ(in_neighbors(g, b), (std::vector<Neighbor>{{a, 0}, {a, 1}}));
}

TEST(Neighbors, OutNeighborsListEveryPayee) {
  const auto g = TransactionGraph::from_edges(3, {{a, b}, {a, c}});
  EXPECT_EQ(out_neighbors(g, a), (std::vector<Neighbor>{{b, 0}, {c, 1}}));
  EXPECT_TRUE(out_neighbors(g, b).empty());
}

TEST(Neighbors, SelfLoopAppearsInBothDirections) {
  const auto g = TransactionGraph::from_edges(1, {{a, a}});
  EXPECT_EQ(in_neighbors(g, a), (std::vector<Neighbor>{{a, 0}}));
  EXPECT_EQ(out_neighbors(g, a), (std::vector<Neighbor>{{a, 0}}));
}

TEST(Neighbors, OutOfRangeNodeIsAnArgumentError) {
  const auto g = TransactionGraph::from_edges(2, {{a, b}});
  EXPECT_THROW(in_neighbors(g, 2), argument_error);
  EXPECT_THROW(out_neighbors(g, 7), argument_error);
  EXPECT_THROW(g.edge(1), argument_error);
}

TEST(Construction, InvariantsAreEnforced) {
  EXPECT_THROW(TransactionGraph::from_edges(2, {{0, 2}}), argument_error);
  EXPECT_THROW(TransactionGraph(2, {{0, 1}}, Matrix(3, 1), Matrix(1, 0)), argument_error);
  EXPECT_THROW(TransactionGraph(2, {{0, 1}}, Matrix(2, 1), Matrix(2, 1)), argument_error);
  EXPECT_THROW(TransactionGraph(2, {}, Matrix(2, 0), Matrix(0, 0), {Label::licit}), argument_error);
  // A split mask on an unlabeled node.
  EXPECT_THROW(TransactionGraph(2, {}, Matrix(2, 0), Matrix(0, 0), {Label::licit, Label::unlabeled},
                                {Split::train, Split::val}),
               argument_error);
}

TEST(Construction, IndicesPartitionTheEdgeSetOnRandomGraphs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const TransactionGraph g = random_attributed_graph(rng);
    std::size_t in_total = 0, out_total = 0, touched = 0;
    std::vector<int> seen(g.num_edges(), 0);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      in_total += g.in_degree(v);
      out_total += g.out_degree(v);
      EXPECT_TRUE(std::is_sorted(g.in_edges(v).begin(), g.in_edges(v).end()));
      for (const Neighbor& n : in_neighbors(g, v)) {
        ++seen[n.edge];
        ++touched;
        const auto back = out_neighbors(g, n.node);
        EXPECT_NE(std::find(back.begin(), back.end(), Neighbor{v, n.edge}), back.end());
      }
      for (const Neighbor& n : out_neighbors(g, v)) {
        ++seen[n.edge];
        ++touched;
      }
    }
    EXPECT_EQ(in_total, g.num_edges());
    EXPECT_EQ(out_total, g.num_edges());
    EXPECT_EQ(touched, 2 * g.num_edges());
    for (int s : seen) EXPECT_EQ(s, 2);
  }
}

TEST(StructuralFeatures, AppendsInAndOutDegree) {
  // b: in from a, c, d; out to a, c.
  const auto g = TransactionGraph::from_edges(5, {{a, b}, {c, b}, {d, b}, {b, a}, {b, c}});
  const auto s = augment_structural_features(g);
  EXPECT_EQ(s.node_features().cols(), 2u);
  EXPECT_EQ(s.node_features()(b, 0), 3.0);
  EXPECT_EQ(s.node_features()(b, 1), 2.0);
  EXPECT_EQ(s.node_features()(4, 0), 0.0);
  EXPECT_EQ(s.node_features()(4, 1), 0.0);
}

TEST(StructuralFeatures, SelfLoopCountsOnceEachWay) {
  const auto s = augment_structural_features(TransactionGraph::from_edges(1, {{a, a}}));
  EXPECT_EQ(s.node_features(), Matrix::from_rows({{1.0, 1.0}}));
}

TEST(StructuralFeatures, AppendsAfterExistingColumnsEveryCall) {
  const TransactionGraph g(2, {{0, 1}}, Matrix::from_rows({{7.0}, {8.0}}), Matrix(1, 0));
  const auto twice = augment_structural_features(augment_structural_features(g));
  EXPECT_EQ(twice.node_features(), Matrix::from_rows({{7, 0, 1, 0, 1}, {8, 1, 0, 1, 0}}));
  const auto logged = augment_structural_features(g, {true});
  EXPECT_DOUBLE_EQ(logged.node_features()(1, 1), std::log(2.0));
}

TEST(Split, SizesFollowTheRoundingRule) {
  EXPECT_EQ(split_sizes(10, {0.6, 0.2, 0.2}), (SplitSizes{6, 2, 2}));
  EXPECT_EQ(split_sizes(5, {0.6, 0.2, 0.2}), (SplitSizes{3, 1, 1}));
  EXPECT_EQ(split_sizes(31, {0.6, 0.2, 0.2}), (SplitSizes{19, 6, 6}));
  EXPECT_EQ(split_sizes(1, {0.6, 0.2, 0.2}), (SplitSizes{1, 0, 0}));
  EXPECT_THROW(split_sizes(10, {0.6, 0.2, 0.3}), argument_error);
  EXPECT_THROW(split_sizes(10, {1.2, -0.2, 0.0}), argument_error);
  for (std::size_t n = 1; n < 500; ++n) {
    const SplitSizes s = split_sizes(n, {0.6, 0.2, 0.2});
    EXPECT_EQ(s.train + s.val + s.test, n);
    EXPECT_LE(std::abs(double(s.train) - 0.6 * n), 1.0);
    EXPECT_LE(std::abs(double(s.val) - 0.2 * n), 1.0);
    EXPECT_LE(std::abs(double(s.test) - 0.2 * n), 1.0);
  }
}

TEST(Split, RandomSplitPartitionsLabeledNodesDeterministically) {
  std::vector<Label> labels(14, Label::licit);
  labels[3] = labels[4] = Label::unlabeled;
  labels[0] = labels[9] = Label::illicit;
  const TransactionGraph g(14, {}, Matrix(14, 0), Matrix(0, 0), labels);
  const auto s1 = random_split(g, {0.6, 0.2, 0.2}, 42);
  const auto s2 = random_split(g, {0.6, 0.2, 0.2}, 42);
  EXPECT_EQ(s1.splits(), s2.splits());
  EXPECT_EQ(s1.count_split(Split::train), 8u);  // 12 labeled
  EXPECT_EQ(s1.count_split(Split::val), 2u);
  EXPECT_EQ(s1.count_split(Split::test), 2u);
  EXPECT_EQ(s1.splits()[3], Split::none);
  EXPECT_EQ(s1.splits()[4], Split::none);
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 10 && !differs; ++seed)
    differs = random_split(g, {0.6, 0.2, 0.2}, seed).splits() != s1.splits();
  EXPECT_TRUE(differs);
}

TEST(Split, NoLabeledNodesIsADataError) {
  EXPECT_THROW(random_split(TransactionGraph::from_edges(3, {}), {0.6, 0.2, 0.2}, 0), data_error);
}
