#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "linemvgnn/synthgen.hpp"
#include "linemvgnn/train.hpp"

using namespace lmv;

namespace {

/// Two feature blobs of 25 nodes each, edges only inside a blob.
TransactionGraph toy_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  const std::size_t n = 50;
  Matrix nf(n, 2);
  std::vector<Label> labels(n);
  for (NodeId v = 0; v < n; ++v) {
    const bool bad = v >= n / 2;
    labels[v] = bad ? Label::illicit : Label::licit;
    nf(v, 0) = (bad ? 2.0 : -2.0) + noise(rng);
    nf(v, 1) = (bad ? 2.0 : -2.0) + noise(rng);
  }
  std::vector<Edge> edges;
  std::uniform_int_distribution<NodeId> half(0, n / 2 - 1);
  for (NodeId v = 0; v < n; ++v)
    for (int k = 0; k < 2; ++k) {
      const NodeId base = v >= n / 2 ? n / 2 : 0;
      NodeId w = base + half(rng);
      if (w == v) w = base + (w - base + 1) % (n / 2);
      edges.push_back({v, w});
    }
  Matrix ef(edges.size(), 1);
  for (double& x : ef.values()) x = noise(rng);
  const TransactionGraph g(n, std::move(edges), std::move(nf), std::move(ef), std::move(labels));
  return random_split(g, {0.6, 0.2, 0.2}, seed + 100);
}

ModelConfig toy_model(const TransactionGraph& g) {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.hidden_dim = 16;
  cfg.node_dim = g.node_features().cols();
  cfg.edge_dim = g.edge_features().cols();
  return cfg;
}

TrainingConfig short_training(std::size_t epochs) {
  TrainingConfig t;
  t.max_epochs = epochs;
  t.patience = epochs - 1;
  return t;
}

void expect_same_parameters(ModelParameters& a, ModelParameters& b) {
  auto x = a.all(), y = b.all();
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i]->value, y[i]->value) << x[i]->name;
}

}  // namespace

TEST(ClassWeights, InverseSquareRootOfCounts) {
  const auto w = class_weights({100, 25});
  EXPECT_DOUBLE_EQ(w[0], 0.1);
  EXPECT_DOUBLE_EQ(w[1], 0.2);
  const auto e = class_weights({7, 7});
  EXPECT_EQ(e[0], e[1]);
  const auto s = class_weights({1, 4});
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_THROW(class_weights({0, 3}), data_error);
}

TEST(ClassWeights, CountOnlyTrainingNodes) {
  const TransactionGraph g = toy_graph(1);
  std::array<std::size_t, 2> manual{0, 0};
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (g.splits()[v] == Split::train) ++manual[g.labels()[v] == Label::illicit];
  EXPECT_EQ(training_class_counts(std::span(&g, 1)), manual);
  EXPECT_EQ(manual[0] + manual[1], g.count_split(Split::train));
  EXPECT_EQ(resolve_class_weights(std::span(&g, 1), ClassWeighting::none), (std::array<double, 2>{1.0, 1.0}));
}

TEST(Metrics, ConfusionExample) {
  std::vector<int> pred, actual;
  auto add = [&](int p, int a, int k) {
    for (int i = 0; i < k; ++i) {
      pred.push_back(p);
      actual.push_back(a);
    }
  };
  add(1, 1, 8);
  add(1, 0, 2);
  add(0, 1, 2);
  add(0, 0, 5);
  const Metrics m = binary_metrics(pred, actual);
  EXPECT_DOUBLE_EQ(m.precision, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 0.8);
  EXPECT_DOUBLE_EQ(m.f1, 0.8);
  EXPECT_EQ(m.tn, 5u);
}

TEST(Metrics, NoPositivesGivesZeroF1) {
  const std::vector<int> zeros(6, 0);
  const Metrics m = binary_metrics(zeros, zeros);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_THROW(binary_metrics(zeros, std::vector<int>(5, 0)), argument_error);
}

TEST(Metrics, MatchesHandCountOnTwentyNodes) {
  const std::vector<int> pred{1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1};
  const std::vector<int> act{1, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 1};
  // Positions: TP 0,3,6,11,16,19; FP 2,8,12,18; FN 1,7,10,15; TN the other 6.
  const Metrics m = binary_metrics(pred, act);
  EXPECT_EQ(m.tp, 6u);
  EXPECT_EQ(m.fp, 4u);
  EXPECT_EQ(m.fn, 4u);
  EXPECT_EQ(m.tn, 6u);
  EXPECT_DOUBLE_EQ(m.precision, 0.6);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 0.6, 1e-15);
}

TEST(EarlyStopping, PatienceExample) {
  EarlyStopping s(3);
  const std::vector<double> losses{1.0, 0.9, 0.95, 0.96, 0.97};
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < losses.size() && !stopped; ++i) {
    s.observe(i + 1, losses[i]);
    if (s.should_stop()) stopped = i + 1;
  }
  EXPECT_EQ(stopped, 5u);
  EXPECT_EQ(s.best_epoch(), 2u);
  EXPECT_EQ(s.best_loss(), 0.9);
}

TEST(EarlyStopping, EqualLossIsNotAnImprovement) {
  EarlyStopping s(1);
  EXPECT_TRUE(s.observe(1, 0.5));
  EXPECT_FALSE(s.observe(2, 0.5));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(TrainOnce, SeparableToyReachesLowTrainLoss) {
  const TransactionGraph g = toy_graph(3);
  TrainingConfig t = short_training(200);
  const TrainResult r = train_once(g, toy_model(g), t, 0.01);
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& e : r.report.epochs) lowest = std::min(lowest, e.train_loss);
  EXPECT_LT(lowest, 0.05);
  EXPECT_EQ(r.report.status, "ok");
}

TEST(TrainOnce, LossDecreasesOverFirstEpochsOnAverage) {
  std::vector<double> mean(5, 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TransactionGraph g = toy_graph(10 + seed);
    TrainingConfig t = short_training(5);
    t.seed = seed;
    const TrainResult r = train_once(g, toy_model(g), t, 0.001);
    ASSERT_EQ(r.report.epochs.size(), 5u);
    for (std::size_t e = 0; e < 5; ++e) mean[e] += r.report.epochs[e].train_loss / 5.0;
  }
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(mean[e], mean[e - 1]) << "epoch " << e + 1;
}

TEST(TrainOnce, IsDeterministic) {
  const TransactionGraph g = toy_graph(4);
  TrainingConfig t = short_training(30);
  t.seed = 9;
  TrainResult a = train_once(g, toy_model(g), t, 0.01);
  TrainResult b = train_once(g, toy_model(g), t, 0.01);
  ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    EXPECT_EQ(a.report.epochs[i].train_loss, b.report.epochs[i].train_loss);
    EXPECT_EQ(a.report.epochs[i].val_loss, b.report.epochs[i].val_loss);
  }
  EXPECT_EQ(a.report.best_epoch, b.report.best_epoch);
  EXPECT_EQ(a.report.test.f1, b.report.test.f1);
  expect_same_parameters(a.params, b.params);
}

TEST(TrainOnce, TestLabelsNeverReachTheGradient) {
  const TransactionGraph g = toy_graph(5);
  std::vector<Label> flipped = g.labels();
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (g.splits()[v] == Split::test)
      flipped[v] = flipped[v] == Label::illicit ? Label::licit : Label::illicit;
  const TransactionGraph h = g.with_labels(flipped);
  TrainingConfig t = short_training(25);
  TrainResult a = train_once(g, toy_model(g), t, 0.01);
  TrainResult b = train_once(h, toy_model(h), t, 0.01);
  expect_same_parameters(a.params, b.params);
  EXPECT_EQ(a.report.best_val_loss, b.report.best_val_loss);
}

TEST(TrainOnce, ReturnsTheEpochWithMinimalValidationLoss) {
  const TransactionGraph g = toy_graph(6);
  TrainingConfig t;
  t.max_epochs = 120;
  t.patience = 10;
  TrainResult r = train_once(g, toy_model(g), t, 0.1);
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (const auto& e : r.report.epochs)
    if (e.val_loss && *e.val_loss < best) {
      best = *e.val_loss;
      arg = e.epoch;
    }
  EXPECT_EQ(r.report.best_epoch, arg);
  EXPECT_EQ(r.report.best_val_loss, best);
  // The returned parameters reproduce the recorded validation metrics.
  const Metrics v = evaluate(g, r.params, toy_model(g), Split::val);
  EXPECT_EQ(v.f1, r.report.val.f1);
  EXPECT_EQ(v.tp, r.report.val.tp);
}

TEST(TrainOnce, StopsEarlyWithPatience) {
  const TransactionGraph g = toy_graph(7);
  TrainingConfig t;
  t.max_epochs = 400;
  t.patience = 5;
  const TrainResult r = train_once(g, toy_model(g), t, 0.1);
  ASSERT_LT(r.report.epochs.size(), 400u);
  EXPECT_EQ(r.report.epochs.size() - r.report.best_epoch, 5u);
}

TEST(TrainOnce, NonFiniteLossAbortsWithReport) {
  TransactionGraph g = toy_graph(8);
  Matrix nf = g.node_features();
  nf(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const TransactionGraph bad = g.with_node_features(nf);
  try {
    (void)train_once(bad, toy_model(bad), short_training(10), 0.01);
    FAIL() << "expected training_diverged";
  } catch (const training_diverged& e) {
    EXPECT_EQ(e.report.status, "diverged");
    EXPECT_FALSE(e.report.epochs.empty());
  }
}

TEST(TrainOnce, MissingMasksAreDataErrors) {
  const TransactionGraph g = toy_graph(9);
  const TransactionGraph none = g.with_splits(std::vector<Split>(g.num_nodes(), Split::none));
  EXPECT_THROW(train_once(none, toy_model(g), short_training(5), 0.01), data_error);
  TrainingConfig bad = short_training(5);
  bad.patience = 5;
  EXPECT_THROW(train_once(g, toy_model(g), bad, 0.01), argument_error);
}

TEST(TrainOnce, MultiGraphTrainingUsesEveryGraph) {
  std::vector<TransactionGraph> gs{toy_graph(20), toy_graph(21)};
  const TrainResult r = train_once(gs, toy_model(gs[0]), short_training(20), 0.01);
  EXPECT_EQ(r.report.epochs.size(), 20u);
  const auto counts = training_class_counts(gs);
  EXPECT_EQ(counts[0] + counts[1], gs[0].count_split(Split::train) + gs[1].count_split(Split::train));
}

TEST(ClassWeights, GlobalLossScalingKeepsLinearPredictions) {
  // Logistic regression on the toy features, trained with the loss scaled by
  // 1 and by 1000.
  const TransactionGraph g = toy_graph(11);
  auto fit = [&](double scale_by) {
    std::mt19937_64 rng(3);
    Parameter w("w", glorot_uniform(2, 2, rng)), b("b", Matrix(1, 2));
    std::vector<int> y;
    for (Label l : g.labels()) y.push_back(l == Label::illicit);
    std::vector<Parameter*> ps{&w, &b};
    for (int epoch = 0; epoch < 300; ++epoch) {
      Tape t;
      Var x = t.constant(g.node_features());
      Var logits = add_bias(matmul(x, t.param(w)), t.param(b));
      Var loss = affine(softmax_cross_entropy(logits, y, {0.7, 1.3}), scale_by, 0.0);
      t.backward(loss);
      adam_step(ps, 0.05);
    }
    std::vector<int> pred;
    Tape t(false);
    const Matrix logits = add_bias(matmul(t.constant(g.node_features()), t.param(w)), t.param(b)).value();
    for (std::size_t i = 0; i < logits.rows(); ++i) pred.push_back(logits(i, 1) > logits(i, 0));
    return pred;
  };
  EXPECT_EQ(fit(1.0), fit(1000.0));
}

TEST(GridSearch, RecordsTheCartesianProduct) {
  const TransactionGraph g = toy_graph(12);
  TrainingConfig t = short_training(3);
  t.lr_grid = {0.1, 0.01, 0.001};
  t.tau_grid = {1, 2, 3, 4};
  t.jobs = 4;
  const GridReport rep = grid_search(g, toy_model(g), t);
  ASSERT_EQ(rep.cells.size(), 12u);
  ASSERT_TRUE(rep.best.has_value());
  for (const auto& c : rep.cells) EXPECT_TRUE(c.tau.has_value());
  ModelConfig plain = toy_model(g);
  plain.use_line_graph_view = false;
  EXPECT_EQ(grid_search(g, plain, t).cells.size(), 3u);
}

TEST(GridSearch, SingleCellEqualsTrainOnce) {
  const TransactionGraph g = toy_graph(13);
  TrainingConfig t = short_training(15);
  t.lr_grid = {0.01};
  GridReport rep = grid_search(g, toy_model(g), t);
  TrainResult direct = train_once(g, toy_model(g), t, 0.01);
  ASSERT_EQ(rep.cells.size(), 1u);
  ASSERT_EQ(rep.best, 0u);
  EXPECT_EQ(rep.cells[0].report.best_val_loss, direct.report.best_val_loss);
  EXPECT_EQ(rep.cells[0].report.best_epoch, direct.report.best_epoch);
  expect_same_parameters(*rep.best_params, direct.params);
}

TEST(GridSearch, ThreadCountDoesNotChangeResults) {
  const TransactionGraph g = toy_graph(14);
  TrainingConfig t = short_training(8);
  t.lr_grid = {0.1, 0.03, 0.01, 0.001};
  const GridReport one = grid_search(g, toy_model(g), t);
  t.jobs = 4;
  const GridReport four = grid_search(g, toy_model(g), t);
  ASSERT_EQ(one.cells.size(), four.cells.size());
  for (std::size_t i = 0; i < one.cells.size(); ++i)
    EXPECT_EQ(one.cells[i].report.best_val_loss, four.cells[i].report.best_val_loss);
  EXPECT_EQ(one.best, four.best);
}

TEST(GridSearch, FailedCellIsRecordedNotFatal) {
  TransactionGraph g = toy_graph(15);
  Matrix nf = g.node_features();
  nf(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const TransactionGraph bad = g.with_node_features(nf);
  TrainingConfig t = short_training(3);
  t.lr_grid = {0.1, 0.01};
  const GridReport rep = grid_search(bad, toy_model(bad), t);
  ASSERT_EQ(rep.cells.size(), 2u);
  for (const auto& c : rep.cells) EXPECT_EQ(c.report.status, "diverged");
  EXPECT_FALSE(rep.best.has_value());
}

TEST(GridSearch, ModerateRateBeatsLargeRateOnSyntheticGraph) {
  SyntheticBenchmarkConfig sc;
  sc.background_nodes = 1000;
  const SyntheticBenchmark b = make_synthetic_benchmark(sc);
  ModelConfig m;
  m.hidden_dim = 32;
  m.node_dim = b.graph.node_features().cols();
  m.edge_dim = b.graph.edge_features().cols();
  TrainingConfig t = short_training(200);
  t.lr_grid = {0.1, 0.01};
  t.jobs = 2;
  const GridReport rep = grid_search(b.graph, m, t);
  ASSERT_EQ(rep.cells.size(), 2u);
  const RunReport& large = rep.cells[0].report;
  const RunReport& moderate = rep.cells[1].report;
  ASSERT_EQ(moderate.status, "ok");
  if (large.status == "ok") {
    EXPECT_GT(moderate.test.f1, large.test.f1);
    EXPECT_GT(moderate.val.f1, large.val.f1);
  }
  EXPECT_EQ(rep.best, 1u);
}
