#pragma once

// Full-batch transductive training: class-weighted cross-entropy on the train
// mask, Adam with cosine warm restarts, early stopping on validation loss,
// and a learning-rate x tau grid search.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/error.hpp"
#include "linemvgnn/graph.hpp"
#include "linemvgnn/model.hpp"

namespace lmv {

enum class ClassWeighting { none, inv_sqrt };

inline const char* to_string(ClassWeighting w) { return w == ClassWeighting::none ? "none" : "inv_sqrt"; }

struct TrainingConfig {
  std::size_t max_epochs = 500;
  std::size_t patience = 25;
  std::vector<double> lr_grid{0.1, 0.01, 0.001};
  std::vector<std::size_t> tau_grid;
  std::uint64_t seed = 0;
  ClassWeighting class_weighting = ClassWeighting::inv_sqrt;
  std::size_t eval_every = 1;
  std::size_t first_restart = 10;
  std::size_t jobs = 1;

  void validate() const {
    if (max_epochs == 0) throw argument_error("max_epochs must be positive");
    if (patience >= max_epochs) throw argument_error("patience must be smaller than max_epochs");
    if (lr_grid.empty()) throw argument_error("lr_grid must not be empty");
    if (eval_every == 0) throw argument_error("eval_every must be positive");
    for (std::size_t t : tau_grid)
      if (t < 1) throw argument_error("tau values must be at least 1");
  }
};

/// Illicit is the positive class. F1 is 0 when precision + recall is 0.
struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline Metrics binary_metrics(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) throw argument_error("binary_metrics: length mismatch");
  Metrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == 1, a = actual[i] == 1;
    if (p && a) ++m.tp;
    else if (p) ++m.fp;
    else if (a) ++m.fn;
    else ++m.tn;
  }
  m.precision = m.tp + m.fp ? double(m.tp) / double(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? double(m.tp) / double(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// 1 / sqrt(n_c) from per-class training counts.
inline std::array<double, 2> class_weights(std::array<std::size_t, 2> counts) {
  if (counts[0] == 0 || counts[1] == 0) throw data_error("class_weights: a class has no training nodes");
  return {1.0 / std::sqrt(double(counts[0])), 1.0 / std::sqrt(double(counts[1]))};
}

/// Class counts over train-mask nodes only.
inline std::array<std::size_t, 2> training_class_counts(std::span<const TransactionGraph> graphs) {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& g : graphs)
    for (NodeId v = 0; v < g.num_nodes(); ++v)
      if (g.splits()[v] == Split::train) ++counts[g.labels()[v] == Label::illicit ? 1 : 0];
  return counts;
}

inline std::array<double, 2> resolve_class_weights(std::span<const TransactionGraph> graphs, ClassWeighting w) {
  if (w == ClassWeighting::none) return {1.0, 1.0};
  return class_weights(training_class_counts(graphs));
}

/// Stops once `patience` epochs have passed without a strictly lower loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when this epoch is the new best.
  bool observe(std::size_t epoch, double loss) {
    if (!best_epoch_ || loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      last_epoch_ = epoch;
      return true;
    }
    last_epoch_ = epoch;
    return false;
  }
  bool should_stop() const { return best_epoch_ && last_epoch_ - *best_epoch_ >= patience_; }
  std::optional<std::size_t> best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::optional<std::size_t> best_epoch_;
  std::size_t last_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_f1;
};

struct RunReport {
  ModelConfig model;
  TrainingConfig training;
  double lr = 0.0;
  std::array<double, 2> class_weights{1.0, 1.0};
  std::string status = "ok";  // ok | diverged | failed
  std::string message;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  Metrics val;   // at the best epoch
  Metrics test;  // at the best epoch
  double wall_clock_seconds = 0.0;
};

/// Divergence carries the partial report.
struct training_diverged : numeric_error {
  RunReport report;
  explicit training_diverged(RunReport r) : numeric_error(r.message), report(std::move(r)) {}
};

namespace detail {

struct MaskedNodes {
  RowIndex index;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

inline MaskedNodes masked_nodes(const TransactionGraph& g, Split s) {
  std::vector<std::size_t> idx;
  MaskedNodes m;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (g.splits()[v] == s) {
      idx.push_back(v);
      m.labels.push_back(g.labels()[v] == Label::illicit ? 1 : 0);
    }
  m.index = make_index(std::move(idx));
  return m;
}

struct PreparedGraph {
  const TransactionGraph* graph;
  PropagationPlan plan;
  MaskedNodes train, val, test;
};

inline std::vector<PreparedGraph> prepare(std::span<const TransactionGraph> graphs, const ModelConfig& cfg) {
  std::vector<PreparedGraph> out;
  for (const auto& g : graphs) {
    if (g.node_features().cols() != cfg.node_dim || g.edge_features().cols() != cfg.edge_dim)
      throw argument_error("graph feature widths do not match the model configuration");
    out.push_back({&g, make_plan(g, cfg), masked_nodes(g, Split::train), masked_nodes(g, Split::val),
                   masked_nodes(g, Split::test)});
  }
  return out;
}

inline Matrix predict_logits(ModelParameters& mp, const ModelConfig& cfg, const PreparedGraph& pg) {
  Tape tape(false);
  return forward(tape, mp, cfg, pg.plan, pg.graph->node_features(), pg.graph->edge_features()).logits.value();
}

/// Accumulates sum_i w[y_i] * nll_i and sum_i w[y_i] over masked rows.
inline void accumulate_loss(const Matrix& logits, const MaskedNodes& m, const std::array<double, 2>& w,
                            double& total, double& norm) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::size_t v = (*m.index)[i];
    const double a = logits(v, 0), b = logits(v, 1);
    const double mx = std::max(a, b);
    const double log_z = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    const double wy = w[m.labels[i]];
    total += wy * (log_z - (m.labels[i] == 1 ? b : a));
    norm += wy;
  }
}

inline void collect_predictions(const Matrix& logits, const MaskedNodes& m, std::vector<int>& pred,
                                std::vector<int>& actual) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::size_t v = (*m.index)[i];
    pred.push_back(logits(v, 1) > logits(v, 0) ? 1 : 0);
    actual.push_back(m.labels[i]);
  }
}

struct Evaluation {
  double loss = 0.0;
  Metrics metrics;
};

inline Evaluation evaluate_prepared(ModelParameters& mp, const ModelConfig& cfg, std::span<const PreparedGraph> pgs,
                                    Split which, const std::array<double, 2>& w) {
  double total = 0.0, norm = 0.0;
  std::vector<int> pred, actual;
  for (const auto& pg : pgs) {
    const MaskedNodes& m = which == Split::train ? pg.train : which == Split::val ? pg.val : pg.test;
    if (m.size() == 0) continue;
    const Matrix logits = predict_logits(mp, cfg, pg);
    accumulate_loss(logits, m, w, total, norm);
    collect_predictions(logits, m, pred, actual);
  }
  return {norm > 0.0 ? total / norm : 0.0, binary_metrics(pred, actual)};
}

}  // namespace detail

struct TrainResult {
  ModelParameters params;
  RunReport report;
};

/// Trains one model with a fixed base learning rate. Each epoch takes one
/// full-batch Adam step per graph holding train nodes, in the given order.
/// Returns the parameters of the epoch with the lowest validation loss.
inline TrainResult train_once(std::span<const TransactionGraph> graphs, const ModelConfig& mcfg,
                              const TrainingConfig& tcfg, double lr) {
  mcfg.validate();
  tcfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto pgs = detail::prepare(graphs, mcfg);
  std::size_t n_train = 0, n_val = 0;
  for (const auto& pg : pgs) {
    n_train += pg.train.size();
    n_val += pg.val.size();
  }
  if (n_train == 0) throw data_error("train_once: no train-mask nodes");
  if (n_val == 0) throw data_error("train_once: no validation-mask nodes");

  TrainResult result{init_parameters(mcfg, tcfg.seed), {}};
  RunReport& rep = result.report;
  rep.model = mcfg;
  rep.training = tcfg;
  rep.lr = lr;
  rep.class_weights = resolve_class_weights(graphs, tcfg.class_weighting);
  const std::vector<double> weights(rep.class_weights.begin(), rep.class_weights.end());

  ModelParameters& mp = result.params;
  ModelParameters best = mp;
  EarlyStopping stopper(tcfg.patience);
  auto params = mp.all();

  for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = cosine_warm_restart_lr(epoch, lr, tcfg.first_restart);
    double loss_sum = 0.0;
    for (const auto& pg : pgs) {
      if (pg.train.size() == 0) continue;
      Tape tape;
      auto out = forward(tape, mp, mcfg, pg.plan, pg.graph->node_features(), pg.graph->edge_features());
      Var loss = softmax_cross_entropy(row_gather(out.logits, pg.train.index), pg.train.labels, weights);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        rep.status = "diverged";
        rep.message = "non-finite training loss at epoch " + std::to_string(rec.epoch);
        rep.epochs.push_back(rec);
        rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw training_diverged(rep);
      }
      tape.backward(loss);
      adam_step(params, rec.lr);
      loss_sum += lv * double(pg.train.size());
    }
    rec.train_loss = loss_sum / double(n_train);

    const bool evaluate_now = (epoch + 1) % tcfg.eval_every == 0 || epoch + 1 == tcfg.max_epochs;
    if (evaluate_now) {
      const auto ev = detail::evaluate_prepared(mp, mcfg, pgs, Split::val, rep.class_weights);
      if (!std::isfinite(ev.loss)) {
        rep.status = "diverged";
        rep.message = "non-finite validation loss at epoch " + std::to_string(rec.epoch);
        rep.epochs.push_back(rec);
        rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw training_diverged(rep);
      }
      rec.val_loss = ev.loss;
      rec.val_f1 = ev.metrics.f1;
      if (stopper.observe(rec.epoch, ev.loss)) {
        best = mp;
        rep.val = ev.metrics;
      }
    }
    rep.epochs.push_back(rec);
    if (stopper.should_stop()) break;
  }

  rep.best_epoch = stopper.best_epoch().value_or(0);
  rep.best_val_loss = stopper.best_loss();
  mp = std::move(best);
  for (Parameter* p : mp.all()) p->zero_grad();
  rep.test = detail::evaluate_prepared(mp, mcfg, pgs, Split::test, rep.class_weights).metrics;
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline TrainResult train_once(const TransactionGraph& g, const ModelConfig& mcfg, const TrainingConfig& tcfg,
                              double lr) {
  return train_once(std::span<const TransactionGraph>(&g, 1), mcfg, tcfg, lr);
}

/// Metrics of the trained model over the nodes carrying `mask`.
inline Metrics evaluate(std::span<const TransactionGraph> graphs, ModelParameters& mp, const ModelConfig& cfg,
                        Split mask) {
  if (mask == Split::none) throw argument_error("evaluate: mask must be train, val or test");
  const auto pgs = detail::prepare(graphs, cfg);
  std::size_t n = 0;
  for (const auto& pg : pgs)
    n += mask == Split::train ? pg.train.size() : mask == Split::val ? pg.val.size() : pg.test.size();
  if (n == 0) throw data_error("evaluate: mask selects no nodes");
  return detail::evaluate_prepared(mp, cfg, pgs, mask, {1.0, 1.0}).metrics;
}

inline Metrics evaluate(const TransactionGraph& g, ModelParameters& mp, const ModelConfig& cfg, Split mask) {
  return evaluate(std::span<const TransactionGraph>(&g, 1), mp, cfg, mask);
}

struct GridCell {
  double lr = 0.0;
  std::optional<std::size_t> tau;
  RunReport report;
};

struct GridReport {
  std::vector<GridCell> cells;
  std::optional<std::size_t> best;  // index into cells
  std::optional<ModelParameters> best_params;
  std::string selection_rule = "max val illicit-F1, then min val loss, then min lr";
};

/// Cartesian lr_grid x tau_grid (tau only with the line-graph view). Cells
/// run on up to `jobs` threads; a failed cell is recorded, not fatal.
inline GridReport grid_search(std::span<const TransactionGraph> graphs, const ModelConfig& mcfg,
                              const TrainingConfig& tcfg) {
  tcfg.validate();
  GridReport rep;
  std::vector<std::optional<std::size_t>> taus;
  if (mcfg.use_line_graph_view && !tcfg.tau_grid.empty())
    for (std::size_t t : tcfg.tau_grid) taus.emplace_back(t);
  else
    taus.emplace_back(mcfg.tau);
  for (double lr : tcfg.lr_grid)
    for (const auto& tau : taus) rep.cells.push_back({lr, tau, {}});

  std::vector<std::optional<ModelParameters>> params(rep.cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rep.cells.size();) {
      GridCell& cell = rep.cells[i];
      ModelConfig cfg = mcfg;
      cfg.tau = cell.tau;
      try {
        TrainResult r = train_once(graphs, cfg, tcfg, cell.lr);
        cell.report = std::move(r.report);
        params[i] = std::move(r.params);
      } catch (const training_diverged& e) {
        cell.report = e.report;
      } catch (const std::exception& e) {
        cell.report.model = cfg;
        cell.report.training = tcfg;
        cell.report.lr = cell.lr;
        cell.report.status = "failed";
        cell.report.message = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(tcfg.jobs, rep.cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    const RunReport& r = rep.cells[i].report;
    if (r.status != "ok") continue;
    if (!rep.best) {
      rep.best = i;
      continue;
    }
    const RunReport& b = rep.cells[*rep.best].report;
    const bool better = r.val.f1 > b.val.f1 ||
                        (r.val.f1 == b.val.f1 && (r.best_val_loss < b.best_val_loss ||
                                                  (r.best_val_loss == b.best_val_loss && r.lr < b.lr)));
    if (better) rep.best = i;
  }
  if (rep.best) rep.best_params = std::move(params[*rep.best]);
  return rep;
}

inline GridReport grid_search(const TransactionGraph& g, const ModelConfig& mcfg, const TrainingConfig& tcfg) {
  return grid_search(std::span<const TransactionGraph>(&g, 1), mcfg, tcfg);
}

}  // namespace lmv
