#pragma once

// Minimal dense reverse-mode automatic differentiation.
//
// A Tape records every operation of one forward pass. Nodes are appended in
// creation order, which is already a topological order, so backward() is a
// single reverse sweep. Tapes are cheap to build and are rebuilt on every
// forward pass; a tape is single-threaded but independent tapes share nothing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "linemvgnn/error.hpp"

namespace lmv {

/// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_)
      throw argument_error("Matrix: value count does not match shape");
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != m.cols_) throw argument_error("Matrix::from_rows: ragged rows");
      m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  Matrix& operator+=(const Matrix& o) {
    if (!same_shape(o)) throw argument_error("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
inline Eigen::Map<RowMajor> map(Matrix& m) { return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }
inline Eigen::Map<const RowMajor> map(const Matrix& m) {
  return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}
}  // namespace detail

/// Learnable tensor plus its Adam state.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        first_moment(value.rows(), value.cols()),
        second_moment(value.rows(), value.cols()) {}

  void zero_grad() { grad.set_zero(); }
};

/// Shared, immutable row index used by gather/scatter.
using RowIndex = std::shared_ptr<const std::vector<std::size_t>>;

inline RowIndex make_index(std::vector<std::size_t> idx) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
}

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  /// With grad disabled, parameters enter as constants and nothing is recorded
  /// for backward.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix m) { return push(std::move(m), false, nullptr, {}); }

  /// Tracked input whose gradient is kept on the tape (see grad()).
  Var input(Matrix m) { return push(std::move(m), grad_enabled_, nullptr, {}); }

  Var param(Parameter& p) {
    if (!grad_enabled_) return constant(p.value);
    Var v = push(p.value, true, nullptr, {});
    nodes_[v.id].param = &p;
    return v;
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }

  /// Gradient of the last backward() target w.r.t. v (zeros if untouched).
  Matrix grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Backpropagates from a 1x1 node and accumulates into Parameter::grad.
  void backward(Var loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.rows() != 1 || root.value.cols() != 1)
      throw argument_error("backward: target must be a 1x1 tensor");
    if (!root.requires_grad) return;
    for (auto& n : nodes_) n.grad = Matrix();
    root.grad = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // Operator plumbing; not meant for direct use outside this header.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var push(Matrix value, bool requires_grad, BackwardFn fn, std::vector<std::size_t> parents) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr, std::move(fn), std::move(parents)});
    return Var{this, nodes_.size() - 1};
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  /// Gradient accumulator of a parent, or nullptr if it needs no gradient.
  Matrix* grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return &n.grad;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
    std::vector<std::size_t> parents;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw argument_error("operands live on different tapes");
  return *a.tape;
}

inline Var record(Tape& t, Matrix value, std::initializer_list<Var> parents, Tape::BackwardFn fn) {
  bool rg = false;
  std::vector<std::size_t> ids;
  for (Var p : parents) {
    rg = rg || t.requires_grad(p);
    ids.push_back(p.id);
  }
  if (!rg) fn = nullptr;
  return t.push(std::move(value), rg, std::move(fn), std::move(ids));
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw argument_error("matmul: inner dimensions differ");
  Matrix out(av.rows(), bv.cols());
  if (out.size() > 0 && av.cols() > 0) detail::map(out).noalias() = detail::map(av) * detail::map(bv);
  return detail::record(t, std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    auto ids = tp.parents(self);
    const Matrix& av = tp.value_of(ids[0]);
    const Matrix& bv = tp.value_of(ids[1]);
    if (g.size() == 0 || av.cols() == 0) return;
    if (Matrix* ga = tp.grad_sink(ids[0])) detail::map(*ga).noalias() += detail::map(g) * detail::map(bv).transpose();
    if (Matrix* gb = tp.grad_sink(ids[1])) detail::map(*gb).noalias() += detail::map(av).transpose() * detail::map(g);
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw argument_error("add: shape mismatch");
  Matrix out = a.value();
  out += b.value();
  return detail::record(t, std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    for (std::size_t id : tp.parents(self))
      if (Matrix* s = tp.grad_sink(id)) *s += g;
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw argument_error("sub: shape mismatch");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::record(t, std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    auto ids = tp.parents(self);
    if (Matrix* s = tp.grad_sink(ids[0])) *s += g;
    if (Matrix* s = tp.grad_sink(ids[1]))
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] -= g[i];
  });
}

/// Adds a 1 x cols bias row to every row of `a`.
inline Var add_bias(Var a, Var bias) {
  Tape& t = detail::same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw argument_error("add_bias: bias must be 1 x cols");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return detail::record(t, std::move(out), {a, bias}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    auto ids = tp.parents(self);
    if (Matrix* s = tp.grad_sink(ids[0])) *s += g;
    if (Matrix* s = tp.grad_sink(ids[1]))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*s)[c] += g(r, c);
  });
}

inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw argument_error("concat_cols: row counts differ");
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return detail::record(t, std::move(out), {a, b}, [ca, cb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    auto ids = tp.parents(self);
    if (Matrix* s = tp.grad_sink(ids[0]))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) (*s)(r, c) += g(r, c);
    if (Matrix* s = tp.grad_sink(ids[1]))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) (*s)(r, c) += g(r, ca + c);
  });
}

/// Elementwise max(x, 0); the gradient at exactly 0 is 0.
inline Var relu(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (double& x : out.values()) x = x < 0.0 ? 0.0 : x;  // NaN passes through
  return detail::record(t, std::move(out), {a}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    std::size_t id = tp.parents(self)[0];
    const Matrix& x = tp.value_of(id);
    if (Matrix* s = tp.grad_sink(id))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) (*s)[i] += g[i];
  });
}

/// Multiplies every element of `a` by the 1x1 tensor `s`.
inline Var scale(Var a, Var s) {
  Tape& t = detail::same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw argument_error("scale: factor must be 1x1");
  const double k = s.value()[0];
  Matrix out = a.value();
  for (double& x : out.values()) x *= k;
  return detail::record(t, std::move(out), {a, s}, [](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    auto ids = tp.parents(self);
    const Matrix& av = tp.value_of(ids[0]);
    const double k = tp.value_of(ids[1])[0];
    if (Matrix* ga = tp.grad_sink(ids[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += k * g[i];
    if (Matrix* gs = tp.grad_sink(ids[1])) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += av[i] * g[i];
      (*gs)[0] += acc;
    }
  });
}

/// Elementwise mul * a + offset with constant coefficients.
inline Var affine(Var a, double mul, double offset) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (double& x : out.values()) x = mul * x + offset;
  return detail::record(t, std::move(out), {a}, [mul](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += mul * g[i];
  });
}

/// out[index[i]] += src[i]; rows of `out` without a source stay zero.
inline Var row_scatter_add(Var src, RowIndex index, std::size_t out_rows) {
  Tape& t = *src.tape;
  const Matrix& sv = src.value();
  if (!index || index->size() != sv.rows()) throw argument_error("row_scatter_add: index length differs from row count");
  const std::size_t cols = sv.cols();
  Matrix out(out_rows, cols);
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t dst = (*index)[i];
    if (dst >= out_rows) throw argument_error("row_scatter_add: target row out of range");
    const double* s = sv.data() + i * cols;
    double* d = out.data() + dst * cols;
    for (std::size_t c = 0; c < cols; ++c) d[c] += s[c];
  }
  return detail::record(t, std::move(out), {src}, [index, cols](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
      for (std::size_t i = 0; i < index->size(); ++i) {
        const double* gr = g.data() + (*index)[i] * cols;
        double* sr = s->data() + i * cols;
        for (std::size_t c = 0; c < cols; ++c) sr[c] += gr[c];
      }
  });
}

/// out[i] = src[index[i]].
inline Var row_gather(Var src, RowIndex index) {
  Tape& t = *src.tape;
  const Matrix& sv = src.value();
  if (!index) throw argument_error("row_gather: null index");
  const std::size_t cols = sv.cols();
  Matrix out(index->size(), cols);
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t from = (*index)[i];
    if (from >= sv.rows()) throw argument_error("row_gather: source row out of range");
    std::copy_n(sv.data() + from * cols, cols, out.data() + i * cols);
  }
  return detail::record(t, std::move(out), {src}, [index, cols](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
      for (std::size_t i = 0; i < index->size(); ++i) {
        const double* gr = g.data() + i * cols;
        double* sr = s->data() + (*index)[i] * cols;
        for (std::size_t c = 0; c < cols; ++c) sr[c] += gr[c];
      }
  });
}

/// Class-weighted mean cross-entropy of softmax(logits):
///   sum_i w[y_i] * -log p(y_i | row i) / sum_i w[y_i].
inline Var softmax_cross_entropy(Var logits, std::vector<int> labels, std::vector<double> class_weights) {
  Tape& t = *logits.tape;
  const Matrix& lv = logits.value();
  const std::size_t k = lv.cols();
  if (labels.size() != lv.rows()) throw argument_error("softmax_cross_entropy: one label per row required");
  if (class_weights.size() != k) throw argument_error("softmax_cross_entropy: one weight per class required");
  for (double w : class_weights)
    if (!(w > 0.0)) throw argument_error("softmax_cross_entropy: class weights must be positive");
  for (int y : labels)
    if (y < 0 || std::size_t(y) >= k) throw argument_error("softmax_cross_entropy: label out of range");

  Matrix probs(lv.rows(), k);
  double total = 0.0, norm = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) probs(r, c) = std::exp(row[c] - log_z);
    const double w = class_weights[labels[r]];
    total += w * (log_z - row[labels[r]]);
    norm += w;
  }
  Matrix out(1, 1, norm > 0.0 ? total / norm : 0.0);
  return detail::record(
      t, std::move(out), {logits},
      [probs = std::move(probs), labels = std::move(labels), w = std::move(class_weights), norm](Tape& tp,
                                                                                                 std::size_t self) {
        if (norm <= 0.0) return;
        const double g = tp.upstream(self)[0];
        if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
          for (std::size_t r = 0; r < probs.rows(); ++r) {
            const double f = g * w[labels[r]] / norm;
            for (std::size_t c = 0; c < probs.cols(); ++c)
              (*s)(r, c) += f * (probs(r, c) - (int(c) == labels[r] ? 1.0 : 0.0));
          }
      });
}

/// Sum of all elements as a 1x1 tensor.
inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  return detail::record(t, Matrix(1, 1, acc), {a}, [](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
      for (double& x : s->values()) x += g;
  });
}

/// Weighted sum with a constant weight matrix: sum_ij a_ij * w_ij. Used to
/// project arbitrary outputs to a scalar in gradient checks.
inline Var dot_const(Var a, const Matrix& w) {
  if (!a.value().same_shape(w)) throw argument_error("dot_const: shape mismatch");
  Tape& t = *a.tape;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += a.value()[i] * w[i];
  return detail::record(t, Matrix(1, 1, acc), {a}, [w](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    if (Matrix* s = tp.grad_sink(tp.parents(self)[0]))
      for (std::size_t i = 0; i < w.size(); ++i) (*s)[i] += g * w[i];
  });
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update per parameter; clears gradients afterwards.
inline void adam_step(std::span<Parameter* const> params, double lr, const AdamOptions& opt = {}) {
  for (Parameter* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, double(p->step));
    const double bc2 = 1.0 - std::pow(opt.beta2, double(p->step));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      p->value[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + opt.eps);
    }
    p->zero_grad();
  }
}

/// Cosine annealing from base_lr towards 0, restarting at epochs
/// first_restart, 2*first_restart, 4*first_restart, ... (10, 20, 40, 80, ...
/// by default). Epochs are 0-based.
inline double cosine_warm_restart_lr(std::size_t epoch, double base_lr, std::size_t first_restart = 10) {
  if (first_restart == 0) return base_lr;
  std::size_t start = 0, length = first_restart;
  if (epoch >= first_restart) {
    start = first_restart;
    while (epoch >= start + length) {
      start += length;
      length = start;
    }
  }
  const double frac = double(epoch - start) / double(length);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

/// Uniform on +-sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Matrix m(fan_in, fan_out);
  if (fan_in + fan_out == 0) return m;
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckResult {
  double max_rel_error = 0.0;    // over entries with |analytic| > floor
  double max_abs_error = 0.0;    // over all entries
  std::size_t checked = 0;       // entries entering max_rel_error
  std::size_t total = 0;

  bool passed(double rel_tol) const { return max_rel_error <= rel_tol; }
};

namespace detail {
inline void grade(GradCheckResult& r, double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  r.max_abs_error = std::max(r.max_abs_error, diff);
  r.total += 1;
  if (std::abs(analytic) > floor) {
    r.max_rel_error = std::max(r.max_rel_error, diff / std::max(std::abs(analytic), std::abs(numeric)));
    r.checked += 1;
  }
}
}  // namespace detail

/// Compares backward() against central differences for a scalar function of
/// several input matrices.
inline GradCheckResult check_input_gradients(const std::function<Var(Tape&, std::span<const Var>)>& fn,
                                             std::vector<Matrix> inputs, double h = 1e-5, double floor = 1e-6) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.input(m));
    Var out = fn(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&] {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.constant(m));
    return fn(tape, vars).value()[0];
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = eval();
      inputs[k][i] = orig - h;
      const double down = eval();
      inputs[k][i] = orig;
      detail::grade(result, analytic[k][i], (up - down) / (2.0 * h), floor);
    }
  return result;
}

/// Same check for Parameters read by `fn` through Tape::param.
inline GradCheckResult check_parameter_gradients(const std::function<Var(Tape&)>& fn,
                                                 std::span<Parameter* const> params, double h = 1e-5,
                                                 double floor = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(fn(tape));
  }
  std::vector<Matrix> analytic;
  for (Parameter* p : params) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }
  auto eval = [&] {
    Tape tape(false);
    return fn(tape).value()[0];
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) {
      double& x = params[k]->value[i];
      const double orig = x;
      x = orig + h;
      const double up = eval();
      x = orig - h;
      const double down = eval();
      x = orig;
      detail::grade(result, analytic[k][i], (up - down) / (2.0 * h), floor);
    }
  return result;
}

}  // namespace lmv
