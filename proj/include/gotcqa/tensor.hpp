#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// Operations record a backward closure on the thread's active Tape when a tape
// is active and at least one input requires gradients. Tape::backward replays
// the closures once each, newest first, which is a reverse topological order
// of the recorded graph.

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gotcqa/error.hpp"

namespace gotcqa {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

// Aligned storage keeps Eigen's vectorized reduction order, and with it the
// rounding, independent of where the heap places a buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct TensorNode {
  Shape shape;
  Buffer value;
  Buffer grad;  // allocated on first accumulation
  bool requires_grad = false;

  double* grad_data() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

}  // namespace detail

class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) : Tensor() {
    if (shape_size(shape) != data.size())
      fail(Errc::ShapeMismatch, "data length " + std::to_string(data.size()) + " does not fit shape " + shape_string(shape));
    for (double v : data)
      if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "tensor data must be finite");
    node_->shape = std::move(shape);
    node_->value.assign(data.begin(), data.end());
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return Tensor(Shape{}, {v}, requires_grad); }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad = false) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) fail(Errc::ShapeMismatch, "ragged matrix literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data), requires_grad);
  }

  static Tensor vector(std::initializer_list<double> v, bool requires_grad = false) {
    return Tensor({v.size()}, std::vector<double>(v), requires_grad);
  }

  /// Op outputs: no finiteness scan.
  static Tensor from_node(detail::NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  /// Matrix view: rank 2 as-is, rank 1 as a row vector, rank 0 as 1x1.
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const {
    if (rank() == 2) return node_->shape[1];
    return rank() == 1 ? node_->shape[0] : 1;
  }

  std::span<const double> data() const { return node_->value; }
  /// In-place access for optimizers and perturbation probes.
  std::span<double> mutable_data() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  double item() const {
    if (size() != 1) fail(Errc::ShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  Tensor detach() const { return Tensor(shape(), std::vector<double>(node_->value.begin(), node_->value.end())); }

  const detail::NodePtr& node() const { return node_; }

 private:
  detail::NodePtr node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BackwardFn fn) { ops_.push_back(std::move(fn)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape once, newest op first.
  /// The tape is consumed.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) fail(Errc::ShapeMismatch, "backward needs a scalar loss, got " + shape_string(loss.shape()));
    loss.node()->grad_data()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  static Tape* active() { return slot(); }

 private:
  friend class TapeScope;
  friend class NoGradScope;
  static Tape*& slot() {
    thread_local Tape* current = nullptr;
    return current;
  }

  std::vector<BackwardFn> ops_;
};

/// Makes `tape` the recording target for this thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::slot()) { Tape::slot() = &tape; }
  ~TapeScope() { Tape::slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording while in scope.
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape::slot()) { Tape::slot() = nullptr; }
  ~NoGradScope() { Tape::slot() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

inline void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) fail(Errc::NoTape, "backward() called without an active tape");
  if (!loss.requires_grad()) fail(Errc::NoTape, "loss was not recorded on a tape");
  tape->backward(loss);
}

namespace detail {

inline bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

inline NodePtr make_output(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return n;
}

inline ConstMap view(const TensorNode& n, std::size_t rows, std::size_t cols) {
  return ConstMap(n.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MutMap mut_view(Buffer& v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MutMap grad_view(TensorNode& n, std::size_t rows, std::size_t cols) {
  return MutMap(n.grad_data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(Errc::ShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

inline void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() > 2) fail(Errc::ShapeMismatch, std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a [m x k] * b [k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    fail(Errc::ShapeMismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const bool rec = detail::recording({&a, &b});
  auto out = detail::make_output({m, n}, rec);
  detail::mut_view(out->value, m, n).noalias() = detail::view(*a.node(), m, k) * detail::view(*b.node(), k, n);
  if (rec) {
    Tape::active()->record([an = a.node(), bn = b.node(), out, m, k, n] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), m, n);
      if (an->requires_grad) detail::grad_view(*an, m, k).noalias() += g * detail::view(*bn, k, n).transpose();
      if (bn->requires_grad) detail::grad_view(*bn, k, n).noalias() += detail::view(*an, m, k).transpose() * g;
    });
  }
  return Tensor::from_node(out);
}

/// a [m x k] * b^T where b is [n x k]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_matrix("matmul_nt", a);
  detail::require_matrix("matmul_nt", b);
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    fail(Errc::ShapeMismatch, "matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  const bool rec = detail::recording({&a, &b});
  auto out = detail::make_output({m, n}, rec);
  detail::mut_view(out->value, m, n).noalias() = detail::view(*a.node(), m, k) * detail::view(*b.node(), n, k).transpose();
  if (rec) {
    Tape::active()->record([an = a.node(), bn = b.node(), out, m, k, n] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), m, n);
      if (an->requires_grad) detail::grad_view(*an, m, k).noalias() += g * detail::view(*bn, n, k);
      if (bn->requires_grad) detail::grad_view(*bn, n, k).noalias() += g.transpose() * detail::view(*an, m, k);
    });
  }
  return Tensor::from_node(out);
}

/// x [m x in] * W [in x out] + b [out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_matrix("linear", x);
  const auto m = x.rows(), in = x.cols(), o = w.cols();
  if (w.rank() != 2 || w.rows() != in || b.size() != o)
    fail(Errc::ShapeMismatch, "linear: x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) + ", b " +
                                  shape_string(b.shape()));
  const bool rec = detail::recording({&x, &w, &b});
  auto out = detail::make_output({m, o}, rec);
  auto y = detail::mut_view(out->value, m, o);
  y.noalias() = detail::view(*x.node(), m, in) * detail::view(*w.node(), in, o);
  y.rowwise() += detail::view(*b.node(), 1, o).row(0);
  if (rec) {
    Tape::active()->record([xn = x.node(), wn = w.node(), bn = b.node(), out, m, in, o] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), m, o);
      if (xn->requires_grad) detail::grad_view(*xn, m, in).noalias() += g * detail::view(*wn, in, o).transpose();
      if (wn->requires_grad) detail::grad_view(*wn, in, o).noalias() += detail::view(*xn, m, in).transpose() * g;
      if (bn->requires_grad) detail::grad_view(*bn, 1, o) += g.colwise().sum();
    });
  }
  return Tensor::from_node(out);
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  const bool rec = detail::recording({&a, &b});
  auto out = detail::make_output(a.shape(), rec);
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.data()[i] + b.data()[i];
  if (rec) {
    Tape::active()->record([an = a.node(), bn = b.node(), out] {
      if (out->grad.empty()) return;
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        double* g = n->grad_data();
        for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i];
      }
    });
  }
  return Tensor::from_node(out);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  const bool rec = detail::recording({&a, &b});
  auto out = detail::make_output(a.shape(), rec);
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.data()[i] * b.data()[i];
  if (rec) {
    Tape::active()->record([an = a.node(), bn = b.node(), out] {
      if (out->grad.empty()) return;
      if (an->requires_grad) {
        double* g = an->grad_data();
        for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        double* g = bn->grad_data();
        for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i] * an->value[i];
      }
    });
  }
  return Tensor::from_node(out);
}

/// Adds a length-n vector (any shape with n elements) to every row of x.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  detail::require_matrix("add_bias", x);
  const auto m = x.rows(), n = x.cols();
  if (bias.size() != n)
    fail(Errc::ShapeMismatch, "add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  const bool rec = detail::recording({&x, &bias});
  auto out = detail::make_output(x.shape(), rec);
  auto y = detail::mut_view(out->value, m, n);
  y = detail::view(*x.node(), m, n);
  y.rowwise() += detail::view(*bias.node(), 1, n).row(0);
  if (rec) {
    Tape::active()->record([xn = x.node(), bn = bias.node(), out, m, n] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), m, n);
      if (xn->requires_grad) detail::grad_view(*xn, m, n) += g;
      if (bn->requires_grad) detail::grad_view(*bn, 1, n) += g.colwise().sum();
    });
  }
  return Tensor::from_node(out);
}

inline Tensor scale(const Tensor& x, double s) {
  const bool rec = detail::recording({&x});
  auto out = detail::make_output(x.shape(), rec);
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = x.data()[i] * s;
  if (rec) {
    Tape::active()->record([xn = x.node(), out, s] {
      if (out->grad.empty()) return;
      double* g = xn->grad_data();
      for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i] * s;
    });
  }
  return Tensor::from_node(out);
}

namespace detail {

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd f, Deriv df) {
  const bool rec = recording({&x});
  auto out = make_output(x.shape(), rec);
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = f(x.data()[i]);
  if (rec) {
    Tape::active()->record([xn = x.node(), out, df] {
      if (out->grad.empty()) return;
      double* g = xn->grad_data();
      for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i] * df(xn->value[i]);
    });
  }
  return Tensor::from_node(out);
}

}  // namespace detail

inline Tensor relu(const Tensor& x) {
  return detail::unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Tensor sum(const Tensor& x) {
  const bool rec = detail::recording({&x});
  auto out = detail::make_output(Shape{}, rec);
  out->value[0] = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  if (rec) {
    Tape::active()->record([xn = x.node(), out] {
      if (out->grad.empty()) return;
      double* g = xn->grad_data();
      for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += out->grad[0];
    });
  }
  return Tensor::from_node(out);
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(std::max<std::size_t>(x.size(), 1))); }

/// Column means: [m x n] -> [1 x n].
inline Tensor mean_rows(const Tensor& x) {
  detail::require_matrix("mean_rows", x);
  const auto m = x.rows(), n = x.cols();
  if (m == 0) fail(Errc::ShapeMismatch, "mean_rows of an empty matrix");
  const bool rec = detail::recording({&x});
  auto out = detail::make_output({1, n}, rec);
  detail::mut_view(out->value, 1, n) = detail::view(*x.node(), m, n).colwise().mean();
  if (rec) {
    Tape::active()->record([xn = x.node(), out, m, n] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), 1, n);
      detail::grad_view(*xn, m, n).rowwise() += g.row(0) / static_cast<double>(m);
    });
  }
  return Tensor::from_node(out);
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(Errc::ShapeMismatch, "concat_rows of nothing");
  const auto n = parts.front().cols();
  std::size_t m = 0;
  bool rec = false;
  for (const auto& p : parts) {
    detail::require_matrix("concat_rows", p);
    if (p.cols() != n)
      fail(Errc::ShapeMismatch, "concat_rows: " + shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    m += p.rows();
    rec = rec || detail::recording({&p});
  }
  auto out = detail::make_output({m, n}, rec);
  std::size_t offset = 0;
  std::vector<detail::NodePtr> nodes;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out->value.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
    nodes.push_back(p.node());
  }
  if (rec) {
    Tape::active()->record([nodes = std::move(nodes), out] {
      if (out->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& p : nodes) {
        if (p->requires_grad) {
          double* g = p->grad_data();
          for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += out->grad[off + i];
        }
        off += p->value.size();
      }
    });
  }
  return Tensor::from_node(out);
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) { return concat_rows(std::vector<Tensor>{a, b}); }

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(Errc::ShapeMismatch, "concat_cols of nothing");
  const auto m = parts.front().rows();
  std::size_t n = 0;
  bool rec = false;
  std::vector<detail::NodePtr> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_matrix("concat_cols", p);
    if (p.rows() != m)
      fail(Errc::ShapeMismatch, "concat_cols: " + shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    n += p.cols();
    rec = rec || detail::recording({&p});
    nodes.push_back(p.node());
    widths.push_back(p.cols());
  }
  auto out = detail::make_output({m, n}, rec);
  auto y = detail::mut_view(out->value, m, n);
  std::size_t c = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    y.middleCols(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(widths[i])) = detail::view(*nodes[i], m, widths[i]);
    c += widths[i];
  }
  if (rec) {
    Tape::active()->record([nodes = std::move(nodes), widths = std::move(widths), out, m, n] {
      if (out->grad.empty()) return;
      auto g = detail::ConstMap(out->grad.data(), m, n);
      std::size_t col = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i]->requires_grad)
          detail::grad_view(*nodes[i], m, widths[i]) += g.middleCols(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(widths[i]));
        col += widths[i];
      }
    });
  }
  return Tensor::from_node(out);
}

inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_matrix("slice_cols", x);
  const auto m = x.rows(), n = x.cols();
  if (begin + count > n)
    fail(Errc::ShapeMismatch, "slice_cols [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") of " +
                                  shape_string(x.shape()));
  const bool rec = detail::recording({&x});
  auto out = detail::make_output({m, count}, rec);
  detail::mut_view(out->value, m, count) =
      detail::view(*x.node(), m, n).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  if (rec) {
    Tape::active()->record([xn = x.node(), out, m, n, begin, count] {
      if (out->grad.empty()) return;
      detail::grad_view(*xn, m, n).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
          detail::ConstMap(out->grad.data(), m, count);
    });
  }
  return Tensor::from_node(out);
}

// ---------------------------------------------------------------------------
// Normalization

/// Row-wise softmax. With `causal`, entry (i, j) for j > i is excluded
/// (probability 0).
inline Tensor softmax_rows(const Tensor& x, bool causal = false) {
  detail::require_matrix("softmax_rows", x);
  const auto m = x.rows(), n = x.cols();
  const bool rec = detail::recording({&x});
  auto out = detail::make_output(x.shape(), rec);
  const double* in = x.data().data();
  double* y = out->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? std::min(n, i + 1) : n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, in[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (y[i * n + j] = std::exp(in[i * n + j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[i * n + j] /= z;
  }
  if (rec) {
    Tape::active()->record([xn = x.node(), out, m, n] {
      if (out->grad.empty()) return;
      double* g = xn->grad_data();
      const double* yv = out->value.data();
      const double* gy = out->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * yv[i * n + j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += yv[i * n + j] * (gy[i * n + j] - dot);
      }
    });
  }
  return Tensor::from_node(out);
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise (x - mean) / sqrt(var + eps), then optional per-column gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor* gain, const Tensor* bias, double eps = kLayerNormEps) {
  detail::require_matrix("layer_norm", x);
  if (!(eps > 0)) fail(Errc::InvalidStep, "layer_norm eps must be positive");
  const auto m = x.rows(), n = x.cols();
  if ((gain && gain->size() != n) || (bias && bias->size() != n))
    fail(Errc::ShapeMismatch, "layer_norm affine parameters do not match " + shape_string(x.shape()));
  bool rec = detail::recording({&x});
  if (gain) rec = rec || detail::recording({gain});
  if (bias) rec = rec || detail::recording({bias});
  auto out = detail::make_output(x.shape(), rec);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const double* in = x.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[i * n + j] - mu) * (in[i * n + j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[i * n + j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out->value[i * n + j] = h * (gain ? gain->data()[j] : 1.0) + (bias ? bias->data()[j] : 0.0);
    }
  }
  if (rec) {
    detail::NodePtr gn = gain ? gain->node() : nullptr;
    detail::NodePtr bn = bias ? bias->node() : nullptr;
    Tape::active()->record([xn = x.node(), gn, bn, out, xhat, inv_std, m, n] {
      if (out->grad.empty()) return;
      const double* gy = out->grad.data();
      if (gn && gn->requires_grad) {
        double* gg = gn->grad_data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gg[j] += gy[i * n + j] * (*xhat)[i * n + j];
      }
      if (bn && bn->requires_grad) {
        double* gb = bn->grad_data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += gy[i * n + j];
      }
      if (!xn->requires_grad) return;
      double* gx = xn->grad_data();
      std::vector<double> gh(n);
      for (std::size_t i = 0; i < m; ++i) {
        double mean_gh = 0.0, mean_gh_h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          gh[j] = gy[i * n + j] * (gn ? gn->value[j] : 1.0);
          mean_gh += gh[j];
          mean_gh_h += gh[j] * (*xhat)[i * n + j];
        }
        mean_gh /= static_cast<double>(n);
        mean_gh_h /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += (*inv_std)[i] * (gh[j] - mean_gh - (*xhat)[i * n + j] * mean_gh_h);
      }
    });
  }
  return Tensor::from_node(out);
}

inline Tensor layer_norm(const Tensor& x, double eps = kLayerNormEps) { return layer_norm(x, nullptr, nullptr, eps); }

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps) {
  return layer_norm(x, &gain, &bias, eps);
}

// ---------------------------------------------------------------------------
// Embeddings and loss

/// Rows of `table` [V x d] selected by ids -> [ids.size() x d].
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) fail(Errc::ShapeMismatch, "embedding table must be a matrix");
  const auto vocab = table.rows(), d = table.cols();
  for (auto id : ids)
    if (id >= vocab)
      fail(Errc::IndexOutOfVocab, "id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
  const bool rec = detail::recording({&table});
  auto out = detail::make_output({ids.size(), d}, rec);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table.data().data() + ids[r] * d, d, out->value.data() + r * d);
  if (rec) {
    Tape::active()->record([tn = table.node(), out, ids = std::vector<std::size_t>(ids.begin(), ids.end()), d] {
      if (out->grad.empty()) return;
      double* g = tn->grad_data();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) g[ids[r] * d + c] += out->grad[r * d + c];
    });
  }
  return Tensor::from_node(out);
}

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  detail::require_matrix("cross_entropy", logits);
  const auto m = logits.rows(), v = logits.cols();
  if (targets.size() != m)
    fail(Errc::ShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) + " targets for " + shape_string(logits.shape()));
  for (auto t : targets)
    if (t >= v) fail(Errc::IndexOutOfVocab, "target " + std::to_string(t) + " outside " + std::to_string(v) + " classes");
  const bool rec = detail::recording({&logits});
  auto out = detail::make_output(Shape{}, rec);
  auto probs = std::make_shared<std::vector<double>>(m * v);
  const double* z = logits.data().data();
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, z[i * v + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += ((*probs)[i * v + j] = std::exp(z[i * v + j] - mx));
    for (std::size_t j = 0; j < v; ++j) (*probs)[i * v + j] /= s;
    loss += -(z[i * v + targets[i]] - mx - std::log(s));
  }
  out->value[0] = loss / static_cast<double>(m);
  if (rec) {
    Tape::active()->record([ln = logits.node(), out, probs, tg = std::vector<std::size_t>(targets.begin(), targets.end()), m, v] {
      if (out->grad.empty()) return;
      double* g = ln->grad_data();
      const double scale_factor = out->grad[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < v; ++j) g[i * v + j] += scale_factor * (*probs)[i * v + j];
        g[i * v + tg[i]] -= scale_factor;
      }
    });
  }
  return Tensor::from_node(out);
}

}  // namespace gotcqa
