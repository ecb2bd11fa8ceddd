#pragma once

// Tensor-level reverse-mode differentiation. A Tape records every operation
// applied to Vars (dense double matrices); Tape::backward walks the record
// once in reverse and accumulates chain-rule contributions into each node.
//
// Elementwise binary ops broadcast: each operand dimension must equal the
// output dimension or be 1 (so 1x1 scalars, 1xd rows and nx1 columns all
// combine with nxd matrices).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace jsgnn::ad {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a node in a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; its gradient is populated by backward().
  Var leaf(Tensor value) { return push(std::move(value), true, nullptr); }
  /// Input that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }
  Var scalar_constant(double v) { return constant(Tensor::Constant(1, 1, v)); }

  Var push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back({std::move(value), Tensor(), std::move(backward), requires_grad});
    return {this, nodes_.size() - 1};
  }

  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const {
    const auto& n = nodes_.at(id);
    if (!backward_done_) throw ValidationError("gradient requested before backward()");
    return n.grad;
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds g into the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    n.grad += g;
  }

  /// Reverse sweep from a 1x1 loss. May run once per tape.
  void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ValidationError("backward() needs a scalar (1x1) loss");
    if (backward_done_) throw ValidationError("backward() already ran on this tape");
    for (auto& n : nodes_) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
    backward_done_ = true;
    nodes_[loss.id()].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || !n.backward) continue;
      if (n.grad.isZero(0.0)) continue;
      // Copy: the callback may grow nothing, but it reads other nodes by id.
      const Tensor g = n.grad;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }
inline double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw ValidationError("Var::scalar() on a non-scalar");
  return v(0, 0);
}

namespace detail {

inline std::string shape(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

inline Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ValidationError(std::string(op) + ": incompatible broadcast dimensions");
}

inline Tensor expand(const Tensor& a, Index rows, Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  if (a.size() == 1) return Tensor::Constant(rows, cols, a(0, 0));
  if (a.rows() == 1 && a.cols() == cols) return a.replicate(rows, 1);
  if (a.cols() == 1 && a.rows() == rows) return a.replicate(1, cols);
  throw ValidationError("cannot broadcast " + shape(a) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
}

/// Sums a broadcast gradient back down to the operand's shape.
inline Tensor reduce_to(const Tensor& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Tensor::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

inline bool any_grad(std::initializer_list<Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [](const Var& v) { return v.tape().requires_grad(v); });
}

inline void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ValidationError("operands live on different tapes");
}

/// Elementwise unary op with derivative expressed from (input, output).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tape& t = a.tape();
  Tensor out = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  const bool rg = t.requires_grad(a);
  const std::size_t self = t.size();
  return t.push(std::move(out), rg, [ia, self, df](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor local = x.binaryExpr(y, df);
    tp.accumulate(ia, g.cwiseProduct(local));
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tape& t = a.tape();
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "add");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "add");
  Tensor out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, detail::reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    tp.accumulate(ib, detail::reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tape& t = a.tape();
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "sub");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "sub");
  Tensor out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, detail::reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    tp.accumulate(ib, detail::reduce_to(-g, tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tape& t = a.tape();
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "mul");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "mul");
  Tensor out = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib, r, c](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    tp.accumulate(ia, detail::reduce_to(g.cwiseProduct(detail::expand(bv, r, c)), av.rows(), av.cols()));
    tp.accumulate(ib, detail::reduce_to(g.cwiseProduct(detail::expand(av, r, c)), bv.rows(), bv.cols()));
  });
}

inline Var div(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tape& t = a.tape();
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "div");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "div");
  Tensor out = detail::expand(a.value(), r, c).cwiseQuotient(detail::expand(b.value(), r, c));
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib, r, c](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    const Tensor be = detail::expand(bv, r, c);
    const Tensor ae = detail::expand(av, r, c);
    tp.accumulate(ia, detail::reduce_to(g.cwiseQuotient(be), av.rows(), av.cols()));
    tp.accumulate(ib, detail::reduce_to(-g.cwiseProduct(ae).cwiseQuotient(be.cwiseProduct(be)), bv.rows(), bv.cols()));
  });
}

inline Var scale(const Var& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var shift(const Var& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return shift(a, s); }
inline Var operator+(double s, const Var& a) { return shift(a, s); }
inline Var operator-(const Var& a, double s) { return shift(a, -s); }
inline Var operator-(double s, const Var& a) { return shift(neg(a), s); }

/// Matrix product.
inline Var matmul(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  if (a.cols() != b.rows())
    throw ValidationError("matmul: " + detail::shape(a.value()) + " times " + detail::shape(b.value()));
  Tape& t = a.tape();
  Tensor out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g * tp.value(ib).transpose());
    tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

inline Var transpose(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().transpose(), t.requires_grad(a),
                [ia](Tape& tp, const Tensor& g) { tp.accumulate(ia, g.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// sqrt with the subgradient 0 at x = 0.
inline Var sqrt(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// |x| with subgradient 0 at 0.
inline Var abs(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

/// x^p for x >= 0; derivative taken as 0 wherever p x^(p-1) is unbounded.
inline Var pow(const Var& a, double p) {
  return detail::unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (x > 0.0) return p * std::pow(x, p - 1.0);
        return p == 1.0 ? 1.0 : 0.0;
      });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(sigmoid(x)), stable for large |x|.
inline Var log_sigmoid(const Var& a) {
  return detail::unary(
      a, [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) {
        // 1 - sigmoid(x)
        if (x >= 0.0) {
          const double e = std::exp(-x);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(x));
      });
}

inline Var leaky_relu(const Var& a, double slope) {
  return detail::unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

/// Exponential-linear unit with unit slope: x for x > 0, exp(x) - 1 otherwise.
inline Var elu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

/// Clamp with zero gradient outside [lo, hi].
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline constexpr double kAtanhEps = 1e-15;

/// atanh with its argument clamped to [-(1 - 1e-15), 1 - 1e-15].
inline Var atanh(const Var& a) {
  static constexpr double hi = 1.0 - kAtanhEps;
  return detail::unary(
      a, [](double x) { return std::atanh(std::clamp(x, -hi, hi)); },
      [](double x, double) { return std::abs(x) <= hi ? 1.0 / (1.0 - x * x) : 0.0; });
}

namespace detail {

// f(s) = tanh(sqrt s) / sqrt s and g(s) = atanh(sqrt s) / sqrt s are smooth in
// s >= 0 (f = 1 - s/3 + ..., g = 1 + s/3 + ...). Working in the squared norm
// keeps exp/log maps differentiable at the origin.
inline double tanh_ratio(double s) {
  if (s < 1e-8) return 1.0 - s / 3.0 + 2.0 * s * s / 15.0;
  const double r = std::sqrt(s);
  return std::tanh(r) / r;
}

inline double tanh_ratio_deriv(double s) {
  if (s < 1e-8) return -1.0 / 3.0 + 4.0 * s / 15.0;
  const double r = std::sqrt(s);
  const double th = std::tanh(r);
  return ((1.0 - th * th) / r - th / s) / (2.0 * r);
}

inline double atanh_ratio(double s) {
  static constexpr double hi = 1.0 - kAtanhEps;
  if (s < 1e-8) return 1.0 + s / 3.0 + s * s / 5.0;
  const double r = std::min(std::sqrt(s), hi);
  return std::atanh(r) / std::sqrt(s);
}

inline double atanh_ratio_deriv(double s) {
  static constexpr double hi = 1.0 - kAtanhEps;
  if (s < 1e-8) return 1.0 / 3.0 + 2.0 * s / 5.0;
  const double r = std::sqrt(s);
  if (r > hi) return -std::atanh(hi) / (2.0 * s * r);
  return (1.0 / (1.0 - s) / r - std::atanh(r) / s) / (2.0 * r);
}

}  // namespace detail

/// tanh(sqrt s) / sqrt s, with value 1 at s = 0.
inline Var tanh_sqrt_ratio(const Var& s) {
  return detail::unary(
      s, [](double x) { return detail::tanh_ratio(std::max(x, 0.0)); },
      [](double x, double) { return detail::tanh_ratio_deriv(std::max(x, 0.0)); });
}

/// atanh(sqrt s) / sqrt s, with value 1 at s = 0 and sqrt s clamped below 1.
inline Var atanh_sqrt_ratio(const Var& s) {
  return detail::unary(
      s, [](double x) { return detail::atanh_ratio(std::max(x, 0.0)); },
      [](double x, double) { return detail::atanh_ratio_deriv(std::max(x, 0.0)); });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Var sum(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(Tensor::Constant(1, 1, a.value().sum()), t.requires_grad(a), [ia](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    tp.accumulate(ia, Tensor::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

inline Var mean(const Var& a) {
  if (a.value().size() == 0) throw ValidationError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Per-row sum: n x d -> n x 1.
inline Var row_sum(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().rowwise().sum(), t.requires_grad(a), [ia](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.replicate(1, tp.value(ia).cols()));
  });
}

inline Var row_dot(const Var& a, const Var& b) { return row_sum(mul(a, b)); }
inline Var row_sq_norm(const Var& a) { return row_sum(square(a)); }

inline Var concat_cols(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  if (a.rows() != b.rows()) throw ValidationError("concat_cols: row mismatch");
  Tape& t = a.tape();
  Tensor out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const Index ca = a.cols(), cb = b.cols();
  return t.push(std::move(out), detail::any_grad({a, b}), [ia, ib, ca, cb](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.leftCols(ca));
    tp.accumulate(ib, g.rightCols(cb));
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ValidationError("slice_rows: out of range");
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().middleRows(start, count), t.requires_grad(a),
                [ia, start, count](Tape& tp, const Tensor& g) {
                  const Tensor& av = tp.value(ia);
                  Tensor full = Tensor::Zero(av.rows(), av.cols());
                  full.middleRows(start, count) = g;
                  tp.accumulate(ia, full);
                });
}

/// out[i] = a[idx[i]] (rows); backward scatters-adds.
inline Var gather_rows(const Var& a, std::vector<std::size_t> idx) {
  Tape& t = a.tape();
  Tensor out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= static_cast<std::size_t>(a.rows())) throw ValidationError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(static_cast<Index>(idx[i]));
  }
  const std::size_t ia = a.id();
  return t.push(std::move(out), t.requires_grad(a), [ia, idx = std::move(idx)](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    Tensor full = Tensor::Zero(av.rows(), av.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(static_cast<Index>(idx[i])) += g.row(static_cast<Index>(i));
    tp.accumulate(ia, full);
  });
}

/// out[s] = sum of rows i with seg[i] == s; out has `segments` rows.
inline Var segment_sum(const Var& a, std::vector<std::size_t> seg, std::size_t segments) {
  if (seg.size() != static_cast<std::size_t>(a.rows())) throw ValidationError("segment_sum: segment ids size");
  Tape& t = a.tape();
  Tensor out = Tensor::Zero(static_cast<Index>(segments), a.cols());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] >= segments) throw ValidationError("segment_sum: segment id out of range");
    out.row(static_cast<Index>(seg[i])) += a.value().row(static_cast<Index>(i));
  }
  const std::size_t ia = a.id();
  return t.push(std::move(out), t.requires_grad(a), [ia, seg = std::move(seg)](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    Tensor local(av.rows(), av.cols());
    for (std::size_t i = 0; i < seg.size(); ++i) local.row(static_cast<Index>(i)) = g.row(static_cast<Index>(seg[i]));
    tp.accumulate(ia, local);
  });
}

/// Softmax of an m x 1 score column within each segment (edge softmax over
/// the neighbour list of each aggregating node). Every segment id in `seg`
/// must be < segments.
inline Var segment_softmax(const Var& e, std::vector<std::size_t> seg, std::size_t segments) {
  if (e.cols() != 1 || seg.size() != static_cast<std::size_t>(e.rows()))
    throw ValidationError("segment_softmax expects an m x 1 column with m segment ids");
  Tape& t = e.tape();
  const auto m = static_cast<Index>(seg.size());
  std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
  for (Index i = 0; i < m; ++i) mx[seg[i]] = std::max(mx[seg[i]], e.value()(i, 0));
  Tensor out(m, 1);
  std::vector<double> z(segments, 0.0);
  for (Index i = 0; i < m; ++i) {
    out(i, 0) = std::exp(e.value()(i, 0) - mx[seg[i]]);
    z[seg[i]] += out(i, 0);
  }
  for (Index i = 0; i < m; ++i) out(i, 0) /= z[seg[i]];
  const std::size_t ie = e.id();
  const std::size_t self = t.size();
  return t.push(std::move(out), t.requires_grad(e),
                [ie, self, segments, seg = std::move(seg)](Tape& tp, const Tensor& g) {
                  const Tensor& y = tp.value(self);
                  std::vector<double> dot(segments, 0.0);
                  for (std::size_t i = 0; i < seg.size(); ++i)
                    dot[seg[i]] += g(static_cast<Index>(i), 0) * y(static_cast<Index>(i), 0);
                  Tensor local(y.rows(), 1);
                  for (std::size_t i = 0; i < seg.size(); ++i) {
                    const auto r = static_cast<Index>(i);
                    local(r, 0) = y(r, 0) * (g(r, 0) - dot[seg[i]]);
                  }
                  tp.accumulate(ie, local);
                });
}

/// Row-wise log-softmax.
inline Var log_softmax_rows(const Var& a) {
  Tape& t = a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  const std::size_t ia = a.id();
  const std::size_t self = t.size();
  return t.push(std::move(out), t.requires_grad(a), [ia, self](Tape& tp, const Tensor& g) {
    const Tensor p = tp.value(self).array().exp();
    const Tensor gsum = g.rowwise().sum();
    tp.accumulate(ia, g - p.cwiseProduct(gsum.replicate(1, g.cols())));
  });
}

/// out[i] = a(rows[i], cols[i]) as an m x 1 column.
inline Var pick(const Var& a, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  if (rows.size() != cols.size()) throw ValidationError("pick: index lists differ in length");
  Tape& t = a.tape();
  Tensor out(static_cast<Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(a.rows()) || cols[i] >= static_cast<std::size_t>(a.cols()))
      throw ValidationError("pick: index out of range");
    out(static_cast<Index>(i), 0) = a.value()(static_cast<Index>(rows[i]), static_cast<Index>(cols[i]));
  }
  const std::size_t ia = a.id();
  return t.push(std::move(out), t.requires_grad(a),
                [ia, rows = std::move(rows), cols = std::move(cols)](Tape& tp, const Tensor& g) {
                  const Tensor& av = tp.value(ia);
                  Tensor full = Tensor::Zero(av.rows(), av.cols());
                  for (std::size_t i = 0; i < rows.size(); ++i)
                    full(static_cast<Index>(rows[i]), static_cast<Index>(cols[i])) += g(static_cast<Index>(i), 0);
                  tp.accumulate(ia, full);
                });
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Largest entrywise relative error |a - n| / max(|a|, |n|, floor) between an
/// analytic gradient and a central difference of step h.
struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

inline constexpr double kGradCheckFloor = 1e-6;

/// `loss_fn` evaluates the scalar loss for a full parameter list; `analytic`
/// holds its gradient at `params`. Every entry of every parameter is probed.
template <typename LossFn>
GradCheck finite_diff_check(LossFn&& loss_fn, std::vector<Tensor> params, const std::vector<Tensor>& analytic,
                            double h = 1e-5) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw ValidationError("finite_diff_check: step must lie in [1e-6, 1e-4]");
  if (params.size() != analytic.size()) throw ValidationError("finite_diff_check: gradient list size mismatch");
  GradCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Index k = 0; k < params[p].size(); ++k) {
      const double orig = params[p].data()[k];
      params[p].data()[k] = orig + h;
      const double up = loss_fn(params);
      params[p].data()[k] = orig - h;
      const double down = loss_fn(params);
      params[p].data()[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].data()[k];
      const double err = std::abs(a - numeric);
      out.max_abs_error = std::max(out.max_abs_error, err);
      out.max_rel_error =
          std::max(out.max_rel_error, err / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor}));
      ++out.entries;
    }
  }
  return out;
}

}  // namespace jsgnn::ad
