#pragma once

// Curvature-c Poincare ball {x : c |x|^2 < 1}: Mobius arithmetic,
// exponential/logarithmic maps and geodesic distance on plain vectors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace jsgnn::poincare {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Every ball-valued result is pulled back so that c |x|^2 < 1 - kMargin.
inline constexpr double kMargin = 1e-5;
/// atanh arguments are clamped below 1 by this much.
inline constexpr double kAtanhEps = 1e-15;

inline double clamped_atanh(double u) { return std::atanh(std::clamp(u, 0.0, 1.0 - kAtanhEps)); }

/// Magnitude of the (negative) sectional curvature; the ball radius is 1/sqrt(c).
class Curvature {
 public:
  explicit Curvature(double c = 1.0) : c_(c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("curvature must be a positive finite number");
  }
  double value() const noexcept { return c_; }
  double sqrt() const noexcept { return std::sqrt(c_); }
  double radius() const noexcept { return 1.0 / std::sqrt(c_); }
  bool operator==(const Curvature&) const = default;

 private:
  double c_;
};

/// Rescales v onto the norm (1 - margin)/sqrt(c) when c |v|^2 >= 1 - margin.
inline Vector project_to_ball_coords(const Vector& v, Curvature c) {
  const double sq = v.squaredNorm();
  if (c.value() * sq < 1.0 - kMargin) return v;
  const double target = (1.0 - kMargin) / c.sqrt();
  return v * (target / std::sqrt(sq));
}

/// A point strictly inside the ball, honouring the projection margin.
class BallPoint {
 public:
  /// Wraps coordinates that already satisfy the margin invariant.
  BallPoint(Vector coords, Curvature c) : coords_(std::move(coords)), c_(c) {
    if (!coords_.allFinite()) throw ValidationError("ball point has non-finite coordinates");
    if (c_.value() * coords_.squaredNorm() >= 1.0 - kMargin)
      throw ValidationError("point lies outside the ball margin; use project_to_ball");
  }

  static BallPoint origin(Eigen::Index dim, Curvature c) { return {Vector::Zero(dim), c}; }

  const Vector& coords() const noexcept { return coords_; }
  Curvature curvature() const noexcept { return c_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }
  double conformal_factor() const { return 2.0 / (1.0 - c_.value() * coords_.squaredNorm()); }

 private:
  Vector coords_;
  Curvature c_;
};

inline BallPoint project_to_ball(const Vector& v, Curvature c) { return {project_to_ball_coords(v, c), c}; }

namespace detail {

inline void require_compatible(const BallPoint& x, const BallPoint& y, const char* who) {
  if (x.dim() != y.dim()) throw ValidationError(std::string(who) + ": dimension mismatch");
  if (!(x.curvature() == y.curvature())) throw ValidationError(std::string(who) + ": curvature mismatch");
}

/// Mobius addition without the final projection.
inline Vector mobius_add_raw(const Vector& x, const Vector& y, double c) {
  const double xy = x.dot(y);
  const double x2 = x.squaredNorm();
  const double y2 = y.squaredNorm();
  const double num_x = 1.0 + 2.0 * c * xy + c * y2;
  const double num_y = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  return (num_x * x + num_y * y) / den;
}

inline Vector exp_origin_raw(const Vector& v, double c) {
  const double n = v.norm();
  if (n == 0.0) return Vector::Zero(v.size());
  const double sc = std::sqrt(c);
  return (std::tanh(sc * n) / (sc * n)) * v;
}

inline Vector log_origin_raw(const Vector& y, double c) {
  const double n = y.norm();
  if (n == 0.0) return Vector::Zero(y.size());
  const double sc = std::sqrt(c);
  return (clamped_atanh(sc * n) / (sc * n)) * y;
}

}  // namespace detail

inline BallPoint mobius_neg(const BallPoint& x) { return {-x.coords(), x.curvature()}; }

/// x (+)_c y, projected to the margin.
inline BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  detail::require_compatible(x, y, "mobius_add");
  return project_to_ball(detail::mobius_add_raw(x.coords(), y.coords(), x.curvature().value()), x.curvature());
}

/// exp_o(v) = tanh(sqrt(c)|v|) v / (sqrt(c)|v|).
inline BallPoint exp_origin(const Vector& v, Curvature c) {
  return project_to_ball(detail::exp_origin_raw(v, c.value()), c);
}

/// log_o(y) = atanh(sqrt(c)|y|) y / (sqrt(c)|y|).
inline Vector log_origin(const BallPoint& y) { return detail::log_origin_raw(y.coords(), y.curvature().value()); }

/// exp_x(v) = x (+) tanh(sqrt(c) lambda_x |v| / 2) v / (sqrt(c)|v|).
inline BallPoint exp_at(const BallPoint& x, const Vector& v) {
  if (v.size() != x.dim()) throw ValidationError("exp_at: dimension mismatch");
  const double n = v.norm();
  if (n == 0.0) return x;
  const double c = x.curvature().value();
  const double sc = std::sqrt(c);
  const Vector step = (std::tanh(sc * x.conformal_factor() * n / 2.0) / (sc * n)) * v;
  return project_to_ball(detail::mobius_add_raw(x.coords(), step, c), x.curvature());
}

/// log_x(y) = 2 / (sqrt(c) lambda_x) atanh(sqrt(c)|w|) w / |w| with w = -x (+) y.
inline Vector log_at(const BallPoint& x, const BallPoint& y) {
  detail::require_compatible(x, y, "log_at");
  if (x.coords() == y.coords()) return Vector::Zero(x.dim());
  const double c = x.curvature().value();
  const double sc = std::sqrt(c);
  const Vector w = detail::mobius_add_raw(-x.coords(), y.coords(), c);
  const double n = w.norm();
  if (n == 0.0) return Vector::Zero(x.dim());
  return (2.0 / (sc * x.conformal_factor()) * clamped_atanh(sc * n) / n) * w;
}

/// W (x)_c x = exp_o(W log_o(x)); a zero image maps to the origin exactly.
inline BallPoint mobius_matvec(const Matrix& w, const BallPoint& x) {
  if (w.cols() != x.dim()) throw ValidationError("mobius_matvec: matrix has wrong number of columns");
  const Vector image = w * log_origin(x);
  if (image.isZero(0.0)) return BallPoint::origin(w.rows(), x.curvature());
  return exp_origin(image, x.curvature());
}

/// Geodesic distance (2 / sqrt(c)) atanh(sqrt(c) |-x (+) y|).
inline double hyp_distance(const BallPoint& x, const BallPoint& y) {
  detail::require_compatible(x, y, "hyp_distance");
  if (x.coords() == y.coords()) return 0.0;
  const double c = x.curvature().value();
  const double sc = std::sqrt(c);
  const double n = detail::mobius_add_raw(-x.coords(), y.coords(), c).norm();
  return 2.0 / sc * clamped_atanh(sc * n);
}

}  // namespace jsgnn::poincare
