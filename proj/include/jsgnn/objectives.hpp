#pragma once

// Loss terms: 1D Wasserstein on sorted samples, non-uniformity of the space
// selection weights, task losses and the composite training objective.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "hyperbolicity.hpp"

namespace jsgnn {

using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Wasserstein

namespace detail {

inline void require_order(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw ValidationError("Wasserstein order p must be a finite value >= 1");
}

/// Quantile of sorted samples at u in (0,1) under the midpoint convention:
/// sample i sits at (i + 0.5)/n, linear in between, flat beyond the ends.
inline double midpoint_quantile(const std::vector<double>& sorted, double u) {
  const double pos = u * static_cast<double>(sorted.size()) - 0.5;
  if (pos <= 0.0) return sorted.front();
  const auto last = static_cast<double>(sorted.size() - 1);
  if (pos >= last) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Indices of `v` ordered by value, ties broken by index.
inline std::vector<std::size_t> rank_order(const double* v, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace detail

/// m equally spaced points (i + 0.5)/m standing in for Unif[0,1].
inline std::vector<double> uniform_reference(std::size_t m) {
  std::vector<double> u(m);
  for (std::size_t i = 0; i < m; ++i) u[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
  return u;
}

/// W_p between two empirical distributions on the line. Equal sizes pair
/// sorted samples by rank; unequal sizes compare m = max(|a|,|b|) midpoint
/// quantiles.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b, double p = 2.0) {
  detail::require_order(p);
  if (a.empty() || b.empty()) throw ValidationError("wasserstein_1d: sample lists must be non-empty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() != b.size()) {
    const std::size_t m = std::max(a.size(), b.size());
    std::vector<double> qa(m), qb(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
      qa[i] = detail::midpoint_quantile(a, u);
      qb[i] = detail::midpoint_quantile(b, u);
    }
    a = std::move(qa);
    b = std::move(qb);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(acc / static_cast<double>(a.size()), 1.0 / p);
}

/// Differentiable W_p between an n x 1 column and a fixed sample list of the
/// same length. The sort permutation is treated as a constant.
inline Var wasserstein_1d(const Var& a, std::vector<double> b, double p = 2.0) {
  detail::require_order(p);
  if (a.cols() != 1) throw ValidationError("wasserstein_1d: expected an n x 1 column");
  if (a.rows() == 0 || b.empty()) throw ValidationError("wasserstein_1d: sample lists must be non-empty");
  if (static_cast<std::size_t>(a.rows()) != b.size())
    throw ValidationError("wasserstein_1d: differentiable path needs equal sample counts");
  std::sort(b.begin(), b.end());
  const auto order = detail::rank_order(a.value().data(), b.size());
  ad::Tape& t = a.tape();
  const Var diff = ad::sub(ad::gather_rows(a, order), t.constant(Eigen::Map<const Tensor>(b.data(), a.rows(), 1)));
  const Var cost = p == 2.0 ? ad::square(diff) : ad::pow(ad::abs(diff), p);
  return ad::pow(ad::mean(cost), 1.0 / p);
}

// ---------------------------------------------------------------------------
// Geometric hyperbolicity as a [0,1] target

/// delta_v / max_u delta_u; an all-zero profile stays all-zero.
inline std::vector<double> normalize_delta(const std::vector<double>& delta) {
  if (delta.empty()) throw ValidationError("normalize_delta: empty profile");
  const double mx = *std::max_element(delta.begin(), delta.end());
  std::vector<double> out(delta.size(), 0.0);
  if (mx > 0.0)
    for (std::size_t i = 0; i < delta.size(); ++i) out[i] = delta[i] / mx;
  return out;
}

inline std::vector<double> normalize_delta(const HyperbolicityProfile& profile) {
  return normalize_delta(profile.delta);
}

// ---------------------------------------------------------------------------
// Non-uniformity

/// -(1/|V|) sum_v (beta_r^2 + beta_d^2), in [-1, -0.5] when beta_r + beta_d = 1.
inline Var non_uniformity_loss(const Var& beta_r, const Var& beta_d) {
  if (beta_r.rows() != beta_d.rows() || beta_r.cols() != beta_d.cols())
    throw ValidationError("non_uniformity_loss: shape mismatch");
  return ad::neg(ad::mean(ad::add(ad::square(beta_r), ad::square(beta_d))));
}

inline double non_uniformity_loss(const std::vector<double>& beta_r, const std::vector<double>& beta_d) {
  if (beta_r.size() != beta_d.size() || beta_r.empty())
    throw ValidationError("non_uniformity_loss: lists must be non-empty and equal in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < beta_r.size(); ++i) acc += beta_r[i] * beta_r[i] + beta_d[i] * beta_d[i];
  return -acc / static_cast<double>(beta_r.size());
}

// ---------------------------------------------------------------------------
// Task losses

/// Mean negative log-likelihood of the true class over masked nodes.
inline Var cross_entropy_nc(const Var& logits, const std::vector<int>& labels, const std::vector<std::size_t>& mask) {
  if (mask.empty()) throw ValidationError("cross_entropy_nc: empty mask");
  std::vector<std::size_t> cols;
  cols.reserve(mask.size());
  for (auto v : mask) {
    if (v >= labels.size()) throw ValidationError("cross_entropy_nc: masked node has no label");
    if (labels[v] < 0 || labels[v] >= logits.cols())
      throw ValidationError("cross_entropy_nc: label outside [0, C)");
    cols.push_back(static_cast<std::size_t>(labels[v]));
  }
  return ad::neg(ad::mean(ad::pick(ad::log_softmax_rows(logits), mask, std::move(cols))));
}

struct FermiDiracParams {
  double r = 2.0;
  double t = 1.0;

  void validate() const {
    if (!(r > 0.0) || !(t > 0.0) || !std::isfinite(r) || !std::isfinite(t))
      throw ValidationError("Fermi-Dirac parameters r and t must be positive");
  }
};

/// 1 / (exp((d - r)/t) + 1).
inline double fermi_dirac_prob(double d, const FermiDiracParams& p = {}) {
  p.validate();
  return 1.0 / (std::exp((d - p.r) / p.t) + 1.0);
}

using NodePair = std::pair<NodeId, NodeId>;

namespace detail {

/// Euclidean distances between paired rows of z, as an m x 1 column.
inline Var pair_distances(const Var& z, const std::vector<NodePair>& pairs) {
  std::vector<std::size_t> u, v;
  u.reserve(pairs.size());
  v.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    u.push_back(a);
    v.push_back(b);
  }
  return ad::sqrt(ad::row_sq_norm(ad::sub(ad::gather_rows(z, std::move(u)), ad::gather_rows(z, std::move(v)))));
}

}  // namespace detail

/// Edge probabilities under the Fermi-Dirac decoder on Euclidean distance.
inline std::vector<double> edge_scores(const Tensor& z, const std::vector<NodePair>& pairs,
                                       const FermiDiracParams& p = {}) {
  std::vector<double> s;
  s.reserve(pairs.size());
  for (const auto& [a, b] : pairs)
    s.push_back(fermi_dirac_prob((z.row(static_cast<Eigen::Index>(a)) - z.row(static_cast<Eigen::Index>(b))).norm(), p));
  return s;
}

/// Binary cross-entropy of Fermi-Dirac probabilities, positives labelled 1 and
/// negatives 0, averaged over all pairs.
inline Var lp_loss(const Var& z, const std::vector<NodePair>& pos, const std::vector<NodePair>& neg,
                   const FermiDiracParams& p = {}) {
  p.validate();
  if (pos.empty() || neg.empty()) throw ValidationError("lp_loss: edge sets must be non-empty");
  // log P = log_sigmoid((r - d)/t); log(1 - P) = log_sigmoid((d - r)/t).
  const Var lp = ad::log_sigmoid(ad::scale(ad::shift(ad::neg(detail::pair_distances(z, pos)), p.r), 1.0 / p.t));
  const Var ln = ad::log_sigmoid(ad::scale(ad::shift(detail::pair_distances(z, neg), -p.r), 1.0 / p.t));
  const double total = static_cast<double>(pos.size() + neg.size());
  return ad::scale(ad::add(ad::sum(lp), ad::sum(ln)), -1.0 / total);
}

// ---------------------------------------------------------------------------
// Composite objective

/// How the learned Euclidean weights beta_r are matched to normalised delta.
enum class ComparisonMode { distribution, pairwise, mean };

inline std::string to_string(ComparisonMode m) {
  switch (m) {
    case ComparisonMode::distribution: return "distribution";
    case ComparisonMode::pairwise: return "pairwise";
    case ComparisonMode::mean: return "mean";
  }
  return "distribution";
}

inline ComparisonMode comparison_mode_from_string(const std::string& s) {
  if (s == "distribution") return ComparisonMode::distribution;
  if (s == "pairwise") return ComparisonMode::pairwise;
  if (s == "mean") return ComparisonMode::mean;
  throw ValidationError("unknown comparison mode '" + s + "' (expected distribution, pairwise or mean)");
}

struct LossWeights {
  double omega_nu = 0.0;
  double omega_was = 0.0;
  double p = 2.0;
  ComparisonMode mode = ComparisonMode::distribution;

  void validate() const {
    if (!(omega_nu >= 0.0) || !(omega_was >= 0.0) || !std::isfinite(omega_nu) || !std::isfinite(omega_was))
      throw ValidationError("loss weights must be finite and nonnegative");
    detail::require_order(p);
  }
};

/// Alignment between one layer's beta_r and the geometric target.
inline Var alignment_loss(const Var& beta_r, const std::vector<double>& mu, const LossWeights& w) {
  if (static_cast<std::size_t>(beta_r.rows()) != mu.size() || beta_r.cols() != 1)
    throw ValidationError("alignment_loss: beta and mu lengths differ");
  switch (w.mode) {
    case ComparisonMode::distribution: return wasserstein_1d(beta_r, mu, w.p);
    case ComparisonMode::pairwise: {
      const Var target = beta_r.tape().constant(Eigen::Map<const Tensor>(mu.data(), beta_r.rows(), 1));
      return ad::mean(ad::square(ad::sub(beta_r, target)));
    }
    case ComparisonMode::mean: {
      const double mu_mean = std::accumulate(mu.begin(), mu.end(), 0.0) / static_cast<double>(mu.size());
      return ad::square(ad::shift(ad::mean(beta_r), -mu_mean));
    }
  }
  throw ValidationError("alignment_loss: invalid mode");
}

struct LossTerms {
  Var total;
  Var task;
  Var nu;     // layer-averaged non-uniformity
  Var align;  // layer-averaged alignment (W_p in distribution mode)
};

/// L = L_task + omega_nu * mean_l L_nu(l) + omega_was * mean_l align(l).
inline LossTerms overall_loss(const Var& task, const std::vector<Var>& beta_r, const std::vector<Var>& beta_d,
                              const std::vector<double>& mu, const LossWeights& w) {
  w.validate();
  if (beta_r.empty() || beta_r.size() != beta_d.size()) throw ValidationError("overall_loss: bad beta record");
  if (task.rows() != 1 || task.cols() != 1) throw ValidationError("overall_loss: task loss must be scalar");
  Var nu = non_uniformity_loss(beta_r[0], beta_d[0]);
  Var align = alignment_loss(beta_r[0], mu, w);
  for (std::size_t l = 1; l < beta_r.size(); ++l) {
    nu = ad::add(nu, non_uniformity_loss(beta_r[l], beta_d[l]));
    align = ad::add(align, alignment_loss(beta_r[l], mu, w));
  }
  const double inv = 1.0 / static_cast<double>(beta_r.size());
  nu = ad::scale(nu, inv);
  align = ad::scale(align, inv);
  const Var total = ad::add(ad::add(task, ad::scale(nu, w.omega_nu)), ad::scale(align, w.omega_was));
  return {total, task, nu, align};
}

}  // namespace jsgnn
