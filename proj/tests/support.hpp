#pragma once

// Shared helpers for the test binaries: random tensors, gradient checks over
// arbitrary tape builders, and small synthetic tasks.

#include <functional>
#include <random>
#include <vector>

#include <jsgnn/jsgnn.hpp>

namespace testing_support {

using jsgnn::ad::GradCheck;
using jsgnn::ad::Tape;
using jsgnn::ad::Tensor;
using jsgnn::ad::Var;

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

/// Analytic gradient of `build` at `params` versus central differences.
inline GradCheck gradient_check(const Builder& build, const std::vector<Tensor>& params, double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  const Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> grads;
  for (const auto& l : leaves) grads.push_back(l.grad());
  auto eval = [&build](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Var> ls;
    for (const auto& p : ps) ls.push_back(t.constant(p));
    return build(t, ls).scalar();
  };
  return jsgnn::ad::finite_diff_check(eval, params, grads, h);
}

/// Gradient check of a whole model loss over every parameter of `ps`.
/// `loss_of` maps bound parameter Vars to the scalar loss.
inline GradCheck model_gradient_check(
    const jsgnn::ParamSet& ps,
    const std::function<Var(Tape&, const std::map<std::string, Var>&)>& loss_of, double h = 1e-5) {
  const auto names = ps.names();
  std::vector<Tensor> params;
  for (const auto& n : names) params.push_back(ps.at(n));
  auto build = [&](Tape& t, const std::vector<Var>& vs) {
    std::map<std::string, Var> vars;
    for (std::size_t i = 0; i < names.size(); ++i) vars[names[i]] = vs[i];
    return loss_of(t, vars);
  };
  return gradient_check(build, params, h);
}

/// Random connected graph with n nodes and a few chords, unit weights.
inline jsgnn::WeightedGraph small_graph(std::size_t n, std::mt19937_64& rng) {
  return jsgnn::random_connected_graph(n, n / 2, rng);
}

/// Reference lattice+tree graph labelled by region (0 lattice, 1 tree), no features.
inline jsgnn::WeightedGraph labelled_reference() {
  auto g = jsgnn::reference_combined_graph();
  std::vector<int> labels(g.num_nodes());
  for (std::size_t v = 0; v < labels.size(); ++v) labels[v] = v < jsgnn::kReferenceLatticeNodes ? 0 : 1;
  g.set_labels(labels);
  return g;
}

/// Reference lattice+tree graph with region labels and noisy 8-dim
/// class-indicator features (dims 0-3 light up for lattice, 4-7 for tree).
inline jsgnn::WeightedGraph planted_combined_task(std::uint64_t seed, double noise = 0.5) {
  auto g = jsgnn::reference_combined_graph();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise);
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd x(n, 8);
  std::vector<int> labels(g.num_nodes());
  for (Eigen::Index v = 0; v < n; ++v) {
    const int cls = static_cast<std::size_t>(v) < jsgnn::kReferenceLatticeNodes ? 0 : 1;
    labels[static_cast<std::size_t>(v)] = cls;
    for (Eigen::Index j = 0; j < 8; ++j) x(v, j) = (j / 4 == cls ? 1.0 : 0.0) + gauss(rng);
  }
  g.set_features(x);
  g.set_labels(labels);
  return g;
}

}  // namespace testing_support
