#pragma once

// Joint Euclidean/hyperbolic attention network: a GAT branch, a Poincare-ball
// GAT branch and a per-node space-selection fusion, stacked into layers.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "poincare.hpp"

namespace jsgnn {

using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Differentiable ball operations (row-wise, curvature as a 1x1 Var)

namespace ball {

/// Row-wise projection onto c |x|^2 < 1 - margin (see poincare::kMargin).
inline Var project(const Var& x, const Var& c) {
  ad::Tape& t = x.tape();
  const double cv = c.scalar();
  const double r = (1.0 - poincare::kMargin) / std::sqrt(cv);
  Tensor out = x.value();
  std::vector<Eigen::Index> clipped;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double sq = out.row(i).squaredNorm();
    if (cv * sq >= 1.0 - poincare::kMargin) {
      out.row(i) *= r / std::sqrt(sq);
      clipped.push_back(i);
    }
  }
  const std::size_t ix = x.id(), ic = c.id();
  const bool rg = t.requires_grad(x) || t.requires_grad(c);
  return t.push(std::move(out), rg, [ix, ic, r, cv, clipped = std::move(clipped)](ad::Tape& tp, const Tensor& g) {
    Tensor gx = g;
    double gc = 0.0;
    const Tensor& xv = tp.value(ix);
    for (auto i : clipped) {
      const double norm = xv.row(i).norm();
      const Eigen::RowVectorXd unit = xv.row(i) / norm;
      const double along = g.row(i).dot(unit);
      gx.row(i) = (r / norm) * (g.row(i) - along * unit);
      gc += along * (-r / (2.0 * cv));
    }
    tp.accumulate(ix, gx);
    tp.accumulate(ic, Tensor::Constant(1, 1, gc));
  });
}

/// exp_o applied to each row of a tangent matrix, then projected.
inline Var exp_origin(const Var& v, const Var& c) {
  const Var s = ad::mul(ad::row_sq_norm(v), c);
  return project(ad::mul(v, ad::tanh_sqrt_ratio(s)), c);
}

/// log_o applied to each row of a ball matrix.
inline Var log_origin(const Var& y, const Var& c) {
  const Var s = ad::mul(ad::row_sq_norm(y), c);
  return ad::mul(y, ad::atanh_sqrt_ratio(s));
}

/// Mobius addition without projection; y may be a single broadcast row.
inline Var mobius_add_raw(const Var& x, const Var& y, const Var& c) {
  const Var xy = ad::row_dot(x, y);
  const Var x2 = ad::row_sq_norm(x);
  const Var y2 = ad::row_sq_norm(y);
  const Var two_c_xy = ad::scale(ad::mul(c, xy), 2.0);
  const Var num_x = ad::add(ad::shift(two_c_xy, 1.0), ad::mul(c, y2));
  const Var num_y = 1.0 - ad::mul(c, x2);
  const Var den = ad::add(ad::shift(two_c_xy, 1.0), ad::mul(ad::mul(ad::square(c), x2), y2));
  return ad::div(ad::add(ad::mul(x, num_x), ad::mul(y, num_y)), den);
}

inline Var mobius_add(const Var& x, const Var& y, const Var& c) { return project(mobius_add_raw(x, y, c), c); }

/// W (x)_c x for each row x: exp_o(log_o(x) W^T).
inline Var mobius_matvec(const Var& w, const Var& x, const Var& c) {
  return exp_origin(ad::matmul(log_origin(x, c), ad::transpose(w)), c);
}

/// Row-wise geodesic distance (2/sqrt c) atanh(sqrt c |-x (+) y|) as an m x 1 column.
inline Var distance(const Var& x, const Var& y, const Var& c) {
  const Var w = mobius_add_raw(ad::neg(x), y, c);
  const Var s = ad::mul(ad::row_sq_norm(w), c);
  // atanh(sqrt s) = sqrt s * atanh_ratio(s); sqrt has subgradient 0 at 0.
  return ad::div(ad::scale(ad::mul(ad::sqrt(s), ad::atanh_sqrt_ratio(s)), 2.0), ad::sqrt(c));
}

}  // namespace ball

// ---------------------------------------------------------------------------
// Graph context for attention

/// Aggregation lists: entry i says node `target[i]` receives from `source[i]`.
struct AttentionGraph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> target;
  std::vector<std::size_t> source;
};

/// Neighbour lists in ascending order, each node's own entry first when self
/// loops are added.
inline AttentionGraph attention_graph(const WeightedGraph& g, bool self_loops = true) {
  AttentionGraph a;
  a.num_nodes = g.num_nodes();
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (self_loops) {
      a.target.push_back(v);
      a.source.push_back(v);
    } else if (g.degree(v) == 0) {
      throw DomainError("node " + std::to_string(v) + " has no neighbours and self-loops are disabled");
    }
    for (const auto& nb : g.neighbors(v)) {
      a.target.push_back(v);
      a.source.push_back(nb.node);
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Blocks

inline constexpr double kLeakySlope = 0.2;

/// Training-time randomness; a null rng or zero rate disables dropout.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }

  Var apply(const Var& x) const {
    if (!active()) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    Tensor mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
    return ad::mul(x, x.tape().constant(std::move(mask)));
  }
};

struct GatWeights {
  Var w;  // out x in
  Var a;  // 2*out x 1
};

struct HgatWeights {
  Var w;  // out x in
  Var b;  // 1 x out, Euclidean; mapped into the ball by exp_o
  Var a;  // 2*out x 1
  Var c;  // 1 x 1 curvature
};

struct FusionWeights {
  Var m;  // q_dim x hidden
  Var b;  // 1 x q_dim
  Var q;  // q_dim x 1
};

struct AttentionOutput {
  Var out;    // n x out (Euclidean branch) or tangent output (hyperbolic branch)
  Var alpha;  // m x 1 normalised attention, aligned with AttentionGraph entries
  Var logits;  // m x 1 scores before LeakyReLU
};

struct HgatOutput {
  Var tangent;  // elu(sum_j alpha_vj log_o(m_j)), lives at the origin's tangent space
  Var ball;     // exp_o(tangent)
  Var alpha;
  Var logits;   // m x 1 scores before LeakyReLU; exactly 0 on self entries
};

struct FusionOutput {
  Var z;       // n x hidden
  Var beta_r;  // n x 1, weight on the Euclidean branch
  Var beta_d;  // n x 1, weight on the hyperbolic branch
  Var w_r;
  Var w_d;
};

namespace detail {

inline void check_attention_vector(const Var& a, Eigen::Index out, const char* who) {
  if (a.rows() != 2 * out || a.cols() != 1)
    throw ValidationError(std::string(who) + ": attention vector must be (2*out) x 1");
}

inline Var split_score(const Var& h, const Var& a, Eigen::Index out, bool second) {
  return ad::matmul(h, ad::slice_rows(a, second ? out : 0, out));
}

}  // namespace detail

/// One GAT layer: e_vj = LeakyReLU(a^T [W h_v || W h_j]), alpha = softmax over
/// N(v), h'_v = elu(sum_j alpha_vj W h_j).
inline AttentionOutput gat_forward(const Var& h, const AttentionGraph& g, const GatWeights& p,
                                   double slope = kLeakySlope, const Dropout& drop = {}) {
  if (h.cols() != p.w.cols()) throw ValidationError("gat_forward: feature width does not match W");
  if (static_cast<std::size_t>(h.rows()) != g.num_nodes) throw ValidationError("gat_forward: row count mismatch");
  const Eigen::Index out = p.w.rows();
  detail::check_attention_vector(p.a, out, "gat_forward");
  const Var wh = ad::matmul(h, ad::transpose(p.w));
  const Var s_self = detail::split_score(wh, p.a, out, false);
  const Var s_nb = detail::split_score(wh, p.a, out, true);
  const Var logits = ad::add(ad::gather_rows(s_self, g.target), ad::gather_rows(s_nb, g.source));
  const Var alpha = ad::segment_softmax(ad::leaky_relu(logits, slope), g.target, g.num_nodes);
  const Var msgs = ad::mul(ad::gather_rows(wh, g.source), drop.apply(alpha));
  return {ad::elu(ad::segment_sum(msgs, g.target, g.num_nodes)), alpha, logits};
}

/// One hyperbolic GAT layer on ball-valued rows h:
///   m_j = (W (x)_c h_j) (+)_c exp_o(b),  hat_j = log_o(W (x)_c h_j),
///   e_vj = LeakyReLU(a^T [hat_v || hat_j] * d_c(h_v, h_j)),
///   out_v = elu(sum_j alpha_vj log_o(m_j)).
inline HgatOutput hgat_forward(const Var& h, const AttentionGraph& g, const HgatWeights& p,
                               double slope = kLeakySlope, const Dropout& drop = {}) {
  if (h.cols() != p.w.cols()) throw ValidationError("hgat_forward: feature width does not match W");
  if (static_cast<std::size_t>(h.rows()) != g.num_nodes) throw ValidationError("hgat_forward: row count mismatch");
  const Eigen::Index out = p.w.rows();
  detail::check_attention_vector(p.a, out, "hgat_forward");
  if (p.b.rows() != 1 || p.b.cols() != out) throw ValidationError("hgat_forward: bias must be 1 x out");

  const Var wh = ball::mobius_matvec(p.w, h, p.c);
  const Var hat = ball::log_origin(wh, p.c);
  const Var msg = ball::mobius_add(wh, ball::exp_origin(p.b, p.c), p.c);
  const Var log_msg = ball::log_origin(msg, p.c);

  // Self entries have distance exactly 0; only the others go through sqrt.
  std::vector<std::size_t> cross, cross_t, cross_s;
  for (std::size_t i = 0; i < g.target.size(); ++i)
    if (g.target[i] != g.source[i]) {
      cross.push_back(i);
      cross_t.push_back(g.target[i]);
      cross_s.push_back(g.source[i]);
    }
  const Var dist =
      cross.empty()
          ? h.tape().constant(Tensor::Zero(static_cast<Eigen::Index>(g.target.size()), 1))
          : ad::segment_sum(ball::distance(ad::gather_rows(h, cross_t), ad::gather_rows(h, cross_s), p.c), cross,
                            g.target.size());
  const Var s_self = detail::split_score(hat, p.a, out, false);
  const Var s_nb = detail::split_score(hat, p.a, out, true);
  const Var score = ad::add(ad::gather_rows(s_self, g.target), ad::gather_rows(s_nb, g.source));
  const Var logits = ad::mul(score, dist);
  const Var alpha = ad::segment_softmax(ad::leaky_relu(logits, slope), g.target, g.num_nodes);
  const Var agg = ad::segment_sum(ad::mul(ad::gather_rows(log_msg, g.source), drop.apply(alpha)), g.target,
                                  g.num_nodes);
  const Var tangent = ad::elu(agg);
  return {tangent, ball::exp_origin(tangent, p.c), alpha, logits};
}

/// Space selection: w = q^T tanh(M z + b) on each branch's tangent output,
/// beta = two-way softmax, z = beta_r z_r + beta_d log_o(z_d).
inline FusionOutput fusion_forward(const Var& z_r, const Var& z_d_ball, const Var& c, const FusionWeights& p) {
  if (z_r.rows() != z_d_ball.rows() || z_r.cols() != z_d_ball.cols())
    throw ValidationError("fusion_forward: branch outputs differ in shape");
  if (p.m.cols() != z_r.cols() || p.b.cols() != p.m.rows() || p.q.rows() != p.m.rows())
    throw ValidationError("fusion_forward: parameter shapes do not chain");
  const Var z_d = ball::log_origin(z_d_ball, c);
  const Var mt = ad::transpose(p.m);
  const Var w_r = ad::matmul(ad::tanh(ad::add(ad::matmul(z_r, mt), p.b)), p.q);
  const Var w_d = ad::matmul(ad::tanh(ad::add(ad::matmul(z_d, mt), p.b)), p.q);
  const Var beta_r = ad::sigmoid(ad::sub(w_r, w_d));
  const Var beta_d = 1.0 - beta_r;
  const Var z = ad::add(ad::mul(z_r, beta_r), ad::mul(z_d, beta_d));
  return {z, beta_r, beta_d, w_r, w_d};
}

// ---------------------------------------------------------------------------
// Parameters

/// Named parameter tensors in a fixed (lexicographic) order.
class ParamSet {
 public:
  Tensor& operator[](const std::string& name) { return params_[name]; }
  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += static_cast<std::size_t>(t.size());
    return n;
  }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
  }

  bool operator==(const ParamSet& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (const auto& [k, v] : params_) {
      auto it = o.params_.find(k);
      if (it == o.params_.end() || it->second.rows() != v.rows() || it->second.cols() != v.cols() ||
          it->second != v)
        return false;
    }
    return true;
  }

 private:
  std::map<std::string, Tensor> params_;
};

/// Checkpoint format: {"name": {"shape": [rows, cols], "values": [row-major]}}.
inline nlohmann::json to_json(const ParamSet& ps) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : ps) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) values.push_back(t(r, c));
    j[name] = {{"shape", {t.rows(), t.cols()}}, {"values", values}};
  }
  return j;
}

inline ParamSet params_from_json(const nlohmann::json& j) {
  ParamSet ps;
  try {
    for (const auto& [name, entry] : j.items()) {
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      const auto values = entry.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
          static_cast<std::size_t>(shape[0] * shape[1]) != values.size())
        throw ParseError("checkpoint: shape of '" + name + "' does not match its values");
      Tensor t(shape[0], shape[1]);
      for (Eigen::Index r = 0; r < shape[0]; ++r)
        for (Eigen::Index c = 0; c < shape[1]; ++c) t(r, c) = values[static_cast<std::size_t>(r * shape[1] + c)];
      ps[name] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Model

struct ModelConfig {
  std::size_t in_dim = 0;
  std::size_t hidden = 16;
  std::size_t layers = 2;
  std::size_t q_dim = 16;
  /// Width of the linear classification head; 0 means no head (link prediction).
  std::size_t num_classes = 0;
  double curvature = 1.0;
  bool trainable_curvature = false;
  double leaky_slope = kLeakySlope;
  double dropout = 0.0;

  void validate() const {
    if (in_dim == 0 || hidden == 0 || q_dim == 0) throw ValidationError("model dimensions must be positive");
    if (layers == 0) throw ValidationError("model needs at least one layer");
    if (!(curvature > 0.0)) throw ValidationError("curvature must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  }
};

inline std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

/// Glorot-uniform weights, zero biases, curvature at its configured value.
inline ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    return t;
  };
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  const auto q = static_cast<Eigen::Index>(cfg.q_dim);
  ParamSet ps;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? cfg.in_dim : cfg.hidden);
    const std::string p = layer_prefix(l);
    ps[p + "gat.W"] = glorot(h, in);
    ps[p + "gat.a"] = glorot(2 * h, 1);
    ps[p + "hgat.W"] = glorot(h, in);
    ps[p + "hgat.a"] = glorot(2 * h, 1);
    ps[p + "hgat.b"] = Tensor::Zero(1, h);
    ps[p + "hgat.c"] = Tensor::Constant(1, 1, cfg.curvature);
    ps[p + "fusion.M"] = glorot(q, h);
    ps[p + "fusion.b"] = Tensor::Zero(1, q);
    ps[p + "fusion.q"] = glorot(q, 1);
  }
  if (cfg.num_classes > 0) {
    ps["decoder.W"] = glorot(static_cast<Eigen::Index>(cfg.num_classes), h);
    ps["decoder.b"] = Tensor::Zero(1, static_cast<Eigen::Index>(cfg.num_classes));
  }
  return ps;
}

/// Whether the optimizer should update this parameter.
inline bool is_trainable(const std::string& name, const ModelConfig& cfg) {
  const bool is_curvature = name.size() >= 7 && name.compare(name.size() - 7, 7, ".hgat.c") == 0;
  return !is_curvature || cfg.trainable_curvature;
}

/// Tape leaves for every parameter (curvatures become constants unless trainable).
inline std::map<std::string, Var> bind_params(ad::Tape& tape, const ParamSet& ps, const ModelConfig& cfg) {
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : ps) vars[name] = is_trainable(name, cfg) ? tape.leaf(t) : tape.constant(t);
  return vars;
}

struct ModelOutput {
  Var z;                      // final combined embedding, n x hidden
  std::optional<Var> logits;  // n x num_classes when a head is configured
  std::vector<Var> beta_r;    // per layer, n x 1
  std::vector<Var> beta_d;
  std::vector<Var> gat_logits;   // per layer, pre-LeakyReLU attention scores
  std::vector<Var> hgat_logits;
};

/// Stacked forward pass. Layer l reads the previous combined embedding z
/// directly on the Euclidean branch and exp_o(z) on the hyperbolic branch;
/// the first layer starts from the raw features and exp_o(features).
inline ModelOutput jsgnn_forward(ad::Tape& tape, const std::map<std::string, Var>& vars, const ModelConfig& cfg,
                                 const AttentionGraph& g, const Tensor& features, std::mt19937_64* rng = nullptr) {
  cfg.validate();
  if (static_cast<std::size_t>(features.cols()) != cfg.in_dim)
    throw ValidationError("jsgnn_forward: feature width " + std::to_string(features.cols()) + " != in_dim " +
                          std::to_string(cfg.in_dim));
  auto get = [&vars](const std::string& name) {
    auto it = vars.find(name);
    if (it == vars.end()) throw ValidationError("jsgnn_forward: missing parameter '" + name + "'");
    return it->second;
  };
  const Dropout drop{cfg.dropout, rng};
  ModelOutput out;
  Var z = tape.constant(features);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    const Var c = get(p + "hgat.c");
    const Var input = drop.apply(z);
    const auto euclid = gat_forward(input, g, {get(p + "gat.W"), get(p + "gat.a")}, cfg.leaky_slope, drop);
    const auto hyper = hgat_forward(ball::exp_origin(input, c), g,
                                    {get(p + "hgat.W"), get(p + "hgat.b"), get(p + "hgat.a"), c}, cfg.leaky_slope,
                                    drop);
    const auto fused = fusion_forward(euclid.out, hyper.ball, c,
                                      {get(p + "fusion.M"), get(p + "fusion.b"), get(p + "fusion.q")});
    out.beta_r.push_back(fused.beta_r);
    out.beta_d.push_back(fused.beta_d);
    out.gat_logits.push_back(euclid.logits);
    out.hgat_logits.push_back(hyper.logits);
    z = fused.z;
  }
  out.z = z;
  if (cfg.num_classes > 0)
    out.logits = ad::add(ad::matmul(z, ad::transpose(get("decoder.W"))), get("decoder.b"));
  return out;
}

}  // namespace jsgnn
