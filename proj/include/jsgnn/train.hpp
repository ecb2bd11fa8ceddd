#pragma once

// Training configuration, full-batch optimisation with early stopping,
// evaluation metrics, run reports and the multi-run drivers (grid, seeds,
// ablations, comparison modes).

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "autodiff.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "hyperbolicity.hpp"
#include "layers.hpp"
#include "objectives.hpp"
#include "parallel.hpp"

namespace jsgnn {

// ---------------------------------------------------------------------------
// Configuration

enum class Task { nc, lp };

inline std::string to_string(Task t) { return t == Task::nc ? "nc" : "lp"; }
inline Task task_from_string(const std::string& s) {
  if (s == "nc") return Task::nc;
  if (s == "lp") return Task::lp;
  throw ValidationError("unknown task '" + s + "' (expected nc or lp)");
}

/// auto: binary F1 for two classes, micro-averaged otherwise.
enum class F1Average { automatic, binary, micro, macro };

inline std::string to_string(F1Average a) {
  switch (a) {
    case F1Average::automatic: return "auto";
    case F1Average::binary: return "binary";
    case F1Average::micro: return "micro";
    case F1Average::macro: return "macro";
  }
  return "auto";
}

inline F1Average f1_average_from_string(const std::string& s) {
  if (s == "auto") return F1Average::automatic;
  if (s == "binary") return F1Average::binary;
  if (s == "micro") return F1Average::micro;
  if (s == "macro") return F1Average::macro;
  throw ValidationError("unknown F1 averaging '" + s + "'");
}

inline constexpr double kMinCurvature = 1e-3;

struct TrainConfig {
  Task task = Task::nc;
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::size_t q_dim = 16;
  double lr = 0.01;
  double weight_decay = 0.0;
  double dropout = 0.0;
  double omega_nu = 0.1;
  double omega_was = 0.1;
  double p = 2.0;
  std::size_t k = 2;
  DeltaMode delta_mode = DeltaMode::inf;
  double curvature = 1.0;
  bool trainable_curvature = false;
  std::size_t patience = 100;
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;
  SplitFractions split{0.6, 0.2, 0.2};
  /// Split shuffling seed; the run seed is used when unset.
  std::optional<std::uint64_t> split_seed;
  ComparisonMode comparison_mode = ComparisonMode::distribution;
  double fermi_r = 2.0;
  double fermi_t = 1.0;
  /// NC validation/test metric: "accuracy" or "f1".
  std::string nc_metric = "accuracy";
  F1Average f1_average = F1Average::automatic;
  /// Directory for the cached delta profile; empty disables caching.
  std::string cache_dir;
  /// When false the non-uniformity and alignment terms are never built.
  bool regularizers = true;
  std::size_t workers = 1;

  bool operator==(const TrainConfig&) const = default;

  LossWeights loss_weights() const { return {omega_nu, omega_was, p, comparison_mode}; }
  FermiDiracParams fermi() const { return {fermi_r, fermi_t}; }
  std::uint64_t effective_split_seed() const { return split_seed.value_or(seed); }

  void validate() const {
    if (layers == 0 || hidden == 0 || q_dim == 0) throw ValidationError("layers, hidden and q_dim must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be finite and nonnegative");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be nonnegative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
    if (k == 0) throw ValidationError("k must be at least 1");
    if (!(curvature > 0.0) || !std::isfinite(curvature)) throw ValidationError("curvature must be positive");
    if (patience == 0) throw ValidationError("patience must be positive");
    if (max_epochs == 0) throw ValidationError("max_epochs must be positive");
    if (nc_metric != "accuracy" && nc_metric != "f1") throw ValidationError("nc_metric must be accuracy or f1");
    loss_weights().validate();
    fermi().validate();
    detail::split_sizes(1000, split);
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"task", to_string(c.task)},
                   {"layers", c.layers},
                   {"hidden", c.hidden},
                   {"q_dim", c.q_dim},
                   {"lr", c.lr},
                   {"weight_decay", c.weight_decay},
                   {"dropout", c.dropout},
                   {"omega_nu", c.omega_nu},
                   {"omega_was", c.omega_was},
                   {"p", c.p},
                   {"k", c.k},
                   {"mode", to_string(c.delta_mode)},
                   {"curvature", c.curvature},
                   {"trainable_curvature", c.trainable_curvature},
                   {"patience", c.patience},
                   {"max_epochs", c.max_epochs},
                   {"seed", c.seed},
                   {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
                   {"comparison_mode", to_string(c.comparison_mode)},
                   {"fermi_r", c.fermi_r},
                   {"fermi_t", c.fermi_t},
                   {"nc_metric", c.nc_metric},
                   {"f1_average", to_string(c.f1_average)},
                   {"cache_dir", c.cache_dir},
                   {"regularizers", c.regularizers},
                   {"workers", c.workers}};
  if (c.split_seed) j["split"]["seed"] = *c.split_seed;
  return j;
}

/// Missing keys keep their defaults (the defaults for LP use an 85/5/10 edge split).
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    if (c.task == Task::lp) c.split = {0.85, 0.05, 0.10};
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("layers", c.layers);
    opt("hidden", c.hidden);
    opt("q_dim", c.q_dim);
    opt("lr", c.lr);
    opt("weight_decay", c.weight_decay);
    opt("dropout", c.dropout);
    opt("omega_nu", c.omega_nu);
    opt("omega_was", c.omega_was);
    opt("p", c.p);
    opt("k", c.k);
    if (j.contains("mode")) c.delta_mode = delta_mode_from_string(j.at("mode").get<std::string>());
    opt("curvature", c.curvature);
    opt("trainable_curvature", c.trainable_curvature);
    opt("patience", c.patience);
    opt("max_epochs", c.max_epochs);
    opt("seed", c.seed);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
      if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("comparison_mode"))
      c.comparison_mode = comparison_mode_from_string(j.at("comparison_mode").get<std::string>());
    opt("fermi_r", c.fermi_r);
    opt("fermi_t", c.fermi_t);
    opt("nc_metric", c.nc_metric);
    if (j.contains("f1_average")) c.f1_average = f1_average_from_string(j.at("f1_average").get<std::string>());
    opt("cache_dir", c.cache_dir);
    opt("regularizers", c.regularizers);
    opt("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

/// Sets one numeric field by name (used by grids and CLI overrides).
inline void apply_override(TrainConfig& c, const std::string& name, double value) {
  auto count = [&](std::size_t& field) {
    if (!(value >= 0.0) || value != std::floor(value)) throw ValidationError(name + " must be a whole number");
    field = static_cast<std::size_t>(value);
  };
  if (name == "lr") c.lr = value;
  else if (name == "dropout") c.dropout = value;
  else if (name == "omega_nu") c.omega_nu = value;
  else if (name == "omega_was") c.omega_was = value;
  else if (name == "weight_decay") c.weight_decay = value;
  else if (name == "curvature") c.curvature = value;
  else if (name == "p") c.p = value;
  else if (name == "layers") count(c.layers);
  else if (name == "hidden") count(c.hidden);
  else if (name == "q_dim") count(c.q_dim);
  else if (name == "k") count(c.k);
  else if (name == "patience") count(c.patience);
  else if (name == "max_epochs") count(c.max_epochs);
  else if (name == "seed") {
    if (!(value >= 0.0) || value != std::floor(value)) throw ValidationError("seed must be a whole number");
    c.seed = static_cast<std::uint64_t>(value);
  } else
    throw ValidationError("unknown grid parameter '" + name + "'");
}

// ---------------------------------------------------------------------------
// Metrics

inline std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> pred(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return pred;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                       const std::vector<std::size_t>& mask) {
  if (mask.empty()) throw ValidationError("accuracy: empty mask");
  std::size_t correct = 0;
  for (auto v : mask) correct += pred.at(v) == truth.at(v) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

/// F1 over masked nodes. Binary treats class 1 as positive; macro averages
/// over classes occurring in truth or prediction.
inline double f1_score(const std::vector<int>& pred, const std::vector<int>& truth,
                       const std::vector<std::size_t>& mask, int num_classes, F1Average avg) {
  if (mask.empty()) throw ValidationError("f1_score: empty mask");
  if (avg == F1Average::automatic) avg = num_classes == 2 ? F1Average::binary : F1Average::micro;
  const auto nc = static_cast<std::size_t>(std::max(num_classes, 1));
  std::vector<double> tp(nc, 0.0), fp(nc, 0.0), fn(nc, 0.0);
  for (auto v : mask) {
    const auto p = static_cast<std::size_t>(pred.at(v));
    const auto t = static_cast<std::size_t>(truth.at(v));
    if (p >= nc || t >= nc) throw ValidationError("f1_score: class id outside [0, C)");
    if (p == t) {
      tp[t] += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  auto f1 = [](double tpv, double fpv, double fnv) {
    const double denom = 2.0 * tpv + fpv + fnv;
    return denom == 0.0 ? 0.0 : 2.0 * tpv / denom;
  };
  switch (avg) {
    case F1Average::binary:
      if (nc != 2) throw ValidationError("binary F1 needs exactly two classes");
      return f1(tp[1], fp[1], fn[1]);
    case F1Average::micro:
      return f1(std::accumulate(tp.begin(), tp.end(), 0.0), std::accumulate(fp.begin(), fp.end(), 0.0),
                std::accumulate(fn.begin(), fn.end(), 0.0));
    case F1Average::macro: {
      double acc = 0.0;
      std::size_t present = 0;
      for (std::size_t c = 0; c < nc; ++c) {
        if (tp[c] + fp[c] + fn[c] == 0.0) continue;
        acc += f1(tp[c], fp[c], fn[c]);
        ++present;
      }
      return present == 0 ? 0.0 : acc / static_cast<double>(present);
    }
    case F1Average::automatic: break;
  }
  return 0.0;
}

/// Accuracy or F1 of row-argmax predictions over the masked nodes.
inline double evaluate_nc(const Tensor& logits, const std::vector<int>& labels, const std::vector<std::size_t>& mask,
                          const std::string& metric = "accuracy", F1Average avg = F1Average::automatic) {
  const auto pred = argmax_rows(logits);
  if (metric == "accuracy") return accuracy(pred, labels, mask);
  if (metric == "f1") return f1_score(pred, labels, mask, static_cast<int>(logits.cols()), avg);
  throw ValidationError("unknown NC metric '" + metric + "'");
}

/// ROC-AUC by the rank statistic; tied scores share their average rank.
inline double evaluate_lp(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size()) throw ValidationError("evaluate_lp: scores and truth differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw ValidationError("evaluate_lp: AUC needs both positive and negative pairs");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// ---------------------------------------------------------------------------
// Reports

struct RunReport {
  std::string metric;  // "accuracy", "f1" or "auc"
  double best_val_metric = 0.0;
  double test_metric = 0.0;
  std::size_t epoch_of_best = 0;     // last strict improvement; stopping counts from here
  std::size_t checkpoint_epoch = 0;  // restored epoch: lowest val loss among those tied at the best metric
  std::size_t epochs_run = 0;
  std::vector<double> loss_trace;
  std::vector<double> val_trace;
  std::vector<double> val_loss_trace;
  /// beta_r per layer at the restored best parameters, one entry per node.
  std::vector<std::vector<double>> beta_samples;
  double w2_nu_unif = 0.0;
  double w2_nu_mu = 0.0;
  TrainConfig config;
  double wall_time = 0.0;

  bool operator==(const RunReport&) const = default;
};

inline nlohmann::json to_json(const RunReport& r) {
  return {{"metric", r.metric},
          {"best_val_metric", r.best_val_metric},
          {"test_metric", r.test_metric},
          {"epoch_of_best", r.epoch_of_best},
          {"checkpoint_epoch", r.checkpoint_epoch},
          {"epochs_run", r.epochs_run},
          {"loss_trace", r.loss_trace},
          {"val_trace", r.val_trace},
          {"val_loss_trace", r.val_loss_trace},
          {"beta_samples", r.beta_samples},
          {"w2_nu_unif", r.w2_nu_unif},
          {"w2_nu_mu", r.w2_nu_mu},
          {"config", to_json(r.config)},
          {"wall_time", r.wall_time}};
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    r.metric = j.at("metric").get<std::string>();
    r.best_val_metric = j.at("best_val_metric").get<double>();
    r.test_metric = j.at("test_metric").get<double>();
    r.epoch_of_best = j.at("epoch_of_best").get<std::size_t>();
    r.checkpoint_epoch = j.at("checkpoint_epoch").get<std::size_t>();
    r.epochs_run = j.at("epochs_run").get<std::size_t>();
    r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    r.val_trace = j.at("val_trace").get<std::vector<double>>();
    r.val_loss_trace = j.at("val_loss_trace").get<std::vector<double>>();
    r.beta_samples = j.at("beta_samples").get<std::vector<std::vector<double>>>();
    r.w2_nu_unif = j.at("w2_nu_unif").get<double>();
    r.w2_nu_mu = j.at("w2_nu_mu").get<double>();
    r.config = train_config_from_json(j.at("config"));
    r.wall_time = j.at("wall_time").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  }
  return r;
}

struct HyperbolicityDiagnostics {
  double w2_nu_unif = 0.0;
  double w2_nu_mu = 0.0;
};

/// Averages beta_r over the first two layers (all layers when fewer) and
/// measures W_2 against the uniform reference and against mu.
inline HyperbolicityDiagnostics analyze_hyperbolicities(const std::vector<std::vector<double>>& beta_samples,
                                                        const std::vector<double>& mu) {
  if (beta_samples.empty() || beta_samples[0].empty())
    throw ValidationError("analyze_hyperbolicities: report carries no beta record");
  const std::size_t layers = std::min<std::size_t>(2, beta_samples.size());
  const std::size_t n = beta_samples[0].size();
  std::vector<double> nu(n, 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    if (beta_samples[l].size() != n) throw ValidationError("analyze_hyperbolicities: ragged beta record");
    for (std::size_t v = 0; v < n; ++v) nu[v] += beta_samples[l][v] / static_cast<double>(layers);
  }
  return {wasserstein_1d(nu, uniform_reference(n), 2.0), wasserstein_1d(nu, mu, 2.0)};
}

inline HyperbolicityDiagnostics analyze_hyperbolicities(const RunReport& r, const std::vector<double>& mu) {
  return analyze_hyperbolicities(r.beta_samples, mu);
}

// ---------------------------------------------------------------------------
// Optimisation

/// Adam with bias correction; optional L2 weight decay added to the gradient.
class Adam {
 public:
  explicit Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::string& name, Tensor& param, const Tensor& grad) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) {
      m = Tensor::Zero(param.rows(), param.cols());
      v = Tensor::Zero(param.rows(), param.cols());
    }
    const Tensor g = wd_ > 0.0 ? Tensor(grad + wd_ * param) : grad;
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    const double mc = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double vc = 1.0 - std::pow(b2_, static_cast<double>(t_));
    param.array() -= lr_ * (m.array() / mc) / ((v.array() / vc).sqrt() + eps_);
  }

  /// Advances the shared timestep; call once per optimisation step before step().
  void tick() { ++t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// Tracks the best validation epoch (strict improvement) and stops once
/// `patience` epochs pass without one, or at max_epochs.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, std::size_t max_epochs) : patience_(patience), max_epochs_(max_epochs) {
    if (patience == 0 || max_epochs == 0) throw ValidationError("patience and max_epochs must be positive");
  }

  /// Records the metric of epoch `epoch` (1-based, increasing); true on improvement.
  bool update(std::size_t epoch, double metric) {
    last_epoch_ = epoch;
    if (best_epoch_ == 0 || metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      return true;
    }
    return false;
  }

  bool should_stop() const { return last_epoch_ >= max_epochs_ || last_epoch_ - best_epoch_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_, max_epochs_;
  std::size_t best_epoch_ = 0;
  std::size_t last_epoch_ = 0;
  double best_ = 0.0;
};

// ---------------------------------------------------------------------------
// Task preparation

/// Everything a run needs besides parameters: inputs, split, message graph and mu.
struct TaskData {
  Task task = Task::nc;
  Tensor features;
  AttentionGraph message_graph;
  SplitSpec split;
  std::vector<double> mu;
  // NC
  std::vector<int> labels;
  int num_classes = 0;
  // LP
  std::vector<NodePair> train_pos;
  std::vector<NodePair> val_pairs, test_pairs;
  std::vector<int> val_truth, test_truth;
};

inline std::string mu_cache_path(const std::string& dir, const WeightedGraph& g, std::size_t k, DeltaMode mode) {
  std::ostringstream name;
  name << "delta_" << std::hex << g.hash() << std::dec << "_k" << k << "_" << to_string(mode) << ".json";
  return (std::filesystem::path(dir) / name.str()).string();
}

/// Local delta profile, read from or written to the cache directory when one is set.
inline HyperbolicityProfile cached_profile(const WeightedGraph& g, std::size_t k, DeltaMode mode,
                                           const std::string& cache_dir, std::size_t workers = 1) {
  ProfileOptions opts;
  opts.workers = workers;
  if (cache_dir.empty()) return local_profile(g, k, mode, opts);
  const std::string path = mu_cache_path(cache_dir, g, k, mode);
  if (std::ifstream in(path); in) {
    try {
      auto p = profile_from_json(nlohmann::json::parse(in));
      if (p.delta.size() == g.num_nodes() && p.k == k && p.mode == mode) return p;
    } catch (const std::exception&) {
      // Unreadable cache entries are recomputed.
    }
  }
  auto p = local_profile(g, k, mode, opts);
  std::filesystem::create_directories(cache_dir);
  std::ostringstream tmp;
  tmp << path << ".tmp" << std::hash<std::thread::id>{}(std::this_thread::get_id());
  {
    std::ofstream out(tmp.str());
    if (!out) throw ValidationError("cannot write delta cache in " + cache_dir);
    out << to_json(p).dump();
  }
  std::filesystem::rename(tmp.str(), path);
  return p;
}

inline Tensor node_features(const WeightedGraph& g) {
  if (g.features()) return *g.features();
  return Tensor::Identity(static_cast<Eigen::Index>(g.num_nodes()), static_cast<Eigen::Index>(g.num_nodes()));
}

inline TaskData prepare_task(const WeightedGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  TaskData d;
  d.task = cfg.task;
  d.features = node_features(g);
  if (cfg.task == Task::nc) {
    if (!g.labels()) throw ValidationError("node classification needs labels");
    d.labels = *g.labels();
    d.num_classes = g.num_classes();
    if (d.num_classes < 2) throw ValidationError("node classification needs at least two classes");
    d.split = split_nodes(g.num_nodes(), cfg.split, cfg.effective_split_seed());
    d.message_graph = attention_graph(g);
    d.mu = normalize_delta(cached_profile(g, cfg.k, cfg.delta_mode, cfg.cache_dir, cfg.workers));
  } else {
    d.split = split_edges(g, cfg.split, cfg.effective_split_seed());
    const WeightedGraph train_graph = g.with_edges(d.split.train);
    d.message_graph = attention_graph(train_graph);
    d.mu = normalize_delta(cached_profile(train_graph, cfg.k, cfg.delta_mode, cfg.cache_dir, cfg.workers));
    const auto& edges = g.edges();
    for (auto e : d.split.train) d.train_pos.emplace_back(edges[e].u, edges[e].v);
    auto fill = [&edges](const std::vector<std::size_t>& pos, const std::vector<NodePair>& neg,
                         std::vector<NodePair>& pairs, std::vector<int>& truth) {
      for (auto e : pos) {
        pairs.emplace_back(edges[e].u, edges[e].v);
        truth.push_back(1);
      }
      for (const auto& p : neg) {
        pairs.push_back(p);
        truth.push_back(0);
      }
    };
    fill(d.split.val, d.split.val_neg, d.val_pairs, d.val_truth);
    fill(d.split.test, d.split.test_neg, d.test_pairs, d.test_truth);
  }
  return d;
}

inline ModelConfig model_config(const TrainConfig& cfg, const TaskData& d) {
  ModelConfig m;
  m.in_dim = static_cast<std::size_t>(d.features.cols());
  m.hidden = cfg.hidden;
  m.layers = cfg.layers;
  m.q_dim = cfg.q_dim;
  m.num_classes = cfg.task == Task::nc ? static_cast<std::size_t>(d.num_classes) : 0;
  m.curvature = cfg.curvature;
  m.trainable_curvature = cfg.trainable_curvature;
  m.dropout = cfg.dropout;
  return m;
}

/// Deterministic forward pass without dropout.
struct Evaluation {
  double val = 0.0;
  double val_loss = 0.0;  // task loss on the validation nodes or pairs
  double test = 0.0;
  std::vector<std::vector<double>> beta_r;
};

inline Evaluation evaluate_params(const ParamSet& params, const TaskData& d, const TrainConfig& cfg) {
  const ModelConfig mc = model_config(cfg, d);
  ad::Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : params) vars[name] = tape.constant(t);
  const auto out = jsgnn_forward(tape, vars, mc, d.message_graph, d.features);
  Evaluation e;
  for (const auto& b : out.beta_r) e.beta_r.emplace_back(b.value().data(), b.value().data() + b.value().size());
  if (cfg.task == Task::nc) {
    const Tensor& logits = out.logits->value();
    e.val = evaluate_nc(logits, d.labels, d.split.val, cfg.nc_metric, cfg.f1_average);
    if (!d.split.val.empty()) e.val_loss = cross_entropy_nc(*out.logits, d.labels, d.split.val).scalar();
    e.test = evaluate_nc(logits, d.labels, d.split.test, cfg.nc_metric, cfg.f1_average);
  } else {
    const Tensor& z = out.z.value();
    e.val = evaluate_lp(edge_scores(z, d.val_pairs, cfg.fermi()), d.val_truth);
    std::vector<NodePair> pos, neg;
    for (std::size_t i = 0; i < d.val_pairs.size(); ++i) (d.val_truth[i] != 0 ? pos : neg).push_back(d.val_pairs[i]);
    e.val_loss = lp_loss(out.z, pos, neg, cfg.fermi()).scalar();
    e.test = evaluate_lp(edge_scores(z, d.test_pairs, cfg.fermi()), d.test_truth);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  RunReport report;
  ParamSet best_params;
  TaskData data;
};

namespace detail {

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

/// One uniform non-edge of the full graph per training positive.
inline std::vector<NodePair> sample_negatives(const WeightedGraph& g, std::size_t count, std::mt19937_64& rng) {
  std::vector<NodePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_non_edge(g, rng));
  return out;
}

}  // namespace detail

/// Full-batch training with Adam and early stopping on the validation metric.
/// Stopping counts from the last strict improvement. The returned parameters
/// come from the epoch with the lowest validation loss among those tied at the
/// best validation metric, so a saturated metric does not pin the checkpoint
/// to the first epoch that reached it.
inline TrainResult train(const WeightedGraph& g, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  res.data = prepare_task(g, cfg);
  const TaskData& d = res.data;
  const ModelConfig mc = model_config(cfg, d);
  ParamSet params = init_params(mc, detail::stream_seed(cfg.seed, 1));
  std::mt19937_64 dropout_rng(detail::stream_seed(cfg.seed, 2));
  std::mt19937_64 negative_rng(detail::stream_seed(cfg.seed, 3));
  const LossWeights weights = cfg.loss_weights();

  Adam opt(cfg.lr, cfg.weight_decay);
  EarlyStopping stopper(cfg.patience, cfg.max_epochs);
  RunReport& rep = res.report;
  rep.metric = cfg.task == Task::lp ? "auc" : cfg.nc_metric;
  rep.config = cfg;
  res.best_params = params;
  double checkpoint_loss = 0.0;

  for (std::size_t epoch = 1;; ++epoch) {
    ad::Tape tape;
    const auto vars = bind_params(tape, params, mc);
    const auto out = jsgnn_forward(tape, vars, mc, d.message_graph, d.features, &dropout_rng);
    Var task = cfg.task == Task::nc
                   ? cross_entropy_nc(*out.logits, d.labels, d.split.train)
                   : lp_loss(out.z, d.train_pos, detail::sample_negatives(g, d.train_pos.size(), negative_rng),
                             cfg.fermi());
    const Var loss = cfg.regularizers ? overall_loss(task, out.beta_r, out.beta_d, d.mu, weights).total : task;
    const double loss_value = loss.scalar();
    if (!std::isfinite(loss_value))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                            std::to_string(cfg.seed) + ", lr " + std::to_string(cfg.lr) + ")");
    rep.loss_trace.push_back(loss_value);
    tape.backward(loss);
    opt.tick();
    for (auto& [name, value] : params) {
      if (!is_trainable(name, mc)) continue;
      opt.step(name, value, vars.at(name).grad());
      if (name.size() >= 7 && name.compare(name.size() - 7, 7, ".hgat.c") == 0)
        value(0, 0) = std::max(value(0, 0), kMinCurvature);
    }

    const Evaluation ev = evaluate_params(params, d, cfg);
    rep.val_trace.push_back(ev.val);
    rep.val_loss_trace.push_back(ev.val_loss);
    const bool improved = stopper.update(epoch, ev.val);
    if (improved || (ev.val == stopper.best() && ev.val_loss < checkpoint_loss)) {
      res.best_params = params;
      checkpoint_loss = ev.val_loss;
      rep.checkpoint_epoch = epoch;
    }
    if (stopper.should_stop()) {
      rep.epochs_run = epoch;
      break;
    }
  }

  const Evaluation best = evaluate_params(res.best_params, d, cfg);
  rep.best_val_metric = stopper.best();
  rep.epoch_of_best = stopper.best_epoch();
  rep.test_metric = best.test;
  rep.beta_samples = best.beta_r;
  const auto diag = analyze_hyperbolicities(rep.beta_samples, d.mu);
  rep.w2_nu_unif = diag.w2_nu_unif;
  rep.w2_nu_mu = diag.w2_nu_mu;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Test metric of a checkpoint under the run's configuration (same split and inputs).
inline double evaluate_checkpoint(const WeightedGraph& g, const TrainConfig& cfg, const ParamSet& params) {
  return evaluate_params(params, prepare_task(g, cfg), cfg).test;
}

// ---------------------------------------------------------------------------
// Multi-run drivers

struct GridAxis {
  std::string name;
  std::vector<double> values;
};
using Grid = std::vector<GridAxis>;

/// Cartesian product of the axes applied to `base`, first axis varying slowest.
inline std::vector<TrainConfig> expand_grid(const TrainConfig& base, const Grid& grid) {
  std::vector<TrainConfig> points{base};
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw ValidationError("grid axis '" + axis.name + "' has no values");
    std::vector<TrainConfig> next;
    for (const auto& p : points)
      for (double v : axis.values) {
        TrainConfig c = p;
        apply_override(c, axis.name, v);
        c.validate();
        next.push_back(std::move(c));
      }
    points = std::move(next);
  }
  return points;
}

struct GridResult {
  std::vector<TrainConfig> points;
  std::vector<RunReport> reports;
  std::size_t best = 0;  // highest validation metric, earliest point on ties
};

/// Trains every configuration (in parallel when workers > 1); results are
/// stored per index, so the outcome does not depend on scheduling.
inline std::vector<RunReport> run_all(const WeightedGraph& g, const std::vector<TrainConfig>& configs,
                                      std::size_t workers = 1) {
  std::vector<RunReport> reports(configs.size());
  parallel_for(
      configs.size(), [&](std::size_t i) { reports[i] = train(g, configs[i]).report; }, workers);
  return reports;
}

inline GridResult run_grid(const WeightedGraph& g, const TrainConfig& base, const Grid& grid,
                           std::size_t workers = 1) {
  GridResult r;
  r.points = expand_grid(base, grid);
  if (r.points.empty()) throw ValidationError("empty grid");
  r.reports = run_all(g, r.points, workers);
  for (std::size_t i = 1; i < r.reports.size(); ++i)
    if (r.reports[i].best_val_metric > r.reports[r.best].best_val_metric) r.best = i;
  return r;
}

/// Mean and population standard deviation.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

inline Summary summarize(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("summarize: no values");
  Summary s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(acc / static_cast<double>(xs.size()));
  return s;
}

struct SeedRuns {
  std::vector<RunReport> reports;
  Summary test;
  Summary val;
};

inline SeedRuns repeat_seeds(const WeightedGraph& g, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                             std::size_t workers = 1) {
  std::vector<TrainConfig> configs;
  for (auto s : seeds) {
    TrainConfig c = base;
    c.seed = s;
    configs.push_back(c);
  }
  SeedRuns out;
  out.reports = run_all(g, configs, workers);
  std::vector<double> test, val;
  for (const auto& r : out.reports) {
    test.push_back(r.test_metric);
    val.push_back(r.best_val_metric);
  }
  out.test = summarize(test);
  out.val = summarize(val);
  return out;
}

/// full, without NU, without W2, without both.
inline std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base) {
  TrainConfig no_nu = base, no_w2 = base, none = base;
  no_nu.omega_nu = 0.0;
  no_w2.omega_was = 0.0;
  none.omega_nu = 0.0;
  none.omega_was = 0.0;
  return {{"full", base}, {"no_nu", no_nu}, {"no_w2", no_w2}, {"no_nu_w2", none}};
}

inline std::vector<std::pair<std::string, TrainConfig>> comparison_variants(const TrainConfig& base) {
  std::vector<std::pair<std::string, TrainConfig>> out;
  for (auto m : {ComparisonMode::distribution, ComparisonMode::pairwise, ComparisonMode::mean}) {
    TrainConfig c = base;
    c.comparison_mode = m;
    out.emplace_back(to_string(m), c);
  }
  return out;
}

}  // namespace jsgnn
