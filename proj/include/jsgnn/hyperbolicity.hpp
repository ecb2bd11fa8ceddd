#pragma once

// Gromov four-point hyperbolicity of finite path metrics, global and
// restricted to k-hop neighbourhoods.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "parallel.hpp"

namespace jsgnn {

enum class DeltaMode { inf, one };

inline std::string to_string(DeltaMode m) { return m == DeltaMode::inf ? "inf" : "one"; }

inline DeltaMode delta_mode_from_string(const std::string& s) {
  if (s == "inf") return DeltaMode::inf;
  if (s == "one") return DeltaMode::one;
  throw ValidationError("hyperbolicity mode must be 'inf' or 'one', got '" + s + "'");
}

/// Least delta >= 0 for which the four-point condition holds on the ordered
/// tuple: d(x,y) + d(z,t) <= max(d(x,z) + d(y,t), d(z,y) + d(x,t)) + 2 delta.
inline double four_point_tau(const DistanceMatrix& d, NodeId x, NodeId y, NodeId z, NodeId t) {
  if (!d.reachable(x, y) || !d.reachable(x, z) || !d.reachable(x, t))
    throw DomainError("four_point_tau: quadruple spans more than one connected component");
  const double lhs = d(x, y) + d(z, t);
  const double rhs = std::max(d(x, z) + d(y, t), d(z, y) + d(x, t));
  return std::max(0.0, (lhs - rhs) / 2.0);
}

namespace detail {

/// (S1 - S2) / 2 for the three pairing sums of a 4-set.
inline double quadruple_delta(double s1, double s2, double s3) {
  if (s1 < s2) std::swap(s1, s2);
  if (s2 < s3) std::swap(s2, s3);
  if (s1 < s2) std::swap(s1, s2);
  return (s1 - s2) / 2.0;
}

inline void require_connected(const DistanceMatrix& d, const char* who) {
  if (!d.fully_connected()) throw DomainError(std::string(who) + ": metric spans more than one connected component");
}

inline void require_symmetric(const DistanceMatrix& d, const char* who) {
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j)
      if (d(i, j) != d(j, i)) throw DomainError(std::string(who) + ": distance matrix is not exactly symmetric");
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Worst-case four-point hyperbolicity over vertex quadruples.
///
/// Pairs are visited from longest to shortest. For a 4-set whose largest
/// pairing sum is d(x,y) + d(z,t), delta <= min(d(x,y), d(z,t)) / 2, so once
/// the current pair is short enough that half its length cannot beat the
/// best value found, no later pair can either and the search stops. The
/// first pair bounds everything by diameter / 2.
inline double delta_inf(const DistanceMatrix& d, std::size_t workers = 1) {
  detail::require_connected(d, "delta_inf");
  detail::require_symmetric(d, "delta_inf");
  const std::size_t n = d.size();
  if (n < 4) return 0.0;

  struct Pair {
    double len;
    std::uint32_t a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      pairs.push_back({d(i, j), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) {
    if (p.len != q.len) return p.len > q.len;
    return std::tie(p.a, p.b) < std::tie(q.a, q.b);
  });
  // Column copies of the sorted pairs keep the inner loop branch-free.
  const std::size_t m = pairs.size();
  std::vector<double> len(m);
  std::vector<std::uint32_t> end_a(m), end_b(m);
  for (std::size_t i = 0; i < m; ++i) {
    len[i] = pairs[i].len;
    end_a[i] = pairs[i].a;
    end_b[i] = pairs[i].b;
  }

  std::atomic<double> best{0.0};
  auto raise = [&best](double v) {
    double cur = best.load(std::memory_order_relaxed);
    while (v > cur && !best.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
    }
  };

  workers = std::max<std::size_t>(1, workers);
  parallel_for(
      workers,
      [&](std::size_t w) {
        double local = 0.0;
        for (std::size_t i = w; i < m; i += workers) {
          local = std::max(local, best.load(std::memory_order_relaxed));
          if (len[i] / 2.0 <= local) break;
          const std::uint32_t x = end_a[i], y = end_b[i];
          const double* dx = d.row(x);
          const double* dy = d.row(y);
          const double li = len[i];
          double row_best = 0.0;
          for (std::size_t j = 0; j < i; ++j) {
            const std::uint32_t z = end_a[j], t = end_b[j];
            const double s1 = li + len[j];
            const double s2 = dx[z] + dy[t];
            const double s3 = dx[t] + dy[z];
            // Each pairing of two pairs is visited once, so S1 - max(S2, S3)
            // reaches largest - median exactly when S1 is the largest sum.
            // Needs an exactly symmetric matrix. Shared vertices give 0.
            const bool shared = (z == x) | (z == y) | (t == x) | (t == y);
            const double v = shared ? 0.0 : (s1 - std::max(s2, s3)) / 2.0;
            row_best = std::max(row_best, v);
          }
          local = std::max(local, row_best);
          raise(local);
        }
      },
      workers);
  return best.load();
}

/// Plain O(n^4) sup over ordered tuples. Used to cross-check delta_inf.
inline double delta_inf_naive(const DistanceMatrix& d) {
  detail::require_connected(d, "delta_inf_naive");
  const std::size_t n = d.size();
  double best = 0.0;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = 0; z < n; ++z)
        for (std::size_t t = 0; t < n; ++t) best = std::max(best, four_point_tau(d, x, y, z, t));
  return best;
}

inline constexpr std::size_t kDeltaOneExactLimit = 60;
inline constexpr std::size_t kDeltaOneDefaultSamples = 100000;

/// Mean of tau over all n^4 ordered tuples drawn with replacement.
///
/// Any tuple with a repeated point has tau = 0, and the 24 orderings of a
/// 4-set realise each of its three pairings 8 times; only orderings that
/// lead with the largest pairing are positive, giving (S1 - S2) / 2. So the
/// mean equals 8 / n^4 * sum over 4-sets of (S1 - S2) / 2.
inline double delta_one_exact(const DistanceMatrix& d, std::size_t exact_limit = kDeltaOneExactLimit) {
  detail::require_connected(d, "delta_one_exact");
  const std::size_t n = d.size();
  if (n > exact_limit)
    throw ValidationError("delta_one_exact: " + std::to_string(n) + " nodes exceeds the exact limit of " +
                          std::to_string(exact_limit) + "; use delta_one_sampled");
  if (n < 4) return 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c)
        for (std::size_t e = c + 1; e < n; ++e)
          total += detail::quadruple_delta(d(a, b) + d(c, e), d(a, c) + d(b, e), d(a, e) + d(b, c));
  const double nn = static_cast<double>(n);
  return 8.0 * total / (nn * nn * nn * nn);
}

struct SampledDelta {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo delta_1 from i.i.d. uniform ordered quadruples. Samples are
/// drawn in fixed blocks, each from its own seed-derived stream, and reduced
/// in block order, so the result does not depend on the worker count.
inline SampledDelta delta_one_sampled(const DistanceMatrix& d, std::size_t num_samples, std::uint64_t seed,
                                      std::size_t workers = 1) {
  detail::require_connected(d, "delta_one_sampled");
  if (num_samples < 100) throw ValidationError("delta_one_sampled needs at least 100 samples");
  const std::size_t n = d.size();
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (num_samples + kBlock - 1) / kBlock;
  std::vector<double> sum(blocks, 0.0), sum_sq(blocks, 0.0);
  parallel_for(
      blocks,
      [&](std::size_t b) {
        std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(b + 1)));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t count = std::min(kBlock, num_samples - b * kBlock);
        for (std::size_t s = 0; s < count; ++s) {
          const std::size_t x = pick(rng), y = pick(rng), z = pick(rng), t = pick(rng);
          const double tau = four_point_tau(d, x, y, z, t);
          sum[b] += tau;
          sum_sq[b] += tau * tau;
        }
      },
      workers);
  double s = 0.0, s2 = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    s += sum[b];
    s2 += sum_sq[b];
  }
  const double m = static_cast<double>(num_samples);
  const double mean = s / m;
  const double var = std::max(0.0, (s2 - m * mean * mean) / (m - 1.0));
  return {mean, std::sqrt(var / m)};
}

// ---------------------------------------------------------------------------
// Local profiles

/// Per-node hyperbolicity of the k-hop induced neighbourhood.
struct HyperbolicityProfile {
  std::size_t k = 2;
  DeltaMode mode = DeltaMode::inf;
  std::vector<double> delta;  // indexed by node id

  bool operator==(const HyperbolicityProfile&) const = default;
};

struct ProfileOptions {
  std::size_t exact_limit = kDeltaOneExactLimit;
  std::size_t samples = kDeltaOneDefaultSamples;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Hyperbolicity of one node's k-hop subgraph under its own path metric.
inline double local_delta(const WeightedGraph& g, NodeId v, std::size_t k, DeltaMode mode,
                          const ProfileOptions& opts = {}) {
  const auto sub = k_hop_subgraph(g, v, k);
  if (sub.graph.num_nodes() < 4) return 0.0;
  // A tree neighbourhood is 0-hyperbolic; skip the quartic scan.
  if (sub.graph.num_edges() + 1 == sub.graph.num_nodes()) return 0.0;
  const auto d = shortest_paths(sub.graph);
  if (mode == DeltaMode::inf) return delta_inf(d);
  if (d.size() <= opts.exact_limit) return delta_one_exact(d, opts.exact_limit);
  return delta_one_sampled(d, opts.samples, detail::splitmix64(opts.seed) ^ v).estimate;
}

inline HyperbolicityProfile local_profile(const WeightedGraph& g, std::size_t k, DeltaMode mode,
                                          const ProfileOptions& opts = {}) {
  if (k < 1) throw ValidationError("local_profile: k must be at least 1");
  HyperbolicityProfile p{k, mode, std::vector<double>(g.num_nodes(), 0.0)};
  parallel_for(
      g.num_nodes(), [&](std::size_t v) { p.delta[v] = local_delta(g, v, k, mode, opts); }, opts.workers);
  return p;
}

inline nlohmann::json to_json(const HyperbolicityProfile& p) {
  nlohmann::json delta = nlohmann::json::object();
  for (std::size_t v = 0; v < p.delta.size(); ++v) delta[std::to_string(v)] = p.delta[v];
  return {{"k", p.k}, {"mode", to_string(p.mode)}, {"delta", delta}};
}

inline HyperbolicityProfile profile_from_json(const nlohmann::json& j) {
  HyperbolicityProfile p;
  try {
    p.k = j.at("k").get<std::size_t>();
    p.mode = delta_mode_from_string(j.at("mode").get<std::string>());
    const auto& delta = j.at("delta");
    p.delta.assign(delta.size(), 0.0);
    for (const auto& [key, value] : delta.items()) {
      const auto id = std::stoul(key);
      if (id >= p.delta.size()) throw ParseError("profile JSON: node ids are not dense");
      p.delta[id] = value.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("profile JSON: ") + e.what());
  } catch (const std::logic_error&) {
    throw ParseError("profile JSON: bad node id key");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Empirical distributions

struct Histogram {
  std::vector<double> edges;  // bins are [edges[i], edges[i+1])
  std::vector<std::size_t> counts;
};

struct EmpiricalDistribution {
  std::vector<double> samples;  // ascending
};

inline EmpiricalDistribution to_distribution(const HyperbolicityProfile& p) {
  if (p.delta.empty()) throw ValidationError("to_distribution: empty profile");
  EmpiricalDistribution out{p.delta};
  std::sort(out.samples.begin(), out.samples.end());
  return out;
}

inline constexpr double kDefaultBinWidth = 0.5;

/// Half-open bins of the given width anchored at zero, covering every sample.
inline Histogram histogram(const EmpiricalDistribution& dist, double bin_width = kDefaultBinWidth) {
  if (dist.samples.empty()) throw ValidationError("histogram: empty distribution");
  if (!(bin_width > 0.0)) throw ValidationError("histogram: bin width must be positive");
  if (dist.samples.front() < 0.0) throw ValidationError("histogram: samples must be nonnegative");
  const auto bins = static_cast<std::size_t>(std::floor(dist.samples.back() / bin_width)) + 1;
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(static_cast<double>(i) * bin_width);
  for (double x : dist.samples) {
    auto bin = static_cast<std::size_t>(std::floor(x / bin_width));
    h.counts[std::min(bin, bins - 1)]++;
  }
  return h;
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
}

}  // namespace jsgnn
