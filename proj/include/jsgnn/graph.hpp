#pragma once

// Weighted undirected graphs: validation, ingestion, path metric, k-hop
// neighborhoods, synthetic generators and train/val/test splits.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"

namespace jsgnn {

using NodeId = std::size_t;

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  double w = 1.0;

  bool operator==(const Edge&) const = default;
};

struct Neighbor {
  NodeId node;
  double w;
};

/// Undirected simple graph with strictly positive edge lengths. Node
/// features and class labels ride along when the task needs them.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  WeightedGraph(std::size_t num_nodes, std::vector<Edge> edges)
      : num_nodes_(num_nodes), edges_(std::move(edges)) {
    validate();
    build_adjacency();
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<Neighbor>& neighbors(NodeId v) const { return adjacency_.at(v); }
  std::size_t degree(NodeId v) const { return adjacency_.at(v).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    if (a >= num_nodes_ || b >= num_nodes_) return false;
    const auto& small = adjacency_[a].size() <= adjacency_[b].size() ? adjacency_[a] : adjacency_[b];
    const NodeId other = adjacency_[a].size() <= adjacency_[b].size() ? b : a;
    return std::any_of(small.begin(), small.end(), [&](const Neighbor& n) { return n.node == other; });
  }

  bool unit_weights() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.w == 1.0; });
  }

  const std::optional<Eigen::MatrixXd>& features() const noexcept { return features_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }

  void set_features(Eigen::MatrixXd features) {
    if (static_cast<std::size_t>(features.rows()) != num_nodes_)
      throw ValidationError("feature matrix has " + std::to_string(features.rows()) + " rows, graph has " +
                            std::to_string(num_nodes_) + " nodes");
    if (!features.allFinite()) throw ValidationError("feature matrix contains non-finite entries");
    features_ = std::move(features);
  }

  void set_labels(std::vector<int> labels) {
    if (labels.size() != num_nodes_) throw ValidationError("label count does not match node count");
    if (std::any_of(labels.begin(), labels.end(), [](int c) { return c < 0; }))
      throw ValidationError("labels must be nonnegative class ids");
    labels_ = std::move(labels);
  }

  int num_classes() const {
    if (!labels_) return 0;
    return labels_->empty() ? 0 : *std::max_element(labels_->begin(), labels_->end()) + 1;
  }

  /// Same topology with every edge length multiplied by s > 0.
  WeightedGraph scaled(double s) const {
    if (!(s > 0.0)) throw ValidationError("scale factor must be positive");
    std::vector<Edge> e = edges_;
    for (auto& edge : e) edge.w *= s;
    WeightedGraph out(num_nodes_, std::move(e));
    out.features_ = features_;
    out.labels_ = labels_;
    return out;
  }

  /// Keeps only the edges whose indices are listed; nodes, features and labels are retained.
  WeightedGraph with_edges(const std::vector<std::size_t>& keep) const {
    std::vector<Edge> e;
    e.reserve(keep.size());
    for (auto i : keep) e.push_back(edges_.at(i));
    WeightedGraph out(num_nodes_, std::move(e));
    out.features_ = features_;
    out.labels_ = labels_;
    return out;
  }

  /// Connected-component id per node, numbered in order of lowest member.
  std::vector<std::size_t> components() const {
    constexpr auto unset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> comp(num_nodes_, unset);
    std::size_t next = 0;
    std::vector<NodeId> stack;
    for (NodeId s = 0; s < num_nodes_; ++s) {
      if (comp[s] != unset) continue;
      comp[s] = next;
      stack.push_back(s);
      while (!stack.empty()) {
        const NodeId x = stack.back();
        stack.pop_back();
        for (const auto& nb : adjacency_[x]) {
          if (comp[nb.node] == unset) {
            comp[nb.node] = next;
            stack.push_back(nb.node);
          }
        }
      }
      ++next;
    }
    return comp;
  }

  bool connected() const {
    const auto comp = components();
    return std::all_of(comp.begin(), comp.end(), [](std::size_t c) { return c == 0; });
  }

  /// Stable 64-bit FNV-1a digest of the topology and weights (not features).
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t x) {
      for (int i = 0; i < 8; ++i) {
        h ^= (x >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(num_nodes_);
    std::vector<Edge> sorted = edges_;
    for (auto& e : sorted)
      if (e.u > e.v) std::swap(e.u, e.v);
    std::sort(sorted.begin(), sorted.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    for (const auto& e : sorted) {
      mix(e.u);
      mix(e.v);
      std::uint64_t bits;
      std::memcpy(&bits, &e.w, sizeof bits);
      mix(bits);
    }
    return h;
  }

 private:
  void validate() const {
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto& e : edges_) {
      if (e.u >= num_nodes_ || e.v >= num_nodes_)
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") references a node outside [0, " + std::to_string(num_nodes_) + ")");
      if (e.u == e.v) throw ValidationError("self-loop at node " + std::to_string(e.u));
      if (!(e.w > 0.0) || !std::isfinite(e.w))
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") has nonpositive or non-finite weight");
      if (!seen.emplace(std::min(e.u, e.v), std::max(e.u, e.v)).second)
        throw ValidationError("duplicate edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
    }
  }

  void build_adjacency() {
    adjacency_.assign(num_nodes_, {});
    for (const auto& e : edges_) {
      adjacency_[e.u].push_back({e.v, e.w});
      adjacency_[e.v].push_back({e.u, e.w});
    }
    for (auto& list : adjacency_)
      std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
  }

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::optional<Eigen::MatrixXd> features_;
  std::optional<std::vector<int>> labels_;
};

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Dense all-pairs path metric. Unreachable pairs hold +infinity.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, kUnreachable) {
    for (std::size_t i = 0; i < n; ++i) d_[i * n + i] = 0.0;
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  double& at(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
  bool reachable(std::size_t i, std::size_t j) const { return std::isfinite(d_[i * n_ + j]); }
  const double* row(std::size_t i) const { return d_.data() + i * n_; }

  bool fully_connected() const {
    return std::all_of(d_.begin(), d_.end(), [](double x) { return std::isfinite(x); });
  }

  /// Largest finite distance.
  double diameter() const {
    double best = 0.0;
    for (double x : d_)
      if (std::isfinite(x)) best = std::max(best, x);
    return best;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

namespace detail {

inline void bfs_row(const WeightedGraph& g, NodeId src, double unit, double* out) {
  std::vector<std::size_t> hops(g.num_nodes(), std::numeric_limits<std::size_t>::max());
  std::queue<NodeId> frontier;
  hops[src] = 0;
  frontier.push(src);
  while (!frontier.empty()) {
    const NodeId x = frontier.front();
    frontier.pop();
    for (const auto& nb : g.neighbors(x)) {
      if (hops[nb.node] == std::numeric_limits<std::size_t>::max()) {
        hops[nb.node] = hops[x] + 1;
        frontier.push(nb.node);
      }
    }
  }
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    out[i] = hops[i] == std::numeric_limits<std::size_t>::max() ? kUnreachable : unit * static_cast<double>(hops[i]);
}

inline void dijkstra_row(const WeightedGraph& g, NodeId src, double* out) {
  std::fill(out, out + g.num_nodes(), kUnreachable);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  out[src] = 0.0;
  heap.emplace(0.0, src);
  while (!heap.empty()) {
    const auto [dist, x] = heap.top();
    heap.pop();
    if (dist > out[x]) continue;
    for (const auto& nb : g.neighbors(x)) {
      const double cand = dist + nb.w;
      if (cand < out[nb.node]) {
        out[nb.node] = cand;
        heap.emplace(cand, nb.node);
      }
    }
  }
}

}  // namespace detail

/// Exact single-source distances from every node: breadth-first search when
/// all lengths coincide, binary-heap Dijkstra otherwise. Sources are
/// independent, so the parallel fill is bit-identical to a sequential one.
inline DistanceMatrix shortest_paths(const WeightedGraph& g, std::size_t workers = 1) {
  const std::size_t n = g.num_nodes();
  DistanceMatrix d(n);
  const auto& edges = g.edges();
  const bool uniform =
      edges.empty() || std::all_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.w == edges.front().w; });
  const double unit = edges.empty() ? 1.0 : edges.front().w;
  parallel_for(
      n,
      [&](std::size_t s) {
        double* row = &d.at(s, 0);
        if (uniform)
          detail::bfs_row(g, s, unit, row);
        else
          detail::dijkstra_row(g, s, row);
      },
      workers);
  // Per-source sums round differently; keep the lower-source value so the
  // matrix is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.at(j, i) = d(i, j);
  return d;
}

/// Unweighted hop distances from one source; unreachable nodes get SIZE_MAX.
inline std::vector<std::size_t> hop_distances(const WeightedGraph& g, NodeId src) {
  std::vector<std::size_t> hops(g.num_nodes(), std::numeric_limits<std::size_t>::max());
  std::queue<NodeId> frontier;
  hops.at(src) = 0;
  frontier.push(src);
  while (!frontier.empty()) {
    const NodeId x = frontier.front();
    frontier.pop();
    for (const auto& nb : g.neighbors(x)) {
      if (hops[nb.node] == std::numeric_limits<std::size_t>::max()) {
        hops[nb.node] = hops[x] + 1;
        frontier.push(nb.node);
      }
    }
  }
  return hops;
}

struct Subgraph {
  WeightedGraph graph;
  std::vector<NodeId> to_original;  // local id -> id in the ambient graph
  NodeId center = 0;                // local id of the seed node
};

/// Induced subgraph on every node within k edges of v (hop count, not
/// weighted length). Local ids follow ascending original ids.
inline Subgraph k_hop_subgraph(const WeightedGraph& g, NodeId v, std::size_t k) {
  if (v >= g.num_nodes()) throw ValidationError("k_hop_subgraph: node id out of range");
  std::vector<std::size_t> hops(g.num_nodes(), std::numeric_limits<std::size_t>::max());
  std::vector<NodeId> members{v};
  hops[v] = 0;
  for (std::size_t head = 0; head < members.size(); ++head) {
    const NodeId x = members[head];
    if (hops[x] == k) continue;
    for (const auto& nb : g.neighbors(x)) {
      if (hops[nb.node] == std::numeric_limits<std::size_t>::max()) {
        hops[nb.node] = hops[x] + 1;
        members.push_back(nb.node);
      }
    }
  }
  std::sort(members.begin(), members.end());
  std::vector<std::size_t> local(g.num_nodes(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < members.size(); ++i) local[members[i]] = i;

  std::vector<Edge> edges;
  for (NodeId x : members) {
    for (const auto& nb : g.neighbors(x)) {
      if (nb.node > x && local[nb.node] != std::numeric_limits<std::size_t>::max())
        edges.push_back({local[x], local[nb.node], nb.w});
    }
  }
  Subgraph sub{WeightedGraph(members.size(), std::move(edges)), members, local[v]};
  return sub;
}

// ---------------------------------------------------------------------------
// Ingestion

struct EdgeListOptions {
  bool weighted = false;
  /// Map arbitrary (non-dense) ids onto 0..n-1 in order of first appearance.
  bool remap = false;
};

struct LoadedGraph {
  WeightedGraph graph;
  /// Original label for each dense id; populated only when remapping.
  std::vector<std::string> original_ids;
};

/// Parses "u v [w]" lines. '#' starts a comment; blank lines are skipped.
inline LoadedGraph parse_edge_list(std::istream& in, const EdgeListOptions& opts = {}) {
  std::vector<Edge> edges;
  std::unordered_map<std::string, NodeId> remap;
  std::vector<std::string> original;
  std::set<std::pair<NodeId, NodeId>> seen;
  NodeId max_id = 0;
  bool any = false;
  std::string line;
  std::size_t lineno = 0;

  auto node_of = [&](const std::string& tok) -> NodeId {
    if (opts.remap) {
      auto [it, inserted] = remap.try_emplace(tok, original.size());
      if (inserted) original.push_back(tok);
      return it->second;
    }
    std::size_t pos = 0;
    long long value = 0;
    try {
      value = std::stoll(tok, &pos);
    } catch (const std::exception&) {
      throw ParseError("node id '" + tok + "' is not an integer", lineno);
    }
    if (pos != tok.size() || value < 0) throw ParseError("node id '" + tok + "' is not a nonnegative integer", lineno);
    return static_cast<NodeId>(value);
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() < 2 || tok.size() > 3) throw ParseError("expected 'u v [w]'", lineno);

    Edge e;
    e.u = node_of(tok[0]);
    e.v = node_of(tok[1]);
    if (tok.size() == 3 && opts.weighted) {
      std::size_t pos = 0;
      try {
        e.w = std::stod(tok[2], &pos);
      } catch (const std::exception&) {
        throw ParseError("weight '" + tok[2] + "' is not a number", lineno);
      }
      if (pos != tok[2].size()) throw ParseError("weight '" + tok[2] + "' is not a number", lineno);
    }
    if (e.u == e.v) throw ValidationError("line " + std::to_string(lineno) + ": self-loop at node " + tok[0]);
    if (!(e.w > 0.0) || !std::isfinite(e.w))
      throw ValidationError("line " + std::to_string(lineno) + ": weight must be positive");
    if (!seen.emplace(std::min(e.u, e.v), std::max(e.u, e.v)).second)
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate edge " + tok[0] + " " + tok[1]);
    max_id = std::max({max_id, e.u, e.v});
    any = true;
    edges.push_back(e);
  }

  std::size_t n = opts.remap ? original.size() : (any ? max_id + 1 : 0);
  if (!opts.remap) {
    std::vector<bool> used(n, false);
    for (const auto& e : edges) used[e.u] = used[e.v] = true;
    if (auto gap = std::find(used.begin(), used.end(), false); gap != used.end())
      throw ValidationError("node ids are not dense: id " + std::to_string(gap - used.begin()) +
                            " never appears (use remapping)");
  }
  return {WeightedGraph(n, std::move(edges)), std::move(original)};
}

inline LoadedGraph load_edge_list(const std::string& path, const EdgeListOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open edge list '" + path + "'");
  return parse_edge_list(in, opts);
}

inline void write_edge_list(std::ostream& out, const WeightedGraph& g, bool weighted) {
  const auto old = out.precision(17);
  for (const auto& e : g.edges()) {
    out << e.u << ' ' << e.v;
    if (weighted) out << ' ' << e.w;
    out << '\n';
  }
  out.precision(old);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    cells.push_back(cell);
  }
  return cells;
}

template <typename Row>
void read_csv_rows(std::istream& in, std::size_t expected_cols, Row&& row) {
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv(line);
    if (header) {
      header = false;
      if (cells.empty() || cells[0] != "node_id") throw ParseError("CSV header must start with node_id", lineno);
      if (expected_cols != 0 && cells.size() != expected_cols) throw ParseError("unexpected header width", lineno);
      row(cells, lineno, true);
      continue;
    }
    row(cells, lineno, false);
  }
  if (header) throw ParseError("CSV file is empty");
}

inline std::size_t parse_node_cell(const std::string& s, std::size_t n, std::size_t lineno) {
  std::size_t pos = 0;
  long long id = -1;
  try {
    id = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad node id '" + s + "'", lineno);
  }
  if (pos != s.size() || id < 0 || static_cast<std::size_t>(id) >= n)
    throw ParseError("node id '" + s + "' out of range", lineno);
  return static_cast<std::size_t>(id);
}

}  // namespace detail

/// Reads "node_id,f0,...,fk" rows. Every node must appear exactly once.
inline Eigen::MatrixXd parse_features_csv(std::istream& in, std::size_t num_nodes) {
  Eigen::MatrixXd x;
  std::vector<bool> filled(num_nodes, false);
  std::size_t width = 0;
  detail::read_csv_rows(in, 0, [&](const std::vector<std::string>& cells, std::size_t lineno, bool header) {
    if (header) {
      width = cells.size() - 1;
      if (width == 0) throw ParseError("feature CSV needs at least one feature column", lineno);
      x.setZero(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(width));
      return;
    }
    if (cells.size() != width + 1) throw ParseError("row width differs from header", lineno);
    const auto id = detail::parse_node_cell(cells[0], num_nodes, lineno);
    if (filled[id]) throw ParseError("node " + cells[0] + " listed twice", lineno);
    filled[id] = true;
    for (std::size_t j = 0; j < width; ++j) {
      try {
        x(static_cast<Eigen::Index>(id), static_cast<Eigen::Index>(j)) = std::stod(cells[j + 1]);
      } catch (const std::exception&) {
        throw ParseError("bad feature value '" + cells[j + 1] + "'", lineno);
      }
    }
  });
  if (std::find(filled.begin(), filled.end(), false) != filled.end())
    throw ValidationError("feature CSV does not cover every node");
  return x;
}

/// Reads "node_id,label" rows.
inline std::vector<int> parse_labels_csv(std::istream& in, std::size_t num_nodes) {
  std::vector<int> labels(num_nodes, -1);
  detail::read_csv_rows(in, 2, [&](const std::vector<std::string>& cells, std::size_t lineno, bool header) {
    if (header) return;
    if (cells.size() != 2) throw ParseError("expected node_id,label", lineno);
    const auto id = detail::parse_node_cell(cells[0], num_nodes, lineno);
    if (labels[id] != -1) throw ParseError("node " + cells[0] + " listed twice", lineno);
    try {
      labels[id] = std::stoi(cells[1]);
    } catch (const std::exception&) {
      throw ParseError("bad label '" + cells[1] + "'", lineno);
    }
    if (labels[id] < 0) throw ParseError("labels must be nonnegative", lineno);
  });
  if (std::find(labels.begin(), labels.end(), -1) != labels.end())
    throw ValidationError("label CSV does not cover every node");
  return labels;
}

inline Eigen::MatrixXd load_features_csv(const std::string& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature file '" + path + "'");
  return parse_features_csv(in, num_nodes);
}

inline std::vector<int> load_labels_csv(const std::string& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label file '" + path + "'");
  return parse_labels_csv(in, num_nodes);
}

inline void write_features_csv(std::ostream& out, const Eigen::MatrixXd& x) {
  out << "node_id";
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << ",f" << j;
  out << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << x(i, j);
    out << '\n';
  }
}

inline void write_labels_csv(std::ostream& out, const std::vector<int>& labels) {
  out << "node_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

// ---------------------------------------------------------------------------
// Generators

/// rows x cols grid with 4-neighbour connectivity; node id = r * cols + c.
inline WeightedGraph generate_lattice(std::size_t rows, std::size_t cols) {
  if (rows < 2 || cols < 2) throw ValidationError("lattice needs at least 2 rows and 2 columns");
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const NodeId id = r * cols + c;
      if (c + 1 < cols) edges.push_back({id, id + 1, 1.0});
      if (r + 1 < rows) edges.push_back({id, id + cols, 1.0});
    }
  }
  return WeightedGraph(rows * cols, std::move(edges));
}

/// Balanced rooted tree, breadth-first numbering with the root at 0.
inline WeightedGraph generate_tree(std::size_t branching, std::size_t depth) {
  if (branching < 1) throw ValidationError("tree branching must be at least 1");
  std::vector<Edge> edges;
  std::size_t n = 1;
  std::size_t level_begin = 0;
  std::size_t level_size = 1;
  for (std::size_t d = 0; d < depth; ++d) {
    for (std::size_t p = level_begin; p < level_begin + level_size; ++p) {
      for (std::size_t b = 0; b < branching; ++b) edges.push_back({p, n++, 1.0});
    }
    level_begin += level_size;
    level_size *= branching;
  }
  return WeightedGraph(n, std::move(edges));
}

/// Disjoint union of a lattice and a tree joined by one unit edge between
/// `lattice_node` and the tree root. Tree ids are shifted by the lattice size.
inline WeightedGraph generate_combined(const WeightedGraph& lattice, const WeightedGraph& tree, NodeId lattice_node,
                                       NodeId tree_root = 0) {
  if (lattice_node >= lattice.num_nodes()) throw ValidationError("glue node is not a lattice node");
  if (tree_root >= tree.num_nodes()) throw ValidationError("glue node is not a tree node");
  const std::size_t offset = lattice.num_nodes();
  std::vector<Edge> edges = lattice.edges();
  for (const auto& e : tree.edges()) edges.push_back({e.u + offset, e.v + offset, e.w});
  edges.push_back({lattice_node, tree_root + offset, 1.0});
  return WeightedGraph(offset + tree.num_nodes(), std::move(edges));
}

/// The repository's stand-in for the mixed lattice/tree example: a 5x5 unit
/// lattice whose corner (node 0) is joined to the root of a depth-3 binary
/// tree. Nodes 0..24 are lattice, 25..39 are tree.
inline WeightedGraph reference_combined_graph() {
  return generate_combined(generate_lattice(5, 5), generate_tree(2, 3), 0, 0);
}

inline constexpr std::size_t kReferenceLatticeNodes = 25;

/// Uniform random recursive tree: node i attaches to a uniformly chosen
/// earlier node. Weights are 1 unless a range is given.
inline WeightedGraph random_tree(std::size_t n, std::mt19937_64& rng, double w_lo = 1.0, double w_hi = 1.0) {
  std::vector<Edge> edges;
  std::uniform_real_distribution<double> wdist(w_lo, w_hi);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    const double w = w_lo == w_hi ? w_lo : wdist(rng);
    edges.push_back({parent(rng), i, w});
  }
  return WeightedGraph(n, std::move(edges));
}

/// Random spanning tree plus `extra` chords, weights uniform in [w_lo, w_hi].
inline WeightedGraph random_connected_graph(std::size_t n, std::size_t extra, std::mt19937_64& rng, double w_lo = 1.0,
                                            double w_hi = 1.0) {
  std::vector<Edge> edges = random_tree(n, rng, w_lo, w_hi).edges();
  std::set<std::pair<NodeId, NodeId>> present;
  for (const auto& e : edges) present.emplace(std::min(e.u, e.v), std::max(e.u, e.v));
  const std::size_t max_edges = n * (n - 1) / 2;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> wdist(w_lo, w_hi);
  while (extra > 0 && present.size() < max_edges) {
    NodeId a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (!present.emplace(std::min(a, b), std::max(a, b)).second) continue;
    edges.push_back({a, b, w_lo == w_hi ? w_lo : wdist(rng)});
    --extra;
  }
  return WeightedGraph(n, std::move(edges));
}

// ---------------------------------------------------------------------------
// Splits

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  bool operator==(const SplitFractions&) const = default;
};

/// Index partition for node classification (node ids) or link prediction
/// (edge indices, plus sampled non-edges as validation/test negatives).
struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  std::vector<std::pair<NodeId, NodeId>> val_neg;
  std::vector<std::pair<NodeId, NodeId>> test_neg;

  bool operator==(const SplitSpec&) const = default;
};

namespace detail {

inline std::array<std::size_t, 3> split_sizes(std::size_t population, const SplitFractions& f) {
  if (!(f.train > 0.0) || !(f.val > 0.0) || !(f.test > 0.0))
    throw ValidationError("split fractions must all be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  const auto n = static_cast<double>(population);
  const auto val = static_cast<std::size_t>(std::llround(f.val * n));
  const auto test = static_cast<std::size_t>(std::llround(f.test * n));
  if (val == 0 || test == 0 || val + test >= population)
    throw ValidationError("population of " + std::to_string(population) + " is too small for the requested split");
  return {population - val - test, val, test};
}

inline void fill_split(SplitSpec& s, std::vector<std::size_t> order, const std::array<std::size_t, 3>& sizes) {
  auto it = order.begin();
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  s.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(it, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

}  // namespace detail

/// Seeded random node split.
inline SplitSpec split_nodes(std::size_t num_nodes, const SplitFractions& f, std::uint64_t seed) {
  const auto sizes = detail::split_sizes(num_nodes, f);
  std::vector<std::size_t> order(num_nodes);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SplitSpec s;
  s.seed = seed;
  detail::fill_split(s, std::move(order), sizes);
  return s;
}

/// Uniform non-edge (u < v) drawn by rejection, excluding anything in `taken`.
inline std::pair<NodeId, NodeId> sample_non_edge(const WeightedGraph& g, std::mt19937_64& rng,
                                                 const std::set<std::pair<NodeId, NodeId>>& taken = {}) {
  const std::size_t n = g.num_nodes();
  if (n < 2 || g.num_edges() + taken.size() >= n * (n - 1) / 2)
    throw ValidationError("graph has no remaining non-edges to sample");
  std::uniform_int_distribution<NodeId> pick(0, n - 1);
  for (;;) {
    NodeId a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (g.has_edge(a, b) || taken.count({a, b})) continue;
    return {a, b};
  }
}

/// Seeded random edge split. Validation and test sets each receive as many
/// distinct sampled non-edges as they have positive edges.
inline SplitSpec split_edges(const WeightedGraph& g, const SplitFractions& f, std::uint64_t seed) {
  const auto sizes = detail::split_sizes(g.num_edges(), f);
  std::vector<std::size_t> order(g.num_edges());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SplitSpec s;
  s.seed = seed;
  detail::fill_split(s, std::move(order), sizes);
  std::set<std::pair<NodeId, NodeId>> taken;
  for (std::size_t i = 0; i < s.val.size(); ++i) {
    auto p = sample_non_edge(g, rng, taken);
    taken.insert(p);
    s.val_neg.push_back(p);
  }
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    auto p = sample_non_edge(g, rng, taken);
    taken.insert(p);
    s.test_neg.push_back(p);
  }
  return s;
}

inline nlohmann::json to_json(const SplitSpec& s) {
  nlohmann::json j{{"train", s.train}, {"val", s.val}, {"test", s.test}, {"seed", s.seed}};
  if (!s.val_neg.empty() || !s.test_neg.empty()) {
    j["val_neg"] = s.val_neg;
    j["test_neg"] = s.test_neg;
  }
  return j;
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
  SplitSpec s;
  try {
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("val_neg")) s.val_neg = j.at("val_neg").get<std::vector<std::pair<NodeId, NodeId>>>();
    if (j.contains("test_neg")) s.test_neg = j.at("test_neg").get<std::vector<std::pair<NodeId, NodeId>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("split JSON: ") + e.what());
  }
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (auto i : *part)
      if (!all.insert(i).second) throw ValidationError("split sets overlap at index " + std::to_string(i));
  return s;
}

}  // namespace jsgnn
