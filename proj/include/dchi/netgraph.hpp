#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <istream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dchi/errors.hpp"
#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"
#include "dchi/random.hpp"

namespace dchi {

// Edge convention used throughout: an edge (from -> to) is a structural
// nonzero M(to, from) of the associated matrix, i.e. node `to` reads `from`.
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class Digraph {
 public:
  Digraph() = default;

  Digraph(std::size_t node_count, std::vector<Edge> edges) : node_count_(node_count), edges_(std::move(edges)) {
    if (node_count_ == 0) throw std::invalid_argument("Digraph: node count must be positive");
    std::set<Edge> seen;
    for (const auto& e : edges_) {
      if (e.from >= node_count_ || e.to >= node_count_)
        throw std::invalid_argument("Digraph: edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                                    ") out of range");
      if (!seen.insert(e).second)
        throw std::invalid_argument("Digraph: duplicate edge (" + std::to_string(e.from) + ", " +
                                    std::to_string(e.to) + ")");
    }
    out_.assign(node_count_, {});
    for (const auto& e : edges_) out_[e.from].push_back(e.to);
  }

  /// Directed cycle 0 -> 1 -> ... -> n-1 -> 0.
  static Digraph cycle(std::size_t n) {
    std::vector<Edge> e;
    if (n > 1)
      for (std::size_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
    return Digraph(n, std::move(e));
  }

  /// Pattern of a square matrix under the edge convention above.
  static Digraph from_pattern(const Mat& m) {
    if (!m.square()) throw std::invalid_argument("Digraph::from_pattern: matrix must be square");
    std::vector<Edge> e;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        if (m(i, j) != 0.0) e.push_back({j, i});
    return Digraph(m.rows(), std::move(e));
  }

  std::size_t node_count() const noexcept { return node_count_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& out_neighbors(std::size_t v) const { return out_.at(v); }

  bool has_edge(std::size_t from, std::size_t to) const {
    const auto& o = out_.at(from);
    return std::find(o.begin(), o.end(), to) != o.end();
  }

  Digraph with_self_loops() const {
    std::vector<Edge> e = edges_;
    for (std::size_t v = 0; v < node_count_; ++v)
      if (!has_edge(v, v)) e.push_back({v, v});
    return Digraph(node_count_, std::move(e));
  }

  friend bool operator==(const Digraph& a, const Digraph& b) {
    if (a.node_count_ != b.node_count_) return false;
    auto ea = a.edges_, eb = b.edges_;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return ea == eb;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> out_;
};

/// Parses the text edge list: one `from to` pair per line, `#` starts a comment.
/// Node count is max index + 1 unless given.
inline Digraph read_edge_list(std::istream& in, std::size_t node_count = 0) {
  std::vector<Edge> edges;
  std::size_t max_idx = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long long f = 0, t = 0;
    if (!(ls >> f)) continue;
    if (!(ls >> t) || f < 0 || t < 0)
      throw SchemaError("edge list line " + std::to_string(lineno) + ": expected two nonnegative indices");
    std::string extra;
    if (ls >> extra) throw SchemaError("edge list line " + std::to_string(lineno) + ": trailing tokens");
    edges.push_back({static_cast<std::size_t>(f), static_cast<std::size_t>(t)});
    max_idx = std::max({max_idx, edges.back().from, edges.back().to});
  }
  if (node_count == 0) node_count = edges.empty() ? 1 : max_idx + 1;
  return Digraph(node_count, std::move(edges));
}

inline std::string write_edge_list(const Digraph& g) {
  std::ostringstream os;
  for (const auto& e : g.edges()) os << e.from << ' ' << e.to << '\n';
  return os.str();
}

/// Which state each sensor observes; sensor ids are positions.
struct SensingPattern {
  std::vector<std::size_t> state_of_sensor;

  std::size_t sensor_count() const noexcept { return state_of_sensor.size(); }

  void validate(std::size_t n_states) const {
    if (state_of_sensor.empty()) throw std::invalid_argument("SensingPattern: no sensors");
    for (std::size_t s : state_of_sensor)
      if (s >= n_states) throw std::invalid_argument("SensingPattern: state index out of range");
  }

  bool senses(std::size_t state) const {
    return std::find(state_of_sensor.begin(), state_of_sensor.end(), state) != state_of_sensor.end();
  }
};

using Components = std::vector<std::vector<std::size_t>>;

/// Strongly connected components (iterative Tarjan). Components come out in
/// reverse topological order; nodes inside a component are sorted.
inline Components tarjan_scc(const Digraph& g) {
  constexpr std::size_t unvisited = std::numeric_limits<std::size_t>::max();
  const std::size_t n = g.node_count();
  std::vector<std::size_t> index(n, unvisited), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  Components out;
  std::size_t counter = 0;

  struct Frame {
    std::size_t v;
    std::size_t next;
  };
  std::vector<Frame> call;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto& nbrs = g.out_neighbors(f.v);
      if (f.next < nbrs.size()) {
        const std::size_t w = nbrs[f.next++];
        if (index[w] == unvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w = 0;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  }
  return out;
}

/// True iff the row/column bipartite graph of the pattern has a perfect
/// matching (Hopcroft-Karp).
inline bool is_structurally_full_rank(const Digraph& g) {
  const std::size_t n = g.node_count();
  constexpr std::size_t nil = std::numeric_limits<std::size_t>::max();
  // left = rows (edge targets), right = columns (edge sources)
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : g.edges()) adj[e.to].push_back(e.from);
  std::vector<std::size_t> match_l(n, nil), match_r(n, nil), dist(n, 0);

  auto bfs = [&]() {
    std::queue<std::size_t> q;
    bool found = false;
    for (std::size_t u = 0; u < n; ++u) {
      if (match_l[u] == nil) {
        dist[u] = 0;
        q.push(u);
      } else {
        dist[u] = nil;
      }
    }
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u]) {
        const std::size_t w = match_r[v];
        if (w == nil) {
          found = true;
        } else if (dist[w] == nil) {
          dist[w] = dist[u] + 1;
          q.push(w);
        }
      }
    }
    return found;
  };

  auto dfs = [&](auto&& self, std::size_t u) -> bool {
    for (std::size_t v : adj[u]) {
      const std::size_t w = match_r[v];
      if (w == nil || (dist[w] == dist[u] + 1 && self(self, w))) {
        match_l[u] = v;
        match_r[v] = u;
        return true;
      }
    }
    dist[u] = nil;
    return false;
  };

  std::size_t matching = 0;
  while (bfs()) {
    for (std::size_t u = 0; u < n; ++u)
      if (match_l[u] == nil && dfs(dfs, u)) ++matching;
  }
  return matching == n;
}

struct Lemma1Report {
  bool satisfied = false;
  Components components;
  /// Indices into `components` of SCCs with no sensed state.
  std::vector<std::size_t> uncovered;
};

/// Every SCC of the state graph must contain a sensed state.
/// Throws LemmaInapplicable when the pattern is not structurally full rank.
inline Lemma1Report check_lemma1(const Digraph& g, const SensingPattern& sp) {
  sp.validate(g.node_count());
  if (!is_structurally_full_rank(g))
    throw LemmaInapplicable("state graph is not structurally full rank; SCC coverage test does not apply");
  Lemma1Report rep;
  rep.components = tarjan_scc(g);
  for (std::size_t c = 0; c < rep.components.size(); ++c) {
    const auto& comp = rep.components[c];
    if (std::none_of(comp.begin(), comp.end(), [&](std::size_t v) { return sp.senses(v); }))
      rep.uncovered.push_back(c);
  }
  rep.satisfied = rep.uncovered.empty();
  return rep;
}

/// The sensor network must be strongly connected (W irreducible).
inline bool check_lemma2(const Digraph& gn) { return tarjan_scc(gn).size() == 1; }

/// Row-stochastic fusion matrix with uniform weights over in-neighbours
/// including the sensor itself.
inline Mat build_row_stochastic_w(const Digraph& gn) {
  const Digraph g = gn.with_self_loops();
  const std::size_t n = g.node_count();
  Mat w(n, n);
  for (const auto& e : g.edges()) w(e.to, e.from) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : w.row(i)) s += v;
    for (double& v : w.row(i)) v /= s;
  }
  return w;
}

/// Row-stochastic fusion matrix with weights drawn from (0, 1] then normalized.
inline Mat build_row_stochastic_w(const Digraph& gn, GaussianSampler& sampler) {
  const Digraph g = gn.with_self_loops();
  const std::size_t n = g.node_count();
  Mat w(n, n);
  auto edges = g.edges();
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::pair(a.to, a.from) < std::pair(b.to, b.from);
  });
  for (const auto& e : edges) w(e.to, e.from) = sampler.uniform_open_closed(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : w.row(i)) s += v;
    for (double& v : w.row(i)) v /= s;
  }
  return w;
}

/// Dimension of the observable subspace of (m, c): the span of the rows of
/// c, c m, c m^2, ... grown one block at a time with twice-applied modified
/// Gram-Schmidt. A candidate direction is kept when its orthogonal remainder
/// exceeds rel_tol times its length.
inline std::size_t observability_rank(const Mat& m, const Mat& c, double rel_tol = 1e-8) {
  if (!m.square() || c.cols() != m.rows())
    throw std::invalid_argument("observability_rank: dimensions do not conform");
  const std::size_t dim = m.rows();
  const Mat mt = m.transpose();
  std::vector<Vec> basis;
  std::vector<Vec> frontier;
  auto try_add = [&](Vec v) -> bool {
    const double len = norm2(v);
    if (len == 0.0) return false;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) {
        const double p = dot(q, v);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= p * q[i];
      }
    const double rem = norm2(v);
    if (rem <= rel_tol * len) return false;
    for (auto& x : v) x /= rem;
    basis.push_back(v);
    frontier.push_back(std::move(v));
    return true;
  };
  for (std::size_t i = 0; i < c.rows(); ++i) {
    const auto r = c.row(i);
    try_add(Vec(r.begin(), r.end()));
  }
  while (!frontier.empty() && basis.size() < dim) {
    std::vector<Vec> layer;
    layer.swap(frontier);
    for (const auto& v : layer) {
      try_add(mt * v);
      if (basis.size() == dim) break;
    }
  }
  return basis.size();
}

/// Numeric observability of (W kron A, D_H) for desk-scale instances.
inline bool verify_distributed_observability(const Mat& a, const Mat& w, const Mat& dh, std::size_t max_dim = 60) {
  if (!a.square() || !w.square() || !dh.square())
    throw std::invalid_argument("verify_distributed_observability: matrices must be square");
  const std::size_t dim = a.rows() * w.rows();
  if (dh.rows() != dim) throw std::invalid_argument("verify_distributed_observability: D_H must be Nn x Nn");
  if (dim > max_dim)
    throw InstanceTooLarge("verify_distributed_observability: Nn = " + std::to_string(dim) + " exceeds cap " +
                           std::to_string(max_dim));
  return observability_rank(kron(w, a), dh) == dim;
}

}  // namespace dchi
