#ifndef FASTMIX_EXACT_HPP
#define FASTMIX_EXACT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastmix/model.hpp"

namespace fastmix {

/// Exact moments of an Ising model.
struct ExactMarginals {
  VectorXd p_plus;        // P(x_i = +1)
  VectorXd edge_moments;  // E[x_i x_j], canonical edge order
  double log_partition = 0.0;

  /// Mean of the sufficient statistics, mu = grad A(theta), in parameter layout.
  VectorXd mean() const {
    VectorXd mu(edge_moments.size() + p_plus.size());
    mu.head(edge_moments.size()) = edge_moments;
    mu.tail(p_plus.size()) = (2.0 * p_plus.array() - 1.0).matrix();
    return mu;
  }
};

/// Thrown when an elimination order exceeds the configured induced width.
class WidthExceeded : public std::runtime_error {
 public:
  WidthExceeded(int width, int limit)
      : std::runtime_error("elimination order has induced width " + std::to_string(width) +
                           " (limit " + std::to_string(limit) + ")"),
        width_(width) {}
  int width() const { return width_; }

 private:
  int width_;
};

inline constexpr int kMaxEnumerationNodes = 20;
inline constexpr int kMaxInducedWidth = 12;

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Spin configuration encoded by the low n bits of `code` (bit set = +1).
inline SpinConfig decode_config(std::uint64_t code, int n) {
  SpinConfig x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = ((code >> i) & 1U) ? 1 : -1;
  return x;
}

/// Normalized probabilities of all 2^n configurations, indexed by code.
inline std::vector<double> enumerate_probabilities(const IsingModel& m, double* log_partition = nullptr) {
  const int n = m.size();
  if (n > kMaxEnumerationNodes)
    throw std::invalid_argument("enumeration refused for n = " + std::to_string(n) + " > " +
                                std::to_string(kMaxEnumerationNodes));
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<double> logw(count);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::uint64_t code = 0; code < count; ++code) {
    logw[code] = energy(m, decode_config(code, n));
    hi = std::max(hi, logw[code]);
  }
  double z = 0.0;
  for (auto& w : logw) {
    w = std::exp(w - hi);
    z += w;
  }
  for (auto& w : logw) w /= z;
  if (log_partition) *log_partition = hi + std::log(z);
  return logw;
}

/// Brute-force marginals by summing over all 2^n configurations (n <= 20).
inline ExactMarginals enumerate_exact(const IsingModel& m) {
  const int n = m.size();
  ExactMarginals out;
  const auto prob = enumerate_probabilities(m, &out.log_partition);
  VectorXd mu = VectorXd::Zero(m.dimension());
  for (std::uint64_t code = 0; code < prob.size(); ++code)
    mu += prob[code] * features(m, decode_config(code, n));
  out.edge_moments = mu.head(m.num_edges());
  out.p_plus = ((mu.tail(n).array() + 1.0) / 2.0).matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Elimination orders

/// Sweeps a grid along its longer side so the frontier spans the shorter
/// one; induced width is min(rows, cols).
inline std::vector<int> grid_order(GridShape g) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(g.size()));
  if (g.cols <= g.rows) {
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) order.push_back(g.node(r, c));
  } else {
    for (int c = 0; c < g.cols; ++c)
      for (int r = 0; r < g.rows; ++r) order.push_back(g.node(r, c));
  }
  return order;
}

namespace detail {

using AdjMatrix = std::vector<std::vector<char>>;

inline AdjMatrix adjacency_matrix(const IsingModel& m) {
  const auto n = static_cast<std::size_t>(m.size());
  AdjMatrix adj(n, std::vector<char>(n, 0));
  for (const auto& e : m.edges()) {
    adj[static_cast<std::size_t>(e.i)][static_cast<std::size_t>(e.j)] = 1;
    adj[static_cast<std::size_t>(e.j)][static_cast<std::size_t>(e.i)] = 1;
  }
  return adj;
}

}  // namespace detail

/// Greedy min-fill order (ties: fewer neighbors, then lower index).
inline std::vector<int> min_fill_order(const IsingModel& m) {
  const int n = m.size();
  auto adj = detail::adjacency_matrix(m);
  std::vector<char> done(static_cast<std::size_t>(n), 0);
  std::vector<int> order;
  auto at = [](int v) { return static_cast<std::size_t>(v); };
  for (int step = 0; step < n; ++step) {
    int best = -1;
    long best_fill = 0;
    int best_deg = 0;
    for (int v = 0; v < n; ++v) {
      if (done[at(v)]) continue;
      std::vector<int> nb;
      for (int u = 0; u < n; ++u)
        if (!done[at(u)] && adj[at(v)][at(u)]) nb.push_back(u);
      long fill = 0;
      for (std::size_t a = 0; a < nb.size(); ++a)
        for (std::size_t b = a + 1; b < nb.size(); ++b)
          if (!adj[at(nb[a])][at(nb[b])]) ++fill;
      const int deg = static_cast<int>(nb.size());
      if (best < 0 || fill < best_fill || (fill == best_fill && deg < best_deg)) {
        best = v;
        best_fill = fill;
        best_deg = deg;
      }
    }
    for (int a = 0; a < n; ++a) {
      if (done[at(a)] || !adj[at(best)][at(a)]) continue;
      for (int b = 0; b < n; ++b)
        if (b != a && !done[at(b)] && adj[at(best)][at(b)]) adj[at(a)][at(b)] = 1;
    }
    done[at(best)] = 1;
    order.push_back(best);
  }
  return order;
}

namespace detail {

struct Clique {
  std::vector<int> vars;  // vars[0] is the eliminated variable
  int parent = -1;
  std::vector<int> children;
  std::vector<int> sep_in_self;    // bit positions of the separator in this clique
  std::vector<int> sep_in_parent;  // bit positions of the separator in the parent
  std::vector<double> belief;      // log domain
  std::vector<double> up;          // message to parent over the separator
  std::vector<double> down;        // message from parent over the separator
};

inline std::size_t sub_index(std::size_t idx, const std::vector<int>& bits) {
  std::size_t s = 0;
  for (std::size_t b = 0; b < bits.size(); ++b) s |= ((idx >> bits[b]) & 1U) << b;
  return s;
}

inline int bit_of(const std::vector<int>& vars, int v) {
  auto it = std::find(vars.begin(), vars.end(), v);
  return static_cast<int>(it - vars.begin());
}

inline double spin_at(std::size_t idx, int bit) { return ((idx >> bit) & 1U) ? 1.0 : -1.0; }

inline double log_sum(const std::vector<double>& v) {
  double acc = -std::numeric_limits<double>::infinity();
  for (double x : v) acc = log_add_exp(acc, x);
  return acc;
}

inline void check_order(int n, const std::vector<int>& order) {
  if (static_cast<int>(order.size()) != n) throw std::invalid_argument("order must list every node");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int v : order) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)])
      throw std::invalid_argument("order must be a permutation of the nodes");
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

/// Cliques produced by eliminating in `order`; clique k belongs to order[k].
inline std::vector<Clique> elimination_cliques(const IsingModel& m, const std::vector<int>& order,
                                               int max_width) {
  const int n = m.size();
  check_order(n, order);
  auto adj = adjacency_matrix(m);
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  std::vector<char> done(static_cast<std::size_t>(n), 0);
  std::vector<Clique> cliques(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int v = order[static_cast<std::size_t>(k)];
    auto& c = cliques[static_cast<std::size_t>(k)];
    c.vars.push_back(v);
    for (int u = 0; u < n; ++u)
      if (!done[static_cast<std::size_t>(u)] && adj[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)])
        c.vars.push_back(u);
    const int width = static_cast<int>(c.vars.size()) - 1;
    if (width > max_width) throw WidthExceeded(width, max_width);
    for (std::size_t a = 1; a < c.vars.size(); ++a)
      for (std::size_t b = 1; b < c.vars.size(); ++b)
        if (a != b)
          adj[static_cast<std::size_t>(c.vars[a])][static_cast<std::size_t>(c.vars[b])] = 1;
    done[static_cast<std::size_t>(v)] = 1;
  }
  for (int k = 0; k < n; ++k) {
    auto& c = cliques[static_cast<std::size_t>(k)];
    if (c.vars.size() < 2) continue;
    int parent = n;
    for (std::size_t a = 1; a < c.vars.size(); ++a)
      parent = std::min(parent, pos[static_cast<std::size_t>(c.vars[a])]);
    c.parent = parent;
    auto& p = cliques[static_cast<std::size_t>(parent)];
    p.children.push_back(k);
    for (std::size_t a = 1; a < c.vars.size(); ++a) {
      c.sep_in_self.push_back(static_cast<int>(a));
      c.sep_in_parent.push_back(bit_of(p.vars, c.vars[a]));
    }
  }
  return cliques;
}

}  // namespace detail

/// Largest clique size minus one when eliminating in `order`.
inline int induced_width(const IsingModel& m, const std::vector<int>& order) {
  const auto cliques = detail::elimination_cliques(m, order, std::numeric_limits<int>::max());
  int w = 0;
  for (const auto& c : cliques) w = std::max(w, static_cast<int>(c.vars.size()) - 1);
  return w;
}

/// Junction-tree inference over the cliques of an elimination order.
/// Two log-domain passes give every clique marginal, from which node
/// marginals, edge moments and log Z are read off.
inline ExactMarginals eliminate_exact(const IsingModel& m, const std::vector<int>& order,
                                      int max_width = kMaxInducedWidth) {
  const int n = m.size();
  auto cliques = detail::elimination_cliques(m, order, max_width);
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  auto clique_of = [&](int v) -> detail::Clique& { return cliques[static_cast<std::size_t>(pos[static_cast<std::size_t>(v)])]; };
  auto edge_home = [&](const Edge& e) -> detail::Clique& {
    return cliques[static_cast<std::size_t>(
        std::min(pos[static_cast<std::size_t>(e.i)], pos[static_cast<std::size_t>(e.j)]))];
  };

  for (auto& c : cliques) c.belief.assign(std::size_t{1} << c.vars.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    auto& c = clique_of(i);  // vars[0] == i
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
      c.belief[idx] += m.field(i) * detail::spin_at(idx, 0);
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    auto& c = edge_home(ed);
    const int bi = detail::bit_of(c.vars, ed.i), bj = detail::bit_of(c.vars, ed.j);
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
      c.belief[idx] += m.coupling(e) * detail::spin_at(idx, bi) * detail::spin_at(idx, bj);
  }

  // Upward pass: children always precede parents in elimination order.
  const double ninf = -std::numeric_limits<double>::infinity();
  double log_z = 0.0;
  for (auto& c : cliques) {
    for (int child : c.children) {
      const auto& ch = cliques[static_cast<std::size_t>(child)];
      for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
        c.belief[idx] += ch.up[detail::sub_index(idx, ch.sep_in_parent)];
    }
    if (c.parent < 0) {
      log_z += detail::log_sum(c.belief);
      continue;
    }
    c.up.assign(std::size_t{1} << c.sep_in_self.size(), ninf);
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx) {
      auto& slot = c.up[detail::sub_index(idx, c.sep_in_self)];
      slot = log_add_exp(slot, c.belief[idx]);
    }
  }

  // Downward pass: after it, belief holds the unnormalized clique marginal.
  for (int k = n - 1; k >= 0; --k) {
    auto& c = cliques[static_cast<std::size_t>(k)];
    if (c.parent < 0) continue;
    const auto& p = cliques[static_cast<std::size_t>(c.parent)];
    c.down.assign(c.up.size(), ninf);
    for (std::size_t idx = 0; idx < p.belief.size(); ++idx) {
      const std::size_t s = detail::sub_index(idx, c.sep_in_parent);
      c.down[s] = log_add_exp(c.down[s], p.belief[idx] - c.up[s]);
    }
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
      c.belief[idx] += c.down[detail::sub_index(idx, c.sep_in_self)];
  }

  ExactMarginals out;
  out.log_partition = log_z;
  out.p_plus.resize(n);
  out.edge_moments.resize(m.num_edges());
  for (auto& c : cliques) {
    const double norm = detail::log_sum(c.belief);
    for (auto& b : c.belief) b = std::exp(b - norm);
  }
  for (int i = 0; i < n; ++i) {
    const auto& c = clique_of(i);
    double p = 0.0;
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
      if (idx & 1U) p += c.belief[idx];
    out.p_plus(i) = p;
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    const auto& c = edge_home(ed);
    const int bi = detail::bit_of(c.vars, ed.i), bj = detail::bit_of(c.vars, ed.j);
    double mom = 0.0;
    for (std::size_t idx = 0; idx < c.belief.size(); ++idx)
      mom += c.belief[idx] * detail::spin_at(idx, bi) * detail::spin_at(idx, bj);
    out.edge_moments(e) = mom;
  }
  return out;
}

/// Picks an exact backend: grid sweep for grids, min-fill elimination when
/// its width is within bounds, enumeration otherwise.
inline ExactMarginals exact_marginals(const IsingModel& m) {
  if (auto g = detect_grid(m); g && std::min(g->rows, g->cols) <= kMaxInducedWidth)
    return eliminate_exact(m, grid_order(*g));
  const auto order = min_fill_order(m);
  if (induced_width(m, order) <= kMaxInducedWidth) return eliminate_exact(m, order);
  return enumerate_exact(m);
}

inline double log_partition(const IsingModel& m) { return exact_marginals(m).log_partition; }

/// KL(theta || psi) = (theta - psi) . mu(theta) + A(psi) - A(theta).
/// Edge sets may differ; a missing edge has weight zero.
inline double exact_kl(const IsingModel& theta, const IsingModel& psi) {
  if (theta.size() != psi.size()) throw std::invalid_argument("models differ in node count");
  if (theta.same_graph(psi)) {
    const auto mt = exact_marginals(theta);
    const double a_psi = log_partition(psi);
    return (theta.params() - psi.params()).dot(mt.mean()) + a_psi - mt.log_partition;
  }
  const auto all = union_edges(theta, psi);
  return exact_kl(theta.embedded_in(all), psi.embedded_in(all));
}

}  // namespace fastmix

#endif  // FASTMIX_EXACT_HPP
