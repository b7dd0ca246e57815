#ifndef FASTMIX_DIVERGENCE_HPP
#define FASTMIX_DIVERGENCE_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/kruskal_min_spanning_tree.hpp>

#include "fastmix/exact.hpp"
#include "fastmix/model.hpp"
#include "fastmix/projection.hpp"
#include "fastmix/rng.hpp"
#include "fastmix/sampling.hpp"

namespace fastmix {

enum class DivergenceKind { euclidean, inclusive_kl, piecewise_kl, reverse_kl };

inline const char* to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::euclidean: return "euclid";
    case DivergenceKind::inclusive_kl: return "kl-incl";
    case DivergenceKind::piecewise_kl: return "kl-piecewise";
    case DivergenceKind::reverse_kl: return "kl-rev";
  }
  return "?";
}

inline DivergenceKind parse_divergence(const std::string& s) {
  if (s == "euclid" || s == "euclidean") return DivergenceKind::euclidean;
  if (s == "kl-incl") return DivergenceKind::inclusive_kl;
  if (s == "kl-piecewise" || s == "piecewise") return DivergenceKind::piecewise_kl;
  if (s == "kl-rev" || s == "reverse-kl") return DivergenceKind::reverse_kl;
  throw std::invalid_argument("unknown divergence '" + s + "'");
}

enum class SubgraphKind { grid_chains, grid_width2, random_spanning_trees };

inline const char* to_string(SubgraphKind k) {
  switch (k) {
    case SubgraphKind::grid_chains: return "chains";
    case SubgraphKind::grid_width2: return "width2";
    case SubgraphKind::random_spanning_trees: return "trees";
  }
  return "?";
}

inline SubgraphKind parse_subgraph_kind(const std::string& s) {
  if (s == "chains") return SubgraphKind::grid_chains;
  if (s == "width2") return SubgraphKind::grid_width2;
  if (s == "trees") return SubgraphKind::random_spanning_trees;
  throw std::invalid_argument("unknown subgraph kind '" + s + "'");
}

/// Tractable edge subsets used by the piecewise divergence.
struct SubgraphSet {
  std::vector<std::vector<int>> subgraphs;  // edge indices into the model
  std::vector<std::vector<int>> coverage;   // edge index -> subgraphs containing it

  int size() const { return static_cast<int>(subgraphs.size()); }
};

class CoverageError : public std::runtime_error {
 public:
  explicit CoverageError(std::vector<Edge> uncovered)
      : std::runtime_error(describe(uncovered)), uncovered_(std::move(uncovered)) {}
  const std::vector<Edge>& uncovered() const { return uncovered_; }

 private:
  static std::string describe(const std::vector<Edge>& u) {
    std::string s = "subgraphs leave " + std::to_string(u.size()) + " edge(s) uncovered:";
    for (const auto& e : u) s += " (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")";
    return s;
  }
  std::vector<Edge> uncovered_;
};

inline constexpr int kMaxSpanningTrees = 100;

namespace detail {

inline SubgraphSet with_coverage(const IsingModel& m, std::vector<std::vector<int>> subgraphs) {
  SubgraphSet out;
  out.subgraphs = std::move(subgraphs);
  out.coverage.assign(static_cast<std::size_t>(m.num_edges()), {});
  for (int t = 0; t < out.size(); ++t)
    for (int e : out.subgraphs[static_cast<std::size_t>(t)])
      out.coverage[static_cast<std::size_t>(e)].push_back(t);
  std::vector<Edge> uncovered;
  for (int e = 0; e < m.num_edges(); ++e)
    if (out.coverage[static_cast<std::size_t>(e)].empty()) uncovered.push_back(m.edge(e));
  if (!uncovered.empty()) throw CoverageError(std::move(uncovered));
  return out;
}

inline std::vector<int> grid_path(const IsingModel& m, GridShape g, bool horizontal, int line) {
  std::vector<int> edges;
  const int len = horizontal ? g.cols : g.rows;
  for (int k = 0; k + 1 < len; ++k) {
    const int a = horizontal ? g.node(line, k) : g.node(k, line);
    const int b = horizontal ? g.node(line, k + 1) : g.node(k + 1, line);
    edges.push_back(m.edge_index(a, b));
  }
  return edges;
}

// Two adjacent rows (or columns) and the rungs between them.
inline std::vector<int> grid_ladder(const IsingModel& m, GridShape g, bool horizontal, int line) {
  auto edges = grid_path(m, g, horizontal, line);
  const auto second = grid_path(m, g, horizontal, line + 1);
  edges.insert(edges.end(), second.begin(), second.end());
  const int len = horizontal ? g.cols : g.rows;
  for (int k = 0; k < len; ++k) {
    const int a = horizontal ? g.node(line, k) : g.node(k, line);
    const int b = horizontal ? g.node(line + 1, k) : g.node(k, line + 1);
    edges.push_back(m.edge_index(a, b));
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace detail

/// Builds the covering subgraphs.
///  - grid_chains: every row and every column as a path;
///  - grid_width2: every pair of adjacent rows and of adjacent columns as a ladder;
///  - random_spanning_trees: minimum spanning trees (forests, if the graph is
///    disconnected) under i.i.d. uniform edge weights, drawn until every edge
///    is covered, at most kMaxSpanningTrees of them.
/// A graph without edges yields a single empty subgraph.
inline SubgraphSet build_subgraphs(const IsingModel& m, SubgraphKind kind, std::uint64_t seed,
                                   std::optional<GridShape> grid = std::nullopt) {
  if (m.num_edges() == 0) return detail::with_coverage(m, {{}});
  std::vector<std::vector<int>> subgraphs;
  if (kind == SubgraphKind::grid_chains || kind == SubgraphKind::grid_width2) {
    if (!grid) grid = detect_grid(m);
    if (!grid || grid_edges(*grid) != m.edges())
      throw std::invalid_argument("grid subgraphs require a grid-structured model");
    const GridShape g = *grid;
    const int span = kind == SubgraphKind::grid_chains ? 0 : 1;
    for (int r = 0; r + span < g.rows; ++r) {
      auto t = span == 0 ? detail::grid_path(m, g, true, r) : detail::grid_ladder(m, g, true, r);
      if (!t.empty()) subgraphs.push_back(std::move(t));
    }
    for (int c = 0; c + span < g.cols; ++c) {
      auto t = span == 0 ? detail::grid_path(m, g, false, c) : detail::grid_ladder(m, g, false, c);
      if (!t.empty()) subgraphs.push_back(std::move(t));
    }
    return detail::with_coverage(m, std::move(subgraphs));
  }

  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::undirectedS, boost::no_property,
                                      boost::property<boost::edge_weight_t, double,
                                                      boost::property<boost::edge_index_t, int>>>;
  Rng rng(seed);
  std::vector<char> covered(static_cast<std::size_t>(m.num_edges()), 0);
  int remaining = m.num_edges();
  while (remaining > 0 && static_cast<int>(subgraphs.size()) < kMaxSpanningTrees) {
    Graph g(static_cast<std::size_t>(m.size()));
    for (int e = 0; e < m.num_edges(); ++e) {
      const auto& ed = m.edge(e);
      boost::add_edge(static_cast<std::size_t>(ed.i), static_cast<std::size_t>(ed.j),
                      Graph::edge_property_type(rng.uniform(), e), g);
    }
    std::vector<boost::graph_traits<Graph>::edge_descriptor> tree;
    boost::kruskal_minimum_spanning_tree(g, std::back_inserter(tree));
    const auto index = boost::get(boost::edge_index, g);
    std::vector<int> t;
    for (const auto& d : tree) {
      const int e = index[d];
      t.push_back(e);
      if (!covered[static_cast<std::size_t>(e)]) {
        covered[static_cast<std::size_t>(e)] = 1;
        --remaining;
      }
    }
    std::sort(t.begin(), t.end());
    subgraphs.push_back(std::move(t));
  }
  return detail::with_coverage(m, std::move(subgraphs));
}

// ---------------------------------------------------------------------------
// Projected gradient driver

struct TraceEntry {
  int iteration = 0;
  double value = 0.0;          // divergence (or its surrogate) at the iterate
  double param_norm = 0.0;     // ||psi||_2
  double spectral_norm = 0.0;  // || |beta(psi)| ||_2
  int subgraph = -1;           // maximizing subgraph, piecewise only
};

struct ProjectionRun {
  DivergenceKind kind = DivergenceKind::euclidean;
  double step = 0.0;
  int iterations = 0;
  std::vector<TraceEntry> trace;
  IsingModel psi;
  long decompositions = 0;  // eigendecompositions spent in projections
  long gibbs_sweeps = 0;    // per-configuration sweeps spent on the sample pool
};

struct DivergenceOptions {
  double c = 2.5;
  double step = 0.1;
  int iterations = 60;
  int pool_size = 500;
  bool step_decay = false;  // step / sqrt(t + 1) instead of a constant step
  std::uint64_t seed = 0;
  ProjectionOptions projection;
};

namespace detail {

struct GradientStep {
  double value = 0.0;
  VectorXd gradient;
  int subgraph = -1;
};

inline TraceEntry trace_entry(int t, const IsingModel& psi, const GradientStep& g) {
  return {t, g.value, psi.params().norm(), spectral_norm(psi.beta().cwiseAbs()), g.subgraph};
}

/// psi <- Pi(psi - step * grad) from the Euclidean projection of theta.
/// Only interactions are constrained; fields take the plain gradient step.
template <class GradFn>
ProjectionRun projected_descent(const IsingModel& theta, DivergenceKind kind, const DivergenceOptions& o,
                                GradFn&& grad) {
  if (o.iterations < 0) throw std::invalid_argument("iteration count must be nonnegative");
  ProjectionRun run;
  run.kind = kind;
  run.step = o.step;
  run.iterations = o.iterations;
  DecompositionCounter counter;
  IsingModel psi = project_model(theta, o.c, o.projection, &counter);
  for (int t = 0; t < o.iterations; ++t) {
    const GradientStep g = grad(psi, t);
    run.trace.push_back(trace_entry(t, psi, g));
    const double step = o.step_decay ? o.step / std::sqrt(t + 1.0) : o.step;
    IsingModel next = psi;
    next.set_params(psi.params() - step * g.gradient);
    psi = project_model(next, o.c, o.projection, &counter);
  }
  run.psi = std::move(psi);
  run.decompositions = counter.count;
  return run;
}

inline void require_same_graph(const IsingModel& a, const IsingModel& b) {
  if (!a.same_graph(b)) throw std::invalid_argument("models must share a graph");
}

}  // namespace detail

/// Euclidean projection, as a one-entry run.
inline ProjectionRun project_euclidean(const IsingModel& theta, double c, const ProjectionOptions& opts = {}) {
  ProjectionRun run;
  run.kind = DivergenceKind::euclidean;
  run.iterations = 1;
  DecompositionCounter counter;
  run.psi = project_model(theta, c, opts, &counter);
  run.decompositions = counter.count;
  detail::GradientStep g;
  g.value = (theta.params() - run.psi.params()).norm();
  run.trace.push_back(detail::trace_entry(0, run.psi, g));
  return run;
}

// ---------------------------------------------------------------------------
// Inclusive KL(theta || psi)

/// d KL(theta||psi) / d psi = mu(psi) - mu(theta).
inline VectorXd grad_inclusive_kl(const IsingModel& theta, const IsingModel& psi) {
  detail::require_same_graph(theta, psi);
  return exact_marginals(psi).mean() - exact_marginals(theta).mean();
}

inline ProjectionRun project_inclusive_kl(const IsingModel& theta, const DivergenceOptions& o) {
  const auto target = exact_marginals(theta);
  const VectorXd mu_theta = target.mean();
  const VectorXd theta_params = theta.params();
  return detail::projected_descent(theta, DivergenceKind::inclusive_kl, o, [&](const IsingModel& psi, int) {
    const auto mp = exact_marginals(psi);
    detail::GradientStep g;
    g.value = (theta_params - psi.params()).dot(mu_theta) + mp.log_partition - target.log_partition;
    g.gradient = mp.mean() - mu_theta;
    return g;
  });
}

// ---------------------------------------------------------------------------
// Piecewise KL: max_T KL(theta(T) || psi(T))

struct PiecewiseValue {
  double value = 0.0;
  int argmax = -1;
  VectorXd gradient;  // mu_T(psi(T)) - mu_T(theta(T)) at T = argmax, zero elsewhere
  std::vector<double> per_subgraph;
};

/// Piecewise divergence with the theta side of every subgraph cached.
class PiecewiseKl {
 public:
  PiecewiseKl(const IsingModel& theta, SubgraphSet subgraphs) : theta_(theta), set_(std::move(subgraphs)) {
    if (set_.size() == 0) throw std::invalid_argument("piecewise divergence needs at least one subgraph");
    for (const auto& t : set_.subgraphs) {
      const IsingModel sub = theta_.restricted_to(t);
      auto ex = exact_marginals(sub);
      pieces_.push_back({sub.params(), ex.mean(), ex.log_partition});
    }
  }

  PiecewiseValue operator()(const IsingModel& psi) const {
    detail::require_same_graph(theta_, psi);
    PiecewiseValue out;
    out.gradient = VectorXd::Zero(psi.dimension());
    VectorXd best_grad;
    for (int t = 0; t < set_.size(); ++t) {
      const auto& edges = set_.subgraphs[static_cast<std::size_t>(t)];
      const auto& piece = pieces_[static_cast<std::size_t>(t)];
      const IsingModel sub = psi.restricted_to(edges);
      const auto ex = exact_marginals(sub);
      const VectorXd mu_psi = ex.mean();
      const double kl = (piece.theta_params - sub.params()).dot(piece.mu_theta) + ex.log_partition -
                        piece.log_partition;
      out.per_subgraph.push_back(kl);
      if (out.argmax < 0 || kl > out.value) {
        out.value = kl;
        out.argmax = t;
        best_grad = mu_psi - piece.mu_theta;
      }
    }
    // Embed: the subgraph's edges map back to model edge indices (restricted_to
    // keeps them sorted, as are the subgraph lists); node coordinates align.
    const auto& edges = set_.subgraphs[static_cast<std::size_t>(out.argmax)];
    std::vector<int> sorted(edges.begin(), edges.end());
    std::sort(sorted.begin(), sorted.end());
    const int k = static_cast<int>(sorted.size());
    for (int a = 0; a < k; ++a) out.gradient(sorted[static_cast<std::size_t>(a)]) = best_grad(a);
    out.gradient.tail(psi.size()) = best_grad.tail(psi.size());
    return out;
  }

  const SubgraphSet& subgraphs() const { return set_; }

 private:
  struct Piece {
    VectorXd theta_params;
    VectorXd mu_theta;
    double log_partition;
  };
  IsingModel theta_;
  SubgraphSet set_;
  std::vector<Piece> pieces_;
};

inline PiecewiseValue piecewise_kl(const IsingModel& theta, const IsingModel& psi, const SubgraphSet& subgraphs) {
  return PiecewiseKl(theta, subgraphs)(psi);
}

inline ProjectionRun project_piecewise(const IsingModel& theta, const SubgraphSet& subgraphs,
                                       const DivergenceOptions& o) {
  const PiecewiseKl objective(theta, subgraphs);
  return detail::projected_descent(theta, DivergenceKind::piecewise_kl, o, [&](const IsingModel& psi, int) {
    auto pv = objective(psi);
    return detail::GradientStep{pv.value, std::move(pv.gradient), pv.argmax};
  });
}

// ---------------------------------------------------------------------------
// Reversed KL(psi || theta)

inline constexpr int kMaxReverseKlEnumeration = 14;

/// Exact gradient sum_x p(x;psi) ((psi - theta).f(x)) (f(x) - mu(psi)),
/// by enumeration (n <= 14).
inline VectorXd grad_reverse_kl_exact(const IsingModel& theta, const IsingModel& psi) {
  detail::require_same_graph(theta, psi);
  const int n = psi.size();
  if (n > kMaxReverseKlEnumeration)
    throw std::invalid_argument("exact reverse-KL gradient refused for n = " + std::to_string(n));
  const auto prob = enumerate_probabilities(psi);
  const VectorXd diff = psi.params() - theta.params();
  std::vector<VectorXd> feats;
  feats.reserve(prob.size());
  VectorXd mu = VectorXd::Zero(psi.dimension());
  for (std::uint64_t code = 0; code < prob.size(); ++code) {
    feats.push_back(features(psi, decode_config(code, n)));
    mu += prob[code] * feats.back();
  }
  VectorXd grad = VectorXd::Zero(psi.dimension());
  for (std::size_t k = 0; k < prob.size(); ++k) grad += prob[k] * diff.dot(feats[k]) * (feats[k] - mu);
  return grad;
}

/// KL(psi || theta), exact.
inline double reverse_kl_exact(const IsingModel& theta, const IsingModel& psi) { return exact_kl(psi, theta); }

/// Sample estimate: mu-hat = mean f(x^k),
///   g-hat = 1/K sum_k ((psi - theta).f(x^k)) (f(x^k) - mu-hat),
/// with the same samples for both averages.
inline VectorXd grad_reverse_kl_stochastic(const IsingModel& theta, const IsingModel& psi,
                                           std::span<const SpinConfig> samples, double* surrogate = nullptr) {
  detail::require_same_graph(theta, psi);
  if (samples.empty()) throw std::invalid_argument("gradient estimate needs a nonempty pool");
  const VectorXd diff = psi.params() - theta.params();
  const auto k = static_cast<double>(samples.size());
  std::vector<VectorXd> feats;
  feats.reserve(samples.size());
  VectorXd mu_hat = VectorXd::Zero(psi.dimension());
  for (const auto& x : samples) {
    feats.push_back(features(psi, x));
    mu_hat += feats.back();
  }
  mu_hat /= k;
  VectorXd g = VectorXd::Zero(psi.dimension());
  double mean_weight = 0.0;
  for (const auto& f : feats) {
    const double w = diff.dot(f);
    mean_weight += w;
    g += w * (f - mu_hat);
  }
  if (surrogate) *surrogate = mean_weight / k;
  return g / k;
}

inline VectorXd grad_reverse_kl_stochastic(const IsingModel& theta, const IsingModel& psi, const SamplePool& pool,
                                           double* surrogate = nullptr) {
  return grad_reverse_kl_stochastic(theta, psi, std::span<const SpinConfig>(pool.samples()), surrogate);
}

/// Stochastic projected gradient on KL(psi || theta). The pool starts
/// uniform; each iteration sweeps every pool member once under the current
/// psi, estimates the gradient from the pool, and takes a projected step.
/// Trace values are the pool average of (psi - theta).f(x), i.e. KL up to
/// the unknown A(theta) - A(psi).
inline ProjectionRun project_reverse_kl(const IsingModel& theta, const DivergenceOptions& o) {
  std::optional<SamplePool> pool;
  auto run = detail::projected_descent(theta, DivergenceKind::reverse_kl, o, [&](const IsingModel& psi, int) {
    if (!pool) pool.emplace(psi, o.pool_size, Rng(derive_seed(o.seed, 0x706f6f6c)));
    pool->rebind(psi);
    pool->update();
    detail::GradientStep g;
    g.gradient = grad_reverse_kl_stochastic(theta, psi, *pool, &g.value);
    return g;
  });
  run.gibbs_sweeps = pool ? pool->sweeps() : 0;
  return run;
}

}  // namespace fastmix

#endif  // FASTMIX_DIVERGENCE_HPP
