#ifndef FASTMIX_MODEL_HPP
#define FASTMIX_MODEL_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fastmix/rng.hpp"

namespace fastmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Undirected edge, stored with i < j.
struct Edge {
  int i = 0;
  int j = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Spin configuration; every entry is -1 or +1.
using SpinConfig = std::vector<int>;

enum class Interaction { mixed, attractive };

inline const char* to_string(Interaction k) {
  return k == Interaction::mixed ? "mixed" : "attractive";
}

inline Interaction parse_interaction(const std::string& s) {
  if (s == "mixed") return Interaction::mixed;
  if (s == "attractive") return Interaction::attractive;
  throw std::invalid_argument("unknown interaction '" + s + "'");
}

struct GridShape {
  int rows = 0;
  int cols = 0;
  int node(int r, int c) const { return r * cols + c; }
  int size() const { return rows * cols; }
};

/// Structural mask: z_ij = 0 where (i,j) is an edge, 1 elsewhere
/// (the diagonal included). Stored as doubles so it composes with
/// elementwise matrix expressions.
struct GraphMask {
  MatrixXd z;

  int size() const { return static_cast<int>(z.rows()); }

  /// Wraps an arbitrary symmetric 0/1 matrix. Used for the unconstrained
  /// all-zero mask as well as graph masks.
  static GraphMask from_matrix(MatrixXd z) {
    if (z.rows() != z.cols()) throw std::invalid_argument("mask must be square");
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        if (z(i, j) != 0.0 && z(i, j) != 1.0)
          throw std::invalid_argument("mask entries must be 0 or 1");
        if (z(i, j) != z(j, i)) throw std::invalid_argument("mask must be symmetric");
      }
    return GraphMask{std::move(z)};
  }
};

/// Pairwise binary MRF over spins in {-1,+1}:
///   p(x) ∝ exp( sum_{(i,j) in E} beta_ij x_i x_j + sum_i alpha_i x_i ).
///
/// The edge list is the declared graph; an edge may carry weight zero.
/// beta is kept as a dense symmetric matrix with zero diagonal and zero
/// entries off the declared graph. The exponential-family parameter vector
/// lays out edge weights first (edges in lexicographic (i<j) order), then
/// node fields.
class IsingModel {
 public:
  struct Neighbor {
    int node;
    int edge;
  };

  IsingModel() = default;

  IsingModel(int n, std::vector<Edge> edges) : n_(n) {
    if (n < 0) throw std::invalid_argument("node count must be nonnegative");
    for (auto& e : edges) {
      if (e.i > e.j) std::swap(e.i, e.j);
      if (e.i < 0 || e.j >= n) throw std::invalid_argument("edge index out of range");
      if (e.i == e.j) throw std::invalid_argument("self loops are not allowed");
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    beta_ = MatrixXd::Zero(n, n);
    alpha_ = VectorXd::Zero(n);
    edge_id_ = Eigen::MatrixXi::Constant(n, n, -1);
    adjacency_.assign(static_cast<std::size_t>(n), {});
    for (int e = 0; e < num_edges(); ++e) {
      const auto [i, j] = edges_[static_cast<std::size_t>(e)];
      edge_id_(i, j) = edge_id_(j, i) = e;
      adjacency_[static_cast<std::size_t>(i)].push_back({j, e});
      adjacency_[static_cast<std::size_t>(j)].push_back({i, e});
    }
  }

  int size() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  /// Length of the parameter / feature vector.
  int dimension() const { return num_edges() + n_; }

  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[static_cast<std::size_t>(e)]; }
  const std::vector<Neighbor>& neighbors(int i) const {
    return adjacency_[static_cast<std::size_t>(i)];
  }

  const MatrixXd& beta() const { return beta_; }
  const VectorXd& alpha() const { return alpha_; }

  int edge_index(int i, int j) const { return edge_id_(i, j); }
  bool has_edge(int i, int j) const { return i != j && edge_id_(i, j) >= 0; }

  double coupling(int e) const {
    const auto& ed = edge(e);
    return beta_(ed.i, ed.j);
  }
  void set_coupling(int e, double w) {
    const auto& ed = edge(e);
    beta_(ed.i, ed.j) = beta_(ed.j, ed.i) = w;
  }
  double field(int i) const { return alpha_(i); }
  void set_field(int i, double a) { alpha_(i) = a; }

  /// Copies interaction weights from a symmetric matrix. Entries off the
  /// declared graph must be zero.
  void set_beta(const MatrixXd& b) {
    if (b.rows() != n_ || b.cols() != n_) throw std::invalid_argument("beta dimension mismatch");
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (b(i, j) != 0.0 && !has_edge(i, j))
          throw std::invalid_argument("beta has weight off the declared graph");
    for (int e = 0; e < num_edges(); ++e) {
      const auto& ed = edge(e);
      if (b(ed.i, ed.j) != b(ed.j, ed.i)) throw std::invalid_argument("beta must be symmetric");
      set_coupling(e, b(ed.i, ed.j));
    }
  }

  void set_alpha(const VectorXd& a) {
    if (a.size() != n_) throw std::invalid_argument("alpha dimension mismatch");
    alpha_ = a;
  }

  /// Parameter vector theta: edge weights, then fields.
  VectorXd params() const {
    VectorXd theta(dimension());
    for (int e = 0; e < num_edges(); ++e) theta(e) = coupling(e);
    theta.tail(n_) = alpha_;
    return theta;
  }

  void set_params(const VectorXd& theta) {
    if (theta.size() != dimension()) throw std::invalid_argument("parameter dimension mismatch");
    for (int e = 0; e < num_edges(); ++e) set_coupling(e, theta(e));
    alpha_ = theta.tail(n_);
  }

  GraphMask mask() const {
    MatrixXd z = MatrixXd::Ones(n_, n_);
    for (const auto& e : edges_) z(e.i, e.j) = z(e.j, e.i) = 0.0;
    return GraphMask{std::move(z)};
  }

  /// Same nodes and fields; only the listed edges (indices into edges())
  /// are kept, with their weights.
  IsingModel restricted_to(std::span<const int> edge_ids) const {
    std::vector<Edge> kept;
    kept.reserve(edge_ids.size());
    for (int e : edge_ids) kept.push_back(edge(e));
    IsingModel sub(n_, kept);
    for (int e : edge_ids) {
      const auto& ed = edge(e);
      sub.set_coupling(sub.edge_index(ed.i, ed.j), coupling(e));
    }
    sub.alpha_ = alpha_;
    return sub;
  }

  /// Same parameters re-expressed on a larger edge set (new edges weight 0).
  IsingModel embedded_in(const std::vector<Edge>& superset) const {
    IsingModel out(n_, superset);
    for (int e = 0; e < num_edges(); ++e) {
      const auto& ed = edge(e);
      const int k = out.edge_index(ed.i, ed.j);
      if (k < 0) throw std::invalid_argument("edge set is not a superset");
      out.set_coupling(k, coupling(e));
    }
    out.alpha_ = alpha_;
    return out;
  }

  bool same_graph(const IsingModel& other) const {
    return n_ == other.n_ && edges_ == other.edges_;
  }

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  MatrixXd beta_;
  VectorXd alpha_;
  Eigen::MatrixXi edge_id_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

inline std::vector<Edge> union_edges(const IsingModel& a, const IsingModel& b) {
  std::vector<Edge> out;
  std::set_union(a.edges().begin(), a.edges().end(), b.edges().begin(), b.edges().end(),
                 std::back_inserter(out));
  return out;
}

// ---------------------------------------------------------------------------
// Generators

inline std::vector<Edge> grid_edges(GridShape g) {
  std::vector<Edge> edges;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      if (c + 1 < g.cols) edges.push_back({g.node(r, c), g.node(r, c + 1)});
      if (r + 1 < g.rows) edges.push_back({g.node(r, c), g.node(r + 1, c)});
    }
  std::sort(edges.begin(), edges.end());
  return edges;
}

namespace detail {

inline void check_strengths(double d_n, double d_e) {
  if (!(d_n >= 0.0) || !(d_e >= 0.0))
    throw std::invalid_argument("field and edge strengths must be nonnegative");
}

// Fields first in node order, then weights in canonical edge order.
inline void draw_parameters(IsingModel& m, double d_n, double d_e, Interaction kind, Rng& rng) {
  for (int i = 0; i < m.size(); ++i) m.set_field(i, rng.uniform(-d_n, d_n));
  const double lo = kind == Interaction::mixed ? -d_e : 0.0;
  for (int e = 0; e < m.num_edges(); ++e) m.set_coupling(e, rng.uniform(lo, d_e));
}

}  // namespace detail

/// 4-connected rows x cols grid; node (r,c) has index r*cols + c.
inline IsingModel make_grid(int rows, int cols, double d_n, double d_e, Interaction kind,
                            std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid dimensions must be positive");
  detail::check_strengths(d_n, d_e);
  IsingModel m(rows * cols, grid_edges({rows, cols}));
  Rng rng(seed);
  detail::draw_parameters(m, d_n, d_e, kind, rng);
  return m;
}

/// Erdos-Renyi graph: each unordered pair is an edge with probability p_e.
inline IsingModel make_random_graph(int n, double p_e, double d_n, double d_e, Interaction kind,
                                    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("node count must be positive");
  if (!(p_e >= 0.0 && p_e <= 1.0)) throw std::invalid_argument("edge probability must be in [0,1]");
  detail::check_strengths(d_n, d_e);
  Rng rng(seed);
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p_e) edges.push_back({i, j});
  IsingModel m(n, std::move(edges));
  detail::draw_parameters(m, d_n, d_e, kind, rng);
  return m;
}

/// Recovers the grid shape if the model's edge set is exactly a
/// rows x cols 4-connected grid in row-major numbering.
inline std::optional<GridShape> detect_grid(const IsingModel& m) {
  const int n = m.size();
  for (int cols = 1; cols <= n; ++cols) {
    if (n % cols != 0) continue;
    const GridShape g{n / cols, cols};
    if (grid_edges(g) == m.edges()) return g;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Features and energy

inline void check_config(const IsingModel& m, const SpinConfig& x) {
  if (static_cast<int>(x.size()) != m.size())
    throw std::invalid_argument("configuration dimension mismatch");
  for (int v : x)
    if (v != 1 && v != -1) throw std::invalid_argument("spins must be -1 or +1");
}

/// Sufficient statistics f(x): x_i x_j per edge, then x_i per node.
inline VectorXd features(const IsingModel& m, const SpinConfig& x) {
  check_config(m, x);
  VectorXd f(m.dimension());
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    f(e) = x[static_cast<std::size_t>(ed.i)] * x[static_cast<std::size_t>(ed.j)];
  }
  for (int i = 0; i < m.size(); ++i) f(m.num_edges() + i) = x[static_cast<std::size_t>(i)];
  return f;
}

inline VectorXd param_vector(const IsingModel& m) { return m.params(); }

inline double dot(const VectorXd& theta, const VectorXd& f) {
  if (theta.size() != f.size()) throw std::invalid_argument("dimension mismatch in dot product");
  return theta.dot(f);
}

/// theta . f(x) without materializing f.
inline double energy(const IsingModel& m, const SpinConfig& x) {
  double s = 0.0;
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    s += m.coupling(e) * x[static_cast<std::size_t>(ed.i)] * x[static_cast<std::size_t>(ed.j)];
  }
  for (int i = 0; i < m.size(); ++i) s += m.field(i) * x[static_cast<std::size_t>(i)];
  return s;
}

// ---------------------------------------------------------------------------
// Mixing bounds

/// Bound on the dependency matrix: R_ij = tanh|beta_ij|.
inline MatrixXd dependency_bound(const IsingModel& m) {
  return m.beta().cwiseAbs().array().tanh().matrix();
}

inline bool is_symmetric(const MatrixXd& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Largest singular value. Symmetric input goes through the
/// self-adjoint eigensolver.
inline double spectral_norm(const MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("spectral_norm expects a square matrix");
  if (a.size() == 0) return 0.0;
  if (is_symmetric(a)) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues()(0);
}

/// Mixing-time bound for random-scan Gibbs:
///   n / (1 - ||R||_2) * ln(n / epsilon),  R = dependency_bound(m);
/// +infinity when ||R||_2 >= 1.
inline double mixing_time_bound(int n, double r_norm, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  if (n < 1) throw std::invalid_argument("need at least one node");
  if (r_norm >= 1.0) return std::numeric_limits<double>::infinity();
  return n / (1.0 - r_norm) * std::log(n / epsilon);
}

inline double mixing_time_bound(const IsingModel& m, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  return mixing_time_bound(m.size(), spectral_norm(dependency_bound(m)), epsilon);
}

// ---------------------------------------------------------------------------
// Text format
//
//   ising <n>
//   field <i> <value>      (one per node)
//   edge <i> <j> <value>   (one per edge)

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_model(std::ostream& os, const IsingModel& m) {
  os << "ising " << m.size() << '\n';
  for (int i = 0; i < m.size(); ++i) os << "field " << i << ' ' << format_double(m.field(i)) << '\n';
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    os << "edge " << ed.i << ' ' << ed.j << ' ' << format_double(m.coupling(e)) << '\n';
  }
}

inline double parse_double(const std::string& tok, int line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw std::runtime_error("line " + std::to_string(line) + ": bad number '" + tok + "'");
  return v;
}

inline IsingModel read_model(std::istream& is) {
  std::string line;
  int lineno = 0;
  int n = -1;
  std::vector<std::pair<int, double>> fields;
  std::vector<std::pair<Edge, double>> weights;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    if (kind == "ising") {
      if (n >= 0) fail("duplicate header");
      if (!(ls >> n) || n < 0) fail("bad node count");
    } else if (kind == "field") {
      if (n < 0) fail("missing 'ising n' header");
      int i = -1;
      std::string v;
      if (!(ls >> i >> v) || i < 0 || i >= n) fail("bad field line");
      fields.emplace_back(i, parse_double(v, lineno));
    } else if (kind == "edge") {
      if (n < 0) fail("missing 'ising n' header");
      int i = -1, j = -1;
      std::string v;
      if (!(ls >> i >> j >> v) || i < 0 || j < 0 || i >= n || j >= n || i == j)
        fail("bad edge line");
      if (i > j) std::swap(i, j);
      weights.push_back({Edge{i, j}, parse_double(v, lineno)});
    } else {
      fail("unknown record '" + kind + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing tokens");
  }
  if (n < 0) throw std::runtime_error("missing 'ising n' header");
  std::vector<Edge> edges;
  for (const auto& w : weights) edges.push_back(w.first);
  IsingModel m(n, edges);
  if (m.num_edges() != static_cast<int>(weights.size()))
    throw std::runtime_error("duplicate edge in model file");
  for (const auto& [e, w] : weights) m.set_coupling(m.edge_index(e.i, e.j), w);
  for (const auto& [i, a] : fields) m.set_field(i, a);
  return m;
}

}  // namespace fastmix

#endif  // FASTMIX_MODEL_HPP
