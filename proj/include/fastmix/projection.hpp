#ifndef FASTMIX_PROJECTION_HPP
#define FASTMIX_PROJECTION_HPP

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fastmix/bounded_lbfgs.hpp"
#include "fastmix/model.hpp"

namespace fastmix {

/// Counts spectral decompositions (eigen or SVD) performed by projections.
struct DecompositionCounter {
  long count = 0;
};

/// Pi_c: Frobenius-nearest matrix with spectral norm <= c. Singular values
/// above c are clipped to c; symmetric input clips eigenvalues to [-c, c],
/// which is the same operation and keeps the result symmetric.
inline MatrixXd project_dense(const MatrixXd& a, double c, DecompositionCounter* counter = nullptr) {
  if (!(c > 0.0)) throw std::invalid_argument("spectral bound must be positive");
  if (a.rows() != a.cols()) throw std::invalid_argument("project_dense expects a square matrix");
  if (a.size() == 0) return a;
  if (counter) ++counter->count;
  if (is_symmetric(a)) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    const VectorXd& ev = es.eigenvalues();
    if (ev.cwiseAbs().maxCoeff() <= c) return a;
    const VectorXd clipped = ev.cwiseMax(-c).cwiseMin(c);
    MatrixXd b = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    return (0.5 * (b + b.transpose())).eval();
  }
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  if (s(0) <= c) return a;
  return svd.matrixU() * s.cwiseMin(c).asDiagonal() * svd.matrixV().transpose();
}

/// Dual variables of the structured projection
///   min_D 1/2 ||R - D||_F^2  s.t.  ||D||_2 <= c,  Z o D = 0,  D >= 0.
/// lambda enforces the mask (free sign), m enforces nonnegativity (m >= 0).
struct DualState {
  MatrixXd lambda;
  MatrixXd m;
  double c = 1.0;
  MatrixXd r;
  GraphMask z;

  /// D(Lambda, M) = Pi_c[R + M - Lambda o Z].
  MatrixXd d(DecompositionCounter* counter = nullptr) const {
    return project_dense(r + m - lambda.cwiseProduct(z.z), c, counter);
  }
};

struct DualEvaluation {
  double value = 0.0;
  MatrixXd grad_lambda;  // Z o D
  MatrixXd grad_m;       // -D
  MatrixXd d;
};

/// g(Lambda, M) = 1/2 ||D - R||^2 + Lambda.Z.D - M.D at D = D(Lambda, M),
/// with dg/dLambda = Z o D and dg/dM = -D. g is concave.
inline DualEvaluation dual_value_and_grad(const DualState& s, DecompositionCounter* counter = nullptr) {
  DualEvaluation out;
  out.d = s.d(counter);
  out.grad_lambda = s.z.z.cwiseProduct(out.d);
  out.grad_m = -out.d;
  out.value = 0.5 * (out.d - s.r).squaredNorm() + s.lambda.cwiseProduct(out.grad_lambda).sum() -
              s.m.cwiseProduct(out.d).sum();
  return out;
}

struct ProjectionOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  int verbosity = 0;
};

struct StructuredProjection {
  MatrixXd b;                  // D o sign(A)
  MatrixXd d;                  // nonnegative, masked, ||D||_2 <= c
  double dual_value = 0.0;     // g at the final multipliers
  double primal_value = 0.0;   // 1/2 ||R - D||_F^2 after cleanup
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  long decompositions = 0;
  bool converged = false;
};

/// Raised when the dual ascent stops short of the gradient tolerance.
/// Carries the best (cleaned, feasible) iterate and its residuals.
class ProjectionNotConverged : public std::runtime_error {
 public:
  explicit ProjectionNotConverged(StructuredProjection best)
      : std::runtime_error("structured projection did not converge: projected gradient " +
                           std::to_string(best.projected_gradient_norm) + " after " +
                           std::to_string(best.iterations) + " iterations"),
        best_(std::move(best)) {}
  const StructuredProjection& best() const { return best_; }

 private:
  StructuredProjection best_;
};

namespace detail {

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline MatrixXd apply_signs(const MatrixXd& d, const MatrixXd& a) {
  return d.binaryExpr(a, [](double dv, double av) { return dv * sign_of(av); });
}

// Upper-triangle packing of the symmetric multipliers. Lambda only has
// variables where z = 1; on edges Lambda o Z vanishes. M covers every
// upper-triangle entry, diagonal included.
struct DualLayout {
  std::vector<std::pair<int, int>> lambda_slots;
  std::vector<std::pair<int, int>> m_slots;
  int n = 0;

  explicit DualLayout(const GraphMask& z) : n(z.size()) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        if (z.z(i, j) != 0.0) lambda_slots.emplace_back(i, j);
        m_slots.emplace_back(i, j);
      }
  }
  Eigen::Index size() const {
    return static_cast<Eigen::Index>(lambda_slots.size() + m_slots.size());
  }
  Eigen::Index m_offset() const { return static_cast<Eigen::Index>(lambda_slots.size()); }

  void unpack(const VectorXd& x, MatrixXd& lambda, MatrixXd& m) const {
    lambda.setZero(n, n);
    m.setZero(n, n);
    Eigen::Index k = 0;
    for (const auto& [i, j] : lambda_slots) lambda(i, j) = lambda(j, i) = x(k++);
    for (const auto& [i, j] : m_slots) m(i, j) = m(j, i) = x(k++);
  }

  // A packed off-diagonal variable moves two matrix entries.
  void pack_gradient(const MatrixXd& g_lambda, const MatrixXd& g_m, VectorXd& out) const {
    out.resize(size());
    Eigen::Index k = 0;
    for (const auto& [i, j] : lambda_slots) out(k++) = (i == j ? 1.0 : 2.0) * g_lambda(i, j);
    for (const auto& [i, j] : m_slots) out(k++) = (i == j ? 1.0 : 2.0) * g_m(i, j);
  }
};

// Zero masked entries, clip negatives, then rescale if that pushed the
// spectral norm past c (rescaling keeps the sparsity pattern).
inline MatrixXd clean_primal(const MatrixXd& d, const GraphMask& z, double c, DecompositionCounter* counter) {
  MatrixXd out = d.binaryExpr(z.z, [](double v, double zv) { return zv != 0.0 ? 0.0 : std::max(v, 0.0); });
  out = (0.5 * (out + out.transpose())).eval();
  if (counter) ++counter->count;
  const double norm = spectral_norm(out);
  if (norm > c) out *= c / norm;
  return out;
}

}  // namespace detail

/// Euclidean projection of a symmetric matrix onto
///   { B : || |B| ||_2 <= c,  B_ij = 0 where z_ij = 1 }.
/// Solves the nonnegative, masked problem on R = |A| through its dual
/// (maximized by bounded L-BFGS, M >= 0) and restores signs: B = D o sign(A).
inline StructuredProjection project_structured_detailed(const MatrixXd& a, const GraphMask& z, double c,
                                                        const ProjectionOptions& opts = {}) {
  if (!(c > 0.0)) throw std::invalid_argument("spectral bound must be positive");
  if (a.rows() != a.cols() || a.rows() != z.z.rows())
    throw std::invalid_argument("matrix and mask dimensions differ");
  if (!is_symmetric(a, 0.0)) throw std::invalid_argument("project_structured expects a symmetric matrix");
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (z.z(i, j) != 0.0 && a(i, j) != 0.0)
        throw std::invalid_argument("input has weight where the mask forbids it");

  StructuredProjection out;
  DecompositionCounter counter;
  const MatrixXd r = a.cwiseAbs();
  ++counter.count;
  if (a.size() == 0 || spectral_norm(r) <= c) {
    out.b = a;
    out.d = r;
    out.converged = true;
    out.decompositions = counter.count;
    return out;
  }

  const detail::DualLayout layout(z);
  const Eigen::Index dim = layout.size();
  VectorXd lower = VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
  lower.tail(dim - layout.m_offset()).setZero();
  const VectorXd upper = VectorXd::Constant(dim, std::numeric_limits<double>::infinity());

  DualState state{MatrixXd(), MatrixXd(), c, r, z};
  auto negated_dual = [&](const VectorXd& x, VectorXd& grad) {
    layout.unpack(x, state.lambda, state.m);
    const auto ev = dual_value_and_grad(state, &counter);
    layout.pack_gradient(ev.grad_lambda, ev.grad_m, grad);
    grad = -grad;
    return -ev.value;
  };

  BoundedLbfgsOptions lopts;
  lopts.max_iterations = opts.max_iterations;
  lopts.gradient_tolerance = opts.gradient_tolerance;
  const auto res = minimize_bounded(negated_dual, VectorXd::Zero(dim), lower, upper, lopts);

  layout.unpack(res.x, state.lambda, state.m);
  out.d = detail::clean_primal(state.d(&counter), z, c, &counter);
  out.b = detail::apply_signs(out.d, a);
  out.dual_value = -res.value;
  out.primal_value = 0.5 * (out.d - r).squaredNorm();
  out.projected_gradient_norm = res.projected_gradient_norm;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.decompositions = counter.count;
  if (opts.verbosity > 0)
    std::clog << "structured projection: " << res.iterations << " iterations, "
              << counter.count << " decompositions, dual " << out.dual_value << ", primal "
              << out.primal_value << ", |pg| " << out.projected_gradient_norm << '\n';
  if (!res.converged) throw ProjectionNotConverged(std::move(out));
  return out;
}

inline MatrixXd project_structured(const MatrixXd& a, const GraphMask& z, double c,
                                   const ProjectionOptions& opts = {}) {
  return project_structured_detailed(a, z, c, opts).b;
}

/// Replaces the interactions of `m` by their structured projection; fields
/// are untouched.
inline IsingModel project_model(const IsingModel& m, double c, const ProjectionOptions& opts = {},
                                DecompositionCounter* counter = nullptr) {
  const auto p = project_structured_detailed(m.beta(), m.mask(), c, opts);
  if (counter) counter->count += p.decompositions;
  IsingModel out = m;
  out.set_beta(p.b);
  return out;
}

}  // namespace fastmix

#endif  // FASTMIX_PROJECTION_HPP
