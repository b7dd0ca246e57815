#ifndef FASTMIX_TESTS_SUPPORT_HPP
#define FASTMIX_TESTS_SUPPORT_HPP

// Independent oracles used by the unit and acceptance tests. Nothing here
// calls into the code under test except for model construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fastmix/model.hpp"
#include "fastmix/rng.hpp"

namespace fastmix::oracle {

inline MatrixXd random_symmetric(int n, Rng& rng, double scale = 1.0) {
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) a(i, j) = a(j, i) = scale * rng.normal();
  return a;
}

inline MatrixXd random_matrix(int n, Rng& rng) {
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return a;
}

/// sqrt of the top eigenvalue of A^T A by plain power iteration.
inline double power_iteration_norm(const MatrixXd& a, int iterations = 20000) {
  const MatrixXd g = a.transpose() * a;
  VectorXd v = VectorXd::Ones(a.cols());
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += 0.01 * static_cast<double>(k);
  v.normalize();
  double lambda = 0.0;
  for (int t = 0; t < iterations; ++t) {
    VectorXd w = g * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(g * w);
    v = w;
    if (std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

/// Brute-force symmetric spectral clipping written against the eigen
/// definition, used where a second implementation is wanted.
inline MatrixXd clip_spectrum(const MatrixXd& a, double c) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  const VectorXd s = es.eigenvalues().cwiseMax(-c).cwiseMin(c);
  MatrixXd b = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (b + b.transpose());
}

struct DykstraResult {
  MatrixXd d;
  double objective = 0.0;
};

/// Nearest point to R in {D >= 0, D_ij = 0 where z_ij = 1} intersected with
/// the spectral ball of radius c, by Dykstra's alternating projections.
inline DykstraResult dykstra_structured(const MatrixXd& r, const MatrixXd& z, double c, int iterations = 200000,
                                        double tol = 1e-13) {
  const Eigen::Index n = r.rows();
  MatrixXd x = r, p = MatrixXd::Zero(n, n), q = MatrixXd::Zero(n, n);
  for (int t = 0; t < iterations; ++t) {
    const MatrixXd y = clip_spectrum(x + p, c);
    p = x + p - y;
    MatrixXd next = y + q;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) next(i, j) = z(i, j) != 0.0 ? 0.0 : std::max(next(i, j), 0.0);
    q = y + q - next;
    const double change = (next - x).norm();
    x = next;
    if (change < tol) break;
  }
  return {x, 0.5 * (x - r).squaredNorm()};
}

/// Central differences of f at x, one coordinate at a time.
inline VectorXd central_difference(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                   double h = 1e-5) {
  VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    VectorXd a = x, b = x;
    a(k) += h;
    b(k) -= h;
    g(k) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const VectorXd& got, const VectorXd& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

/// Same graph as m, fresh parameters.
inline IsingModel with_random_params(const IsingModel& m, double d_n, double d_e, Rng& rng) {
  IsingModel out = m;
  for (int i = 0; i < out.size(); ++i) out.set_field(i, rng.uniform(-d_n, d_n));
  for (int e = 0; e < out.num_edges(); ++e) out.set_coupling(e, rng.uniform(-d_e, d_e));
  return out;
}

/// Direct sum over all configurations of p(x) f(x) and of log Z; kept
/// separate from the library's enumeration.
struct BruteForce {
  double log_z = 0.0;
  VectorXd mean;
};

inline BruteForce brute_force(const IsingModel& m) {
  const int n = m.size();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<double> s(count);
  std::vector<VectorXd> f(count);
  double top = -std::numeric_limits<double>::infinity();
  for (std::uint64_t code = 0; code < count; ++code) {
    SpinConfig x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = ((code >> i) & 1U) ? 1 : -1;
    double e = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e += m.beta()(i, j) * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
    for (int i = 0; i < n; ++i) e += m.alpha()(i) * x[static_cast<std::size_t>(i)];
    s[code] = e;
    top = std::max(top, e);
    VectorXd fx(m.dimension());
    for (int k = 0; k < m.num_edges(); ++k) fx(k) = x[static_cast<std::size_t>(m.edge(k).i)] * x[static_cast<std::size_t>(m.edge(k).j)];
    for (int i = 0; i < n; ++i) fx(m.num_edges() + i) = x[static_cast<std::size_t>(i)];
    f[code] = fx;
  }
  double z = 0.0;
  for (double e : s) z += std::exp(e - top);
  BruteForce out;
  out.log_z = top + std::log(z);
  out.mean = VectorXd::Zero(m.dimension());
  for (std::uint64_t code = 0; code < count; ++code) out.mean += std::exp(s[code] - out.log_z) * f[code];
  return out;
}

}  // namespace fastmix::oracle

#endif  // FASTMIX_TESTS_SUPPORT_HPP
