#ifndef FASTMIX_BOUNDED_LBFGS_HPP
#define FASTMIX_BOUNDED_LBFGS_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace fastmix {

struct BoundedLbfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the projected gradient, infinity norm
  int memory = 10;
  int max_backtracks = 40;
  double armijo = 1e-4;
};

struct BoundedLbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double projected_gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Limited-memory quasi-Newton minimization under box constraints
/// lower <= x <= upper (entries may be infinite).
///
/// Each iteration fixes the variables held at a bound by the gradient,
/// runs the two-loop recursion on the remaining free subspace, and
/// backtracks along the projected path P(x + t d) under an Armijo
/// condition measured on the actual (projected) displacement.
///
/// `fn(x, grad)` returns f(x) and writes the gradient.
template <class Fn>
BoundedLbfgsResult minimize_bounded(Fn&& fn, Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper,
                                    const BoundedLbfgsOptions& opts = {}) {
  using Eigen::VectorXd;
  const Eigen::Index dim = x.size();
  if (lower.size() != dim || upper.size() != dim)
    throw std::invalid_argument("bound dimensions do not match the start point");

  auto project = [&](const VectorXd& v) -> VectorXd { return v.cwiseMax(lower).cwiseMin(upper); };
  auto projected_gradient_norm = [&](const VectorXd& at, const VectorXd& g) {
    return dim == 0 ? 0.0 : (project(at - g) - at).cwiseAbs().maxCoeff();
  };

  BoundedLbfgsResult res;
  x = project(x);
  VectorXd g(dim);
  double f = fn(x, g);
  res.evaluations = 1;

  struct Pair {
    VectorXd s, y;
  };
  std::deque<Pair> memory;

  for (;;) {
    res.projected_gradient_norm = projected_gradient_norm(x, g);
    if (res.projected_gradient_norm <= opts.gradient_tolerance) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opts.max_iterations) break;

    // Free variables: not pinned at a bound by the current gradient.
    VectorXd free(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const bool pinned = (x(i) <= lower(i) && g(i) > 0.0) || (x(i) >= upper(i) && g(i) < 0.0);
      free(i) = pinned ? 0.0 : 1.0;
    }

    VectorXd q = g.cwiseProduct(free);
    std::vector<double> alphas(memory.size()), rhos(memory.size());
    double gamma = 1.0;
    bool have_gamma = false;
    for (std::size_t k = memory.size(); k-- > 0;) {
      const VectorXd sf = memory[k].s.cwiseProduct(free);
      const VectorXd yf = memory[k].y.cwiseProduct(free);
      const double sy = sf.dot(yf);
      if (sy <= 1e-12 * sf.norm() * yf.norm() || sy <= 0.0) {
        rhos[k] = 0.0;
        continue;
      }
      rhos[k] = 1.0 / sy;
      alphas[k] = rhos[k] * sf.dot(q);
      q -= alphas[k] * yf;
      if (!have_gamma) {
        gamma = sy / yf.squaredNorm();
        have_gamma = true;
      }
    }
    VectorXd r = gamma * q;
    for (std::size_t k = 0; k < memory.size(); ++k) {
      if (rhos[k] == 0.0) continue;
      const VectorXd sf = memory[k].s.cwiseProduct(free);
      const VectorXd yf = memory[k].y.cwiseProduct(free);
      const double beta = rhos[k] * yf.dot(r);
      r += sf * (alphas[k] - beta);
    }
    VectorXd d = -r.cwiseProduct(free);
    if (!(g.dot(d) < 0.0)) {
      d = -g.cwiseProduct(free);
      memory.clear();
    }

    double step = 1.0;
    if (memory.empty()) step = std::min(1.0, 1.0 / std::max(d.cwiseAbs().maxCoeff(), 1e-300));

    bool accepted = false;
    VectorXd x_new, g_new(dim);
    double f_new = f;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = project(x + step * d);
      const double decrease = g.dot(x_new - x);
      f_new = fn(x_new, g_new);
      ++res.evaluations;
      if (decrease < 0.0 && f_new <= f + opts.armijo * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;  // steepest descent made no progress either
      memory.clear();
      ++res.iterations;
      continue;
    }

    VectorXd s = x_new - x, y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      memory.push_back({std::move(s), std::move(y)});
      if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
    }
    x = std::move(x_new);
    g = g_new;
    f = f_new;
    ++res.iterations;
  }

  res.x = std::move(x);
  res.value = f;
  return res;
}

}  // namespace fastmix

#endif  // FASTMIX_BOUNDED_LBFGS_HPP
