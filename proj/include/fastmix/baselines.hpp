#ifndef FASTMIX_BASELINES_HPP
#define FASTMIX_BASELINES_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fastmix/model.hpp"
#include "fastmix/sampling.hpp"

namespace fastmix {

struct VariationalResult {
  VectorXd p_plus;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // largest update in the last iteration
};

struct VariationalOptions {
  double tolerance = 1e-6;
  int max_iterations = 1000;
  double damping = 0.5;  // loopy BP only: new = (1 - damping) * update + damping * old
};

/// Naive mean field by coordinate ascent from m = 0:
///   m_i <- tanh(alpha_i + sum_j beta_ij m_j), nodes in index order.
inline VariationalResult mean_field(const IsingModel& model, const VariationalOptions& opts = {}) {
  VectorXd m = VectorXd::Zero(model.size());
  VariationalResult out;
  while (out.iterations < opts.max_iterations) {
    double change = 0.0;
    for (int i = 0; i < model.size(); ++i) {
      double h = model.field(i);
      for (const auto& nb : model.neighbors(i)) h += model.coupling(nb.edge) * m(nb.node);
      const double next = std::tanh(h);
      change = std::max(change, std::abs(next - m(i)));
      m(i) = next;
    }
    ++out.iterations;
    out.residual = change;
    if (change <= opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.p_plus = ((m.array() + 1.0) / 2.0).matrix();
  return out;
}

namespace detail {

inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// atanh(tanh(w) tanh(h)), evaluated without forming the product.
inline double bp_message(double w, double h) { return 0.5 * (log_cosh(h + w) - log_cosh(h - w)); }

}  // namespace detail

/// Loopy sum-product in log-odds form. Messages u_{i->j} start at zero and
/// are updated synchronously:
///   u_{i->j} = atanh( tanh(beta_ij) tanh(alpha_i + sum_{k != j} u_{k->i}) ),
/// then damped. Beliefs: P(x_i = +1) = logistic(2 (alpha_i + sum_k u_{k->i})).
inline VariationalResult loopy_bp(const IsingModel& model, const VariationalOptions& opts = {}) {
  if (!(opts.damping >= 0.0 && opts.damping < 1.0)) throw std::invalid_argument("damping must be in [0,1)");
  const int n = model.size();
  const int edges = model.num_edges();
  // u[2e] carries edge e from its lower to its higher endpoint, u[2e+1] back.
  std::vector<double> u(static_cast<std::size_t>(2 * edges), 0.0), next(u.size());
  auto incoming = [&](int e, int to) {
    return u[static_cast<std::size_t>(2 * e + (model.edge(e).j == to ? 0 : 1))];
  };
  auto fields = [&]() {
    VectorXd h = model.alpha();
    for (int e = 0; e < edges; ++e) {
      const auto& ed = model.edge(e);
      h(ed.j) += u[static_cast<std::size_t>(2 * e)];
      h(ed.i) += u[static_cast<std::size_t>(2 * e + 1)];
    }
    return h;
  };

  VariationalResult out;
  while (out.iterations < opts.max_iterations) {
    const VectorXd h = fields();
    double change = 0.0;
    for (int e = 0; e < edges; ++e) {
      const auto& ed = model.edge(e);
      const double w = model.coupling(e);
      const double fwd = detail::bp_message(w, h(ed.i) - incoming(e, ed.i));
      const double bwd = detail::bp_message(w, h(ed.j) - incoming(e, ed.j));
      const auto a = static_cast<std::size_t>(2 * e), b = a + 1;
      next[a] = (1.0 - opts.damping) * fwd + opts.damping * u[a];
      next[b] = (1.0 - opts.damping) * bwd + opts.damping * u[b];
      change = std::max({change, std::abs(next[a] - u[a]), std::abs(next[b] - u[b])});
    }
    u.swap(next);
    ++out.iterations;
    out.residual = change;
    if (change <= opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  const VectorXd h = fields();
  out.p_plus.resize(n);
  for (int i = 0; i < n; ++i) out.p_plus(i) = logistic(2.0 * h(i));
  return out;
}

}  // namespace fastmix

#endif  // FASTMIX_BASELINES_HPP
