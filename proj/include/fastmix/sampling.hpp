#ifndef FASTMIX_SAMPLING_HPP
#define FASTMIX_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fastmix/exact.hpp"
#include "fastmix/model.hpp"
#include "fastmix/rng.hpp"

namespace fastmix {

enum class Scan { systematic, random };

inline double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// alpha_i + sum_j beta_ij x_j
inline double local_field(const IsingModel& m, const SpinConfig& x, int i) {
  double h = m.field(i);
  for (const auto& nb : m.neighbors(i)) h += m.coupling(nb.edge) * x[static_cast<std::size_t>(nb.node)];
  return h;
}

/// P(x_i = +1 | x_-i) = logistic(2 (alpha_i + sum_j beta_ij x_j)).
inline double gibbs_conditional(const IsingModel& m, const SpinConfig& x, int i) {
  if (i < 0 || i >= m.size()) throw std::out_of_range("node index out of range");
  return logistic(2.0 * local_field(m, x, i));
}

namespace detail {

inline void resample_site(const IsingModel& m, SpinConfig& x, int i, Rng& rng) {
  const double p = logistic(2.0 * local_field(m, x, i));
  x[static_cast<std::size_t>(i)] = rng.uniform() < p ? 1 : -1;
}

inline void sweep_config(const IsingModel& m, SpinConfig& x, Scan scan, Rng& rng) {
  const int n = m.size();
  if (scan == Scan::systematic) {
    for (int i = 0; i < n; ++i) resample_site(m, x, i, rng);
  } else {
    for (int t = 0; t < n; ++t) resample_site(m, x, rng.index(n), rng);
  }
}

inline SpinConfig random_config(int n, Rng& rng) {
  SpinConfig x(static_cast<std::size_t>(n));
  for (auto& v : x) v = rng.spin();
  return x;
}

}  // namespace detail

/// Single-site Gibbs chain. Systematic scan visits nodes in index order;
/// random scan makes n updates at uniformly chosen nodes. Either way one
/// call to sweep() is one sweep.
class GibbsChain {
 public:
  GibbsChain(const IsingModel& model, SpinConfig init, Scan scan, Rng rng)
      : model_(&model), state_(std::move(init)), scan_(scan), rng_(std::move(rng)) {
    check_config(model, state_);
  }

  /// Uniform random +-1 start drawn from `rng`.
  static GibbsChain random_start(const IsingModel& model, Scan scan, Rng rng) {
    SpinConfig x = detail::random_config(model.size(), rng);
    return GibbsChain(model, std::move(x), scan, std::move(rng));
  }

  void sweep() {
    detail::sweep_config(*model_, state_, scan_, rng_);
    ++sweeps_;
  }

  const SpinConfig& state() const { return state_; }
  const IsingModel& model() const { return *model_; }
  Scan scan() const { return scan_; }
  long sweeps() const { return sweeps_; }

 private:
  const IsingModel* model_;
  SpinConfig state_;
  Scan scan_;
  Rng rng_;
  long sweeps_ = 0;
};

inline GibbsChain& sweep(GibbsChain& chain) {
  chain.sweep();
  return chain;
}

struct MarginalEstimate {
  VectorXd p_plus;        // (1 + mean x_i) / 2
  long samples = 0;
  VectorXd feature_mean;  // mu-hat over f(x), parameter layout
};

/// Running average over one chain, read at a list of sweep counts.
struct MarginalTrace {
  std::vector<long> checkpoints;
  std::vector<VectorXd> p_plus;
};

namespace detail {

inline void accumulate_features(const IsingModel& m, const SpinConfig& x, VectorXd& acc) {
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto& ed = m.edge(e);
    acc(e) += x[static_cast<std::size_t>(ed.i)] * x[static_cast<std::size_t>(ed.j)];
  }
  for (int i = 0; i < m.size(); ++i) acc(m.num_edges() + i) += x[static_cast<std::size_t>(i)];
}

}  // namespace detail

/// Marginals from a single chain started uniformly at random; one sample
/// is kept per sweep after the first `burn_in` sweeps.
inline MarginalEstimate estimate_marginals(const IsingModel& m, long sweeps, long burn_in,
                                           std::uint64_t seed, Scan scan = Scan::systematic) {
  if (burn_in < 0 || sweeps <= burn_in) throw std::invalid_argument("need sweeps > burn_in >= 0");
  auto chain = GibbsChain::random_start(m, scan, Rng(seed));
  VectorXd acc = VectorXd::Zero(m.dimension());
  for (long t = 1; t <= sweeps; ++t) {
    chain.sweep();
    if (t > burn_in) detail::accumulate_features(m, chain.state(), acc);
  }
  MarginalEstimate out;
  out.samples = sweeps - burn_in;
  out.feature_mean = acc / static_cast<double>(out.samples);
  out.p_plus = ((out.feature_mean.tail(m.size()).array() + 1.0) / 2.0).matrix();
  return out;
}

/// Like estimate_marginals, but reports the running estimate after each
/// checkpoint (in sweeps, counted from the start of the chain).
inline MarginalTrace marginal_trace(const IsingModel& m, std::vector<long> checkpoints, long burn_in,
                                    std::uint64_t seed, Scan scan = Scan::systematic) {
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  if (checkpoints.empty() || checkpoints.front() <= burn_in || burn_in < 0)
    throw std::invalid_argument("checkpoints must exceed burn_in >= 0");
  auto chain = GibbsChain::random_start(m, scan, Rng(seed));
  VectorXd sum = VectorXd::Zero(m.size());
  MarginalTrace out;
  std::size_t next = 0;
  for (long t = 1; next < checkpoints.size(); ++t) {
    chain.sweep();
    if (t > burn_in)
      for (int i = 0; i < m.size(); ++i) sum(i) += chain.state()[static_cast<std::size_t>(i)];
    if (t == checkpoints[next]) {
      const double count = static_cast<double>(t - burn_in);
      out.checkpoints.push_back(t);
      out.p_plus.push_back(((sum.array() / count + 1.0) / 2.0).matrix());
      ++next;
    }
  }
  return out;
}

/// K configurations, each advanced by one systematic sweep per update
/// under the pool's current parameters.
class SamplePool {
 public:
  SamplePool(IsingModel model, int size, Rng rng) : model_(std::move(model)), rng_(std::move(rng)) {
    if (size < 1) throw std::invalid_argument("pool size must be positive");
    samples_.reserve(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k) samples_.push_back(detail::random_config(model_.size(), rng_));
  }

  /// Swaps in new parameters (same graph) for subsequent updates.
  void rebind(const IsingModel& model) {
    if (!model.same_graph(model_)) throw std::invalid_argument("pool model must keep its graph");
    model_ = model;
  }

  void update() {
    for (auto& x : samples_) detail::sweep_config(model_, x, Scan::systematic, rng_);
    sweeps_ += static_cast<long>(samples_.size());
  }

  int size() const { return static_cast<int>(samples_.size()); }
  const std::vector<SpinConfig>& samples() const { return samples_; }
  const IsingModel& model() const { return model_; }
  /// Total single-configuration sweeps performed so far.
  long sweeps() const { return sweeps_; }

  VectorXd feature_mean() const {
    VectorXd acc = VectorXd::Zero(model_.dimension());
    for (const auto& x : samples_) detail::accumulate_features(model_, x, acc);
    return acc / static_cast<double>(samples_.size());
  }

 private:
  IsingModel model_;
  Rng rng_;
  std::vector<SpinConfig> samples_;
  long sweeps_ = 0;
};

inline SamplePool& pool_update(SamplePool& pool) {
  pool.update();
  return pool;
}

/// Independent exact samples by inverting the enumerated CDF (n <= 20).
class ExactSampler {
 public:
  explicit ExactSampler(const IsingModel& m) : n_(m.size()) {
    const auto prob = enumerate_probabilities(m);
    cdf_.resize(prob.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) cdf_[k] = (acc += prob[k]);
    cdf_.back() = 1.0;
  }

  SpinConfig draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto code = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(
        it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
    return decode_config(code, n_);
  }

  std::vector<SpinConfig> draw(Rng& rng, int count) const {
    std::vector<SpinConfig> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out.push_back(draw(rng));
    return out;
  }

 private:
  int n_;
  std::vector<double> cdf_;
};

}  // namespace fastmix

#endif  // FASTMIX_SAMPLING_HPP
