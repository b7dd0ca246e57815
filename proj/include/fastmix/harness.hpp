#ifndef FASTMIX_HARNESS_HPP
#define FASTMIX_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fastmix/baselines.hpp"
#include "fastmix/divergence.hpp"
#include "fastmix/exact.hpp"
#include "fastmix/model.hpp"
#include "fastmix/projection.hpp"
#include "fastmix/rng.hpp"
#include "fastmix/sampling.hpp"

namespace fastmix {

enum class Topology { grid, random };

/// Marginal estimators compared by the experiment. `original` runs one
/// chain per configured sweep count on the unprojected parameters.
enum class Method { original, euclidean, piecewise, reverse_kl, inclusive_kl, mean_field, loopy_bp };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::original: return "original";
    case Method::euclidean: return "euclid";
    case Method::piecewise: return "kl-piecewise";
    case Method::reverse_kl: return "kl-rev";
    case Method::inclusive_kl: return "kl-incl";
    case Method::mean_field: return "mf";
    case Method::loopy_bp: return "lbp";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::original, Method::euclidean, Method::piecewise, Method::reverse_kl,
                   Method::inclusive_kl, Method::mean_field, Method::loopy_bp})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool is_projection(Method m) {
  return m == Method::euclidean || m == Method::piecewise || m == Method::reverse_kl ||
         m == Method::inclusive_kl;
}

struct ExperimentConfig {
  Topology topology = Topology::grid;
  int grid_rows = 8;
  int grid_cols = 8;
  int random_nodes = 10;
  double p_e = 0.3;
  double d_n = 1.0;
  std::vector<double> d_e = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  Interaction interaction = Interaction::mixed;
  int trials = 50;
  std::vector<long> sweeps = {30000, 250000};  // original-parameter chains; the first is used after projection
  long burn_in = 0;
  double c = 2.5;
  std::vector<Method> methods = {Method::original, Method::euclidean, Method::piecewise, Method::reverse_kl,
                                 Method::mean_field, Method::loopy_bp};
  std::optional<SubgraphKind> subgraphs;  // default: chains on grids, spanning trees otherwise
  double step = 0.1;
  int pool_size = 500;
  int iterations = 60;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
  bool record_wall_time = false;

  std::string topology_name() const {
    if (topology == Topology::random) return "random" + std::to_string(random_nodes);
    return "grid" + std::to_string(grid_rows) + "x" + std::to_string(grid_cols);
  }

  SubgraphKind subgraph_kind() const {
    if (subgraphs) return *subgraphs;
    return topology == Topology::grid ? SubgraphKind::grid_chains : SubgraphKind::random_spanning_trees;
  }

  /// Rows emitted per (d_e, trial).
  int rows_per_trial() const {
    int rows = 0;
    for (Method m : methods) rows += m == Method::original ? static_cast<int>(sweeps.size()) : 1;
    return rows;
  }

  void validate() const {
    auto fail = [](const std::string& s) { throw std::invalid_argument("invalid config: " + s); };
    if (trials < 1) fail("trials must be >= 1");
    if (grid_rows < 1 || grid_cols < 1) fail("grid dimensions must be positive");
    if (random_nodes < 1 || random_nodes > kMaxEnumerationNodes) fail("random graphs need 1..20 nodes");
    if (!(p_e >= 0.0 && p_e <= 1.0)) fail("p_e must be in [0,1]");
    if (!(d_n >= 0.0)) fail("d_n must be nonnegative");
    if (d_e.empty()) fail("d_e list is empty");
    for (double v : d_e)
      if (!(v >= 0.0)) fail("d_e values must be nonnegative");
    if (sweeps.empty()) fail("sweeps list is empty");
    for (long s : sweeps)
      if (s <= burn_in) fail("every sweep count must exceed burn_in");
    if (burn_in < 0) fail("burn_in must be nonnegative");
    if (!(c > 0.0)) fail("c must be positive");
    if (methods.empty()) fail("no methods selected");
    if (!(step > 0.0)) fail("step must be positive");
    if (pool_size < 1) fail("pool must be >= 1");
    if (iterations < 0) fail("iterations must be nonnegative");
    if (threads < 0) fail("threads must be nonnegative");
  }
};

struct TrialRecord {
  std::string topology;
  std::string interaction;
  double d_e = 0.0;
  double p_e = 0.0;
  int trial = 0;
  std::string method;
  long sweeps = 0;             // chain length used for the marginals
  long projection_sweeps = 0;  // pool sweeps spent inside the projection
  long svd_count = 0;
  double error = 0.0;          // mean |p_hat - p| over nodes; NaN on failure
  double wall_ms = 0.0;
  std::string failure;
};

inline double mean_abs_error(const VectorXd& estimate, const VectorXd& exact) {
  return (estimate - exact).cwiseAbs().mean();
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!(tok = trim(tok)).empty()) out.push_back(parse_double(tok, 0));
  return out;
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!(tok = trim(tok)).empty()) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Applies one key=value setting. Lists are comma separated.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto as_long = [&]() {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument("bad integer for " + key + ": " + value);
    return v;
  };
  if (key == "topology") {
    if (value == "grid8x8" || value == "grid") {
      cfg.topology = Topology::grid;
    } else if (value == "random10" || value == "random") {
      cfg.topology = Topology::random;
    } else {
      throw std::invalid_argument("unknown topology '" + value + "'");
    }
  } else if (key == "grid_rows") {
    cfg.grid_rows = static_cast<int>(as_long());
  } else if (key == "grid_cols") {
    cfg.grid_cols = static_cast<int>(as_long());
  } else if (key == "random_nodes") {
    cfg.random_nodes = static_cast<int>(as_long());
  } else if (key == "p_e") {
    cfg.p_e = parse_double(value, 0);
  } else if (key == "d_n") {
    cfg.d_n = parse_double(value, 0);
  } else if (key == "d_e") {
    cfg.d_e = detail::split_doubles(value);
  } else if (key == "interaction") {
    cfg.interaction = parse_interaction(value);
  } else if (key == "trials") {
    cfg.trials = static_cast<int>(as_long());
  } else if (key == "sweeps") {
    cfg.sweeps.clear();
    for (double v : detail::split_doubles(value)) cfg.sweeps.push_back(static_cast<long>(v));
  } else if (key == "burn_in") {
    cfg.burn_in = as_long();
  } else if (key == "c") {
    cfg.c = parse_double(value, 0);
  } else if (key == "methods") {
    cfg.methods.clear();
    for (const auto& w : detail::split_words(value)) cfg.methods.push_back(parse_method(w));
  } else if (key == "subgraphs") {
    cfg.subgraphs = parse_subgraph_kind(value);
  } else if (key == "step") {
    cfg.step = parse_double(value, 0);
  } else if (key == "pool") {
    cfg.pool_size = static_cast<int>(as_long());
  } else if (key == "iters") {
    cfg.iterations = static_cast<int>(as_long());
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "threads") {
    cfg.threads = static_cast<int>(as_long());
  } else if (key == "wall_time") {
    cfg.record_wall_time = value == "1" || value == "true" || value == "yes";
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

/// Reads `key = value` lines; '#' starts a comment.
inline ExperimentConfig read_config(std::istream& is, ExperimentConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

/// Model for one (d_e, trial) cell.
inline IsingModel experiment_model(const ExperimentConfig& cfg, double d_e, std::uint64_t seed) {
  if (cfg.topology == Topology::grid)
    return make_grid(cfg.grid_rows, cfg.grid_cols, cfg.d_n, d_e, cfg.interaction, seed);
  return make_random_graph(cfg.random_nodes, cfg.p_e, cfg.d_n, d_e, cfg.interaction, seed);
}

/// Grids by row-sweep elimination, random graphs by enumeration.
inline ExactMarginals experiment_exact(const ExperimentConfig& cfg, const IsingModel& m) {
  if (cfg.topology == Topology::grid) return eliminate_exact(m, grid_order({cfg.grid_rows, cfg.grid_cols}));
  return enumerate_exact(m);
}

/// Seeds: cell (d_e index, trial) draws from substream (master, trial) so
/// the trial index alone pins a model family; methods fork from the cell.
inline std::uint64_t cell_seed(std::uint64_t master, std::size_t de_index, int trial) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(trial)), de_index);
}

inline std::uint64_t method_seed(std::uint64_t cell, Method m, long sweeps = 0) {
  return derive_seed(cell, 0x100 + static_cast<std::uint64_t>(m) * 0x10000 + static_cast<std::uint64_t>(sweeps));
}

namespace detail {

inline DivergenceOptions divergence_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  DivergenceOptions o;
  o.c = cfg.c;
  o.step = cfg.step;
  o.iterations = cfg.iterations;
  o.pool_size = cfg.pool_size;
  o.seed = seed;
  return o;
}

inline ProjectionRun run_projection(const ExperimentConfig& cfg, Method method, const IsingModel& m,
                                    std::uint64_t seed) {
  const auto o = divergence_options(cfg, seed);
  switch (method) {
    case Method::euclidean: return project_euclidean(m, cfg.c, o.projection);
    case Method::piecewise: {
      std::optional<GridShape> g;
      if (cfg.topology == Topology::grid) g = GridShape{cfg.grid_rows, cfg.grid_cols};
      return project_piecewise(m, build_subgraphs(m, cfg.subgraph_kind(), derive_seed(seed, 7), g), o);
    }
    case Method::reverse_kl: return project_reverse_kl(m, o);
    case Method::inclusive_kl: return project_inclusive_kl(m, o);
    default: throw std::logic_error("not a projection method");
  }
}

inline std::vector<TrialRecord> run_cell(const ExperimentConfig& cfg, std::size_t de_index, int trial) {
  using clock = std::chrono::steady_clock;
  const double d_e = cfg.d_e[de_index];
  const std::uint64_t cell = cell_seed(cfg.seed, de_index, trial);
  const IsingModel model = experiment_model(cfg, d_e, derive_seed(cell, 0));
  const ExactMarginals exact = experiment_exact(cfg, model);

  std::vector<TrialRecord> rows;
  auto base = [&](Method m) {
    TrialRecord r;
    r.topology = cfg.topology_name();
    r.interaction = to_string(cfg.interaction);
    r.d_e = d_e;
    r.p_e = cfg.topology == Topology::random ? cfg.p_e : 0.0;
    r.trial = trial;
    r.method = to_string(m);
    return r;
  };
  auto finish = [&](TrialRecord& r, clock::time_point start) {
    if (cfg.record_wall_time)
      r.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    rows.push_back(std::move(r));
  };

  for (Method method : cfg.methods) {
    if (method == Method::original) {
      for (long s : cfg.sweeps) {
        TrialRecord r = base(method);
        const auto start = clock::now();
        r.sweeps = s;
        const auto est = estimate_marginals(model, s, cfg.burn_in, method_seed(cell, method, s));
        r.error = mean_abs_error(est.p_plus, exact.p_plus);
        finish(r, start);
      }
      continue;
    }
    TrialRecord r = base(method);
    const auto start = clock::now();
    try {
      if (is_projection(method)) {
        const auto run = run_projection(cfg, method, model, method_seed(cell, method));
        r.svd_count = run.decompositions;
        r.projection_sweeps = run.gibbs_sweeps;
        r.sweeps = cfg.sweeps.front();
        const auto est = estimate_marginals(run.psi, r.sweeps, cfg.burn_in, method_seed(cell, method, 1));
        r.error = mean_abs_error(est.p_plus, exact.p_plus);
      } else {
        const auto res = method == Method::mean_field ? mean_field(model) : loopy_bp(model);
        r.error = mean_abs_error(res.p_plus, exact.p_plus);
      }
    } catch (const std::exception& e) {
      r.error = std::numeric_limits<double>::quiet_NaN();
      r.failure = e.what();
    }
    finish(r, start);
  }
  return rows;
}

// Runs job(k) for k in [0, count) on a worker pool; results keep job order.
template <class Job>
auto parallel_map(std::size_t count, int threads, Job&& job) {
  using Result = decltype(job(std::size_t{0}));
  std::vector<Result> results(count);
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (std::size_t k; (k = next.fetch_add(1)) < count;) {
      try {
        results[k] = job(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace detail

/// Every (d_e, trial) cell: build the model, compute exact marginals once,
/// run each method, and score it by mean absolute marginal error. Rows are
/// ordered by d_e, then trial, then method as configured.
inline std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t trials = static_cast<std::size_t>(cfg.trials);
  const auto cells = detail::parallel_map(cfg.d_e.size() * trials, cfg.threads, [&](std::size_t k) {
    return detail::run_cell(cfg, k / trials, static_cast<int>(k % trials));
  });
  std::vector<TrialRecord> out;
  for (const auto& c : cells) out.insert(out.end(), c.begin(), c.end());
  return out;
}

inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << "topology,interaction,d_e,p_e,trial,method,sweeps,error,svd_count,wall_ms\n";
  for (const auto& r : records) {
    std::ostringstream wall;
    wall << std::fixed << std::setprecision(3) << r.wall_ms;
    os << r.topology << ',' << r.interaction << ',' << format_double(r.d_e) << ',' << format_double(r.p_e) << ','
       << r.trial << ',' << r.method << ',' << r.sweeps << ','
       << (std::isnan(r.error) ? std::string("nan") : format_double(r.error)) << ',' << r.svd_count << ','
       << wall.str() << '\n';
  }
}

/// Mean error per (method, sweeps) as gnuplot data blocks: one block per
/// series, "# <series>" header, columns d_e, mean error, standard error;
/// blocks are separated by two blank lines (select with `index`).
inline void write_gnuplot(std::ostream& os, const std::vector<TrialRecord>& records) {
  std::vector<std::string> series;
  std::map<std::string, std::map<double, std::vector<double>>> data;
  for (const auto& r : records) {
    const std::string name = r.method == "original" ? "original-" + std::to_string(r.sweeps) : r.method;
    if (!data.count(name)) series.push_back(name);
    if (!std::isnan(r.error)) data[name][r.d_e].push_back(r.error);
  }
  bool first = true;
  for (const auto& name : series) {
    if (!first) os << "\n\n";
    first = false;
    os << "# " << name << '\n';
    for (const auto& [de, errs] : data[name]) {
      double mean = 0.0;
      for (double e : errs) mean += e;
      mean /= static_cast<double>(errs.size());
      double var = 0.0;
      for (double e : errs) var += (e - mean) * (e - mean);
      const double se = errs.size() > 1 ? std::sqrt(var / static_cast<double>(errs.size() - 1) /
                                                    static_cast<double>(errs.size()))
                                        : 0.0;
      os << format_double(de) << ' ' << format_double(mean) << ' ' << format_double(se) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Timing report

struct TimingRow {
  std::string method;  // "original-<sweeps>" for unprojected chains
  int runs = 0;
  double gibbs_steps = 0.0;   // per run: chain sweeps for original, pool sweeps for projections
  double eval_sweeps = 0.0;   // per run: chain used to read marginals after projection
  double total_sweeps = 0.0;  // per run
  double svds = 0.0;          // per run
  double wall_ms = 0.0;       // per run
};

/// Per-method averages of the effort counters, one row per method in
/// first-seen order.
inline std::vector<TimingRow> timing_report(const std::vector<TrialRecord>& records) {
  std::vector<TimingRow> rows;
  for (const auto& r : records) {
    const bool original = r.method == "original";
    const std::string name = original ? "original-" + std::to_string(r.sweeps) : r.method;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const TimingRow& t) { return t.method == name; });
    if (it == rows.end()) {
      rows.push_back({name});
      it = rows.end() - 1;
    }
    it->runs += 1;
    it->gibbs_steps += static_cast<double>(original ? r.sweeps : r.projection_sweeps);
    it->eval_sweeps += static_cast<double>(original ? 0 : r.sweeps);
    it->total_sweeps += static_cast<double>(r.sweeps + r.projection_sweeps);
    it->svds += static_cast<double>(r.svd_count);
    it->wall_ms += r.wall_ms;
  }
  for (auto& t : rows) {
    const double n = t.runs;
    t.gibbs_steps /= n;
    t.eval_sweeps /= n;
    t.total_sweeps /= n;
    t.svds /= n;
    t.wall_ms /= n;
  }
  return rows;
}

inline void print_timing(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << std::left << std::setw(20) << "method" << std::right << std::setw(6) << "runs" << std::setw(14)
     << "gibbs_steps" << std::setw(14) << "eval_sweeps" << std::setw(14) << "total_sweeps" << std::setw(10)
     << "svds" << std::setw(12) << "wall_ms" << '\n';
  for (const auto& t : rows) {
    os << std::left << std::setw(20) << t.method << std::right << std::setw(6) << t.runs << std::fixed
       << std::setprecision(0) << std::setw(14) << t.gibbs_steps << std::setw(14) << t.eval_sweeps
       << std::setw(14) << t.total_sweeps << std::setprecision(1) << std::setw(10) << t.svds
       << std::setprecision(3) << std::setw(12) << t.wall_ms << '\n';
    os.unsetf(std::ios::fixed);
  }
}

// ---------------------------------------------------------------------------
// Accuracy against sampling effort

struct AccuracyPoint {
  std::string topology;
  std::string interaction;
  double d_e = 0.0;
  int trial = 0;
  std::string method;
  long sweeps = 0;
  double error = 0.0;
};

/// One chain per method per cell, error read at every checkpoint from the
/// running mean of all samples so far. `original` samples the unprojected
/// model; projection methods sample their projected model. Variational
/// methods are skipped.
inline std::vector<AccuracyPoint> accuracy_vs_time(const ExperimentConfig& cfg, std::vector<long> checkpoints) {
  cfg.validate();
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  const std::size_t trials = static_cast<std::size_t>(cfg.trials);
  const auto cells = detail::parallel_map(cfg.d_e.size() * trials, cfg.threads, [&](std::size_t k) {
    const std::size_t de_index = k / trials;
    const int trial = static_cast<int>(k % trials);
    const double d_e = cfg.d_e[de_index];
    const std::uint64_t cell = cell_seed(cfg.seed, de_index, trial);
    const IsingModel model = experiment_model(cfg, d_e, derive_seed(cell, 0));
    const ExactMarginals exact = experiment_exact(cfg, model);
    std::vector<AccuracyPoint> pts;
    for (Method method : cfg.methods) {
      if (method == Method::mean_field || method == Method::loopy_bp) continue;
      const IsingModel sampled =
          method == Method::original ? model : detail::run_projection(cfg, method, model, method_seed(cell, method)).psi;
      const auto trace = marginal_trace(sampled, checkpoints, cfg.burn_in, method_seed(cell, method, 2));
      for (std::size_t c = 0; c < trace.checkpoints.size(); ++c)
        pts.push_back({cfg.topology_name(), to_string(cfg.interaction), d_e, trial, to_string(method),
                       trace.checkpoints[c], mean_abs_error(trace.p_plus[c], exact.p_plus)});
    }
    return pts;
  });
  std::vector<AccuracyPoint> out;
  for (const auto& c : cells) out.insert(out.end(), c.begin(), c.end());
  return out;
}

inline void write_accuracy_csv(std::ostream& os, const std::vector<AccuracyPoint>& pts) {
  os << "topology,interaction,d_e,trial,method,sweeps,error\n";
  for (const auto& p : pts)
    os << p.topology << ',' << p.interaction << ',' << format_double(p.d_e) << ',' << p.trial << ',' << p.method
       << ',' << p.sweeps << ',' << format_double(p.error) << '\n';
}

}  // namespace fastmix

#endif  // FASTMIX_HARNESS_HPP
