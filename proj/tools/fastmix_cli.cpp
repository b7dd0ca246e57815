// Command-line front end: model generation, projection, sampling, exact and
// variational inference, and the experiment driver.

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fastmix/fastmix.hpp"

namespace {

using namespace fastmix;

IsingModel load_model(const std::string& path) {
  if (path == "-") return read_model(std::cin);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_model(in);
}

// Writes to `path`, or stdout for "-".
template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
}

void write_marginals(std::ostream& os, const VectorXd& p_plus) {
  os << "node,p_plus\n";
  for (Eigen::Index i = 0; i < p_plus.size(); ++i) os << i << ',' << format_double(p_plus(i)) << '\n';
}

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file (flags override it)");
    const std::vector<std::pair<std::string, std::string>> keys = {
        {"topology", "grid8x8 | random10"},
        {"grid_rows", "grid rows"},
        {"grid_cols", "grid columns"},
        {"random_nodes", "random-graph node count"},
        {"p_e", "edge probability (random graphs)"},
        {"d_n", "field strength"},
        {"d_e", "comma-separated interaction strengths"},
        {"interaction", "mixed | attractive"},
        {"trials", "trials per strength"},
        {"sweeps", "comma-separated chain lengths for original parameters"},
        {"burn_in", "sweeps discarded before averaging"},
        {"c", "spectral norm bound"},
        {"methods", "comma-separated: original,euclid,kl-piecewise,kl-rev,kl-incl,mf,lbp"},
        {"subgraphs", "chains | width2 | trees"},
        {"step", "gradient step size"},
        {"pool", "sample pool size"},
        {"iters", "projected-gradient iterations"},
        {"seed", "master seed"},
        {"threads", "worker threads (0 = all cores)"},
    };
    for (const auto& [key, help] : keys) {
      std::string flag = "--" + key;
      for (auto& ch : flag)
        if (ch == '_') ch = '-';
      app->add_option(flag, values[key], help);
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open " + file);
      cfg = read_config(in);
    }
    for (const auto& [key, value] : values)
      if (!value.empty()) apply_setting(cfg, key, value);
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-mixing projections of Ising models"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Draw a random grid or random-graph model");
  std::string gen_topology = "grid", gen_interaction = "mixed", gen_out = "-";
  int gen_rows = 8, gen_cols = 8, gen_n = 10;
  double gen_pe = 0.3, gen_dn = 1.0, gen_de = 1.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--topology", gen_topology, "grid | random")->check(CLI::IsMember({"grid", "random"}));
  gen->add_option("--rows", gen_rows, "grid rows");
  gen->add_option("--cols", gen_cols, "grid columns");
  gen->add_option("--n", gen_n, "random-graph node count");
  gen->add_option("--p-e", gen_pe, "edge probability");
  gen->add_option("--d-n", gen_dn, "field strength");
  gen->add_option("--d-e", gen_de, "interaction strength");
  gen->add_option("--interaction", gen_interaction, "mixed | attractive")->check(CLI::IsMember({"mixed", "attractive"}));
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--out", gen_out, "output model file ('-' for stdout)");

  // project
  auto* proj = app.add_subcommand("project", "Euclidean projection onto the spectral-norm set");
  std::string proj_in, proj_out = "-";
  double proj_c = 2.5;
  ProjectionOptions proj_opts;
  proj->add_option("--c", proj_c, "spectral norm bound")->required();
  proj->add_option("--in", proj_in, "input model")->required();
  proj->add_option("--out", proj_out, "output model");
  proj->add_option("--max-iter", proj_opts.max_iterations, "dual optimizer iteration cap");
  proj->add_option("--tol", proj_opts.gradient_tolerance, "projected-gradient tolerance");
  proj->add_flag("--verbose", proj_opts.verbosity, "report optimizer statistics on stderr");

  // project-div
  auto* pdiv = app.add_subcommand("project-div", "Project under a divergence");
  std::string pdiv_kind = "kl-rev", pdiv_in, pdiv_out = "-", pdiv_sub, pdiv_trace;
  DivergenceOptions pdiv_opts;
  pdiv->add_option("--kind", pdiv_kind, "euclid | kl-incl | kl-piecewise | kl-rev")
      ->check(CLI::IsMember({"euclid", "kl-incl", "kl-piecewise", "kl-rev"}));
  pdiv->add_option("--c", pdiv_opts.c, "spectral norm bound");
  pdiv->add_option("--step", pdiv_opts.step, "step size");
  pdiv->add_option("--pool", pdiv_opts.pool_size, "sample pool size");
  pdiv->add_option("--iters", pdiv_opts.iterations, "iterations");
  pdiv->add_option("--subgraphs", pdiv_sub, "chains | width2 | trees")->check(CLI::IsMember({"chains", "width2", "trees"}));
  pdiv->add_option("--seed", pdiv_opts.seed, "seed");
  pdiv->add_flag("--decay", pdiv_opts.step_decay, "use step / sqrt(t+1)");
  pdiv->add_option("--in", pdiv_in, "input model")->required();
  pdiv->add_option("--out", pdiv_out, "output model");
  pdiv->add_option("--trace", pdiv_trace, "write the iterate trace as CSV");

  // sample
  auto* samp = app.add_subcommand("sample", "Estimate marginals with a Gibbs chain");
  std::string samp_in, samp_out = "-", samp_scan = "systematic";
  long samp_sweeps = 30000, samp_burn = 0;
  std::uint64_t samp_seed = 0;
  samp->add_option("--sweeps", samp_sweeps, "sweeps");
  samp->add_option("--burn-in", samp_burn, "discarded sweeps");
  samp->add_option("--seed", samp_seed, "seed");
  samp->add_option("--scan", samp_scan, "systematic | random")->check(CLI::IsMember({"systematic", "random"}));
  samp->add_option("--in", samp_in, "input model")->required();
  samp->add_option("--out", samp_out, "marginals CSV");

  // exact
  auto* ex = app.add_subcommand("exact", "Exact marginals");
  std::string ex_in, ex_out = "-", ex_method = "auto";
  ex->add_option("--in", ex_in, "input model")->required();
  ex->add_option("--out", ex_out, "marginals CSV");
  ex->add_option("--method", ex_method, "auto | enumerate | eliminate")
      ->check(CLI::IsMember({"auto", "enumerate", "eliminate"}));

  // baseline
  auto* base = app.add_subcommand("baseline", "Mean-field or loopy BP marginals");
  std::string base_method = "mf", base_in, base_out = "-";
  VariationalOptions base_opts;
  base->add_option("--method", base_method, "mf | lbp")->check(CLI::IsMember({"mf", "lbp"}));
  base->add_option("--in", base_in, "input model")->required();
  base->add_option("--out", base_out, "marginals CSV");
  base->add_option("--tol", base_opts.tolerance, "convergence tolerance");
  base->add_option("--max-iters", base_opts.max_iterations, "iteration cap");
  base->add_option("--damping", base_opts.damping, "LBP damping");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run the accuracy experiment");
  ConfigFlags exp_cfg;
  exp_cfg.attach(exp);
  std::string exp_out = "-", exp_gnuplot, exp_checkpoints;
  bool exp_wall = false;
  exp->add_option("--out", exp_out, "results CSV");
  exp->add_option("--gnuplot", exp_gnuplot, "also write per-series means as gnuplot data blocks");
  exp->add_flag("--wall-time", exp_wall, "record wall-clock times (output is then not reproducible)");
  exp->add_option("--accuracy-checkpoints", exp_checkpoints,
                  "comma-separated sweep counts; writes error-vs-sweeps CSV instead");

  // timing
  auto* tim = app.add_subcommand("timing", "Report effort counters and wall time per method");
  ConfigFlags tim_cfg;
  tim_cfg.attach(tim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const IsingModel m = gen_topology == "grid"
                               ? make_grid(gen_rows, gen_cols, gen_dn, gen_de, parse_interaction(gen_interaction), gen_seed)
                               : make_random_graph(gen_n, gen_pe, gen_dn, gen_de, parse_interaction(gen_interaction), gen_seed);
      with_output(gen_out, [&](std::ostream& os) { write_model(os, m); });
    } else if (*proj) {
      const IsingModel m = load_model(proj_in);
      const IsingModel p = project_model(m, proj_c, proj_opts);
      with_output(proj_out, [&](std::ostream& os) { write_model(os, p); });
    } else if (*pdiv) {
      const IsingModel m = load_model(pdiv_in);
      const auto kind = parse_divergence(pdiv_kind);
      ProjectionRun run;
      switch (kind) {
        case DivergenceKind::euclidean: run = project_euclidean(m, pdiv_opts.c, pdiv_opts.projection); break;
        case DivergenceKind::inclusive_kl: run = project_inclusive_kl(m, pdiv_opts); break;
        case DivergenceKind::reverse_kl: run = project_reverse_kl(m, pdiv_opts); break;
        case DivergenceKind::piecewise_kl: {
          SubgraphKind sk = SubgraphKind::random_spanning_trees;
          if (!pdiv_sub.empty()) {
            sk = parse_subgraph_kind(pdiv_sub);
          } else if (detect_grid(m)) {
            sk = SubgraphKind::grid_chains;
          }
          run = project_piecewise(m, build_subgraphs(m, sk, derive_seed(pdiv_opts.seed, 7)), pdiv_opts);
          break;
        }
      }
      with_output(pdiv_out, [&](std::ostream& os) { write_model(os, run.psi); });
      if (!pdiv_trace.empty())
        with_output(pdiv_trace, [&](std::ostream& os) {
          os << "iteration,value,param_norm,spectral_norm,subgraph\n";
          for (const auto& t : run.trace)
            os << t.iteration << ',' << format_double(t.value) << ',' << format_double(t.param_norm) << ','
               << format_double(t.spectral_norm) << ',' << t.subgraph << '\n';
        });
      std::clog << to_string(kind) << ": " << run.iterations << " iterations, " << run.decompositions
                << " decompositions, " << run.gibbs_sweeps << " pool sweeps\n";
    } else if (*samp) {
      const IsingModel m = load_model(samp_in);
      const auto est = estimate_marginals(m, samp_sweeps, samp_burn, samp_seed,
                                          samp_scan == "random" ? Scan::random : Scan::systematic);
      with_output(samp_out, [&](std::ostream& os) { write_marginals(os, est.p_plus); });
    } else if (*ex) {
      const IsingModel m = load_model(ex_in);
      ExactMarginals res;
      if (ex_method == "enumerate") {
        res = enumerate_exact(m);
      } else if (ex_method == "eliminate") {
        const auto g = detect_grid(m);
        res = eliminate_exact(m, g ? grid_order(*g) : min_fill_order(m));
      } else {
        res = exact_marginals(m);
      }
      with_output(ex_out, [&](std::ostream& os) { write_marginals(os, res.p_plus); });
      std::clog << "log partition " << format_double(res.log_partition) << '\n';
    } else if (*base) {
      const IsingModel m = load_model(base_in);
      const auto res = base_method == "mf" ? mean_field(m, base_opts) : loopy_bp(m, base_opts);
      with_output(base_out, [&](std::ostream& os) { write_marginals(os, res.p_plus); });
      std::clog << base_method << ": " << (res.converged ? "converged" : "not converged") << " after "
                << res.iterations << " iterations, residual " << res.residual << '\n';
    } else if (*exp) {
      ExperimentConfig cfg = exp_cfg.resolve();
      cfg.record_wall_time = exp_wall;
      if (!exp_checkpoints.empty()) {
        std::vector<long> cps;
        for (double v : detail::split_doubles(exp_checkpoints)) cps.push_back(static_cast<long>(v));
        const auto pts = accuracy_vs_time(cfg, cps);
        with_output(exp_out, [&](std::ostream& os) { write_accuracy_csv(os, pts); });
      } else {
        const auto records = run_experiment(cfg);
        with_output(exp_out, [&](std::ostream& os) { write_csv(os, records); });
        if (!exp_gnuplot.empty()) with_output(exp_gnuplot, [&](std::ostream& os) { write_gnuplot(os, records); });
        for (const auto& r : records)
          if (!r.failure.empty())
            std::cerr << "trial " << r.trial << " d_e " << r.d_e << " " << r.method << " failed: " << r.failure << '\n';
      }
    } else if (*tim) {
      ExperimentConfig cfg = tim_cfg.resolve();
      cfg.record_wall_time = true;
      print_timing(std::cout, timing_report(run_experiment(cfg)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
