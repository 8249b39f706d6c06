#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sovdebt/runner.hpp"

using namespace sovdebt;

int main(int argc, char** argv) {
  CLI::App app{"sovdebt: solver suite for the quarterly sovereign default model"};

  std::string config_path, from_manifest;
  std::string method, formulation, opt, grids, compare, convention;
  std::string out_dir, checkpoint, resume;
  double sigma_taste = -1.0, tol = -1.0, b_max = -1.0, a_cap_frac = -1.0, hp_lambda = -1.0;
  double damping = -1.0;
  long long seed = -1;
  int max_iter = -1, switch_after = -1, threads = -1, quad = -1;
  int n_samples = -1, t_total = -1, t_burn = -1, sample_len = -1, gap = -1;
  int candidates = -1, cand_a = -1;
  bool portfolio = false;

  app.add_option("--config", config_path, "config file (key = value with [sections])");
  app.add_option("--from-manifest", from_manifest, "re-run the config embedded in a manifest");
  app.add_option("--method", method, "dss|taste|linear|spline|auto");
  app.add_option("--formulation", formulation, "ce|hm");
  app.add_flag("--portfolio", portfolio, "solve the two-asset portfolio model");
  app.add_option("--opt", opt, "powell|bobyqa|nelder-mead|dfp");
  app.add_option("--grids", grids, "N_b,N_y[,N_a]");
  app.add_option("--sigma-taste", sigma_taste, "taste scale for both shocks");
  app.add_option("--tol", tol, "sup-norm convergence tolerance");
  app.add_option("--max-iter", max_iter, "iteration cap");
  app.add_option("--switch-after", switch_after, "iterations before scheme switch / local stage");
  app.add_option("--seed", seed, "simulation seed");
  app.add_option("--threads", threads, "worker threads (0 = runtime default)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--checkpoint", checkpoint, "checkpoint file to write");
  app.add_option("--resume", resume, "checkpoint file to resume from");
  app.add_option("--compare", compare, "comma list of methods (optimizers with --portfolio)");
  app.add_option("--convention", convention, "debt reporting convention: ce|hm");
  app.add_option("--b-max", b_max, "upper end of the debt grid");
  app.add_option("--a-cap-frac", a_cap_frac, "savings cap as a fraction of mean income");
  app.add_option("--quad", quad, "quadrature nodes");
  app.add_option("--candidates", candidates, "debt candidates per state");
  app.add_option("--cand-a", cand_a, "savings candidates per state (portfolio)");
  app.add_option("--damping", damping, "price update weight");
  app.add_option("--n-samples", n_samples, "simulated paths");
  app.add_option("--t-total", t_total, "periods per path");
  app.add_option("--t-burn", t_burn, "burn-in periods");
  app.add_option("--sample-len", sample_len, "window length");
  app.add_option("--gap", gap, "post-reentry gap before a window may start");
  app.add_option("--hp-lambda", hp_lambda, "HP smoothing weight");

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    if (!from_manifest.empty())
      cfg = config_from_manifest(from_manifest);
    else if (!config_path.empty())
      cfg = load_config_file(config_path);

    if (!method.empty()) cfg.method = parse_run_method(method);
    if (!formulation.empty()) {
      if (formulation == "ce") cfg.params.formulation = Formulation::ce;
      else if (formulation == "hm") cfg.params.formulation = Formulation::hm;
      else throw ConfigError("--formulation must be ce or hm");
    }
    if (portfolio) cfg.portfolio = true;
    if (!opt.empty()) cfg.opt = parse_opt_method(opt);
    if (!grids.empty()) {
      int vals[3] = {0, 0, 0};
      int got = std::sscanf(grids.c_str(), "%d,%d,%d", &vals[0], &vals[1], &vals[2]);
      if (got < 2) throw ConfigError("--grids expects N_b,N_y[,N_a]");
      cfg.n_b = vals[0];
      cfg.n_y = vals[1];
      if (got == 3) cfg.n_a = vals[2];
    }
    if (sigma_taste >= 0.0) {
      cfg.taste.sigma_default = sigma_taste;
      cfg.taste.sigma_debt = sigma_taste;
    }
    if (tol > 0.0) cfg.tol = tol;
    if (max_iter > 0) cfg.max_iter = max_iter;
    if (switch_after >= 0) cfg.switch_after = switch_after;
    if (seed >= 0) cfg.sim.seed = static_cast<std::uint64_t>(seed);
    if (threads >= 0) cfg.threads = threads;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;
    if (!resume.empty()) cfg.resume_path = resume;
    if (!compare.empty()) {
      cfg.compare.clear();
      std::string cur;
      for (char c : compare + ",") {
        if (c == ',') {
          if (!cur.empty()) cfg.compare.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
    }
    if (!convention.empty()) {
      if (convention == "ce") cfg.convention = ReportConvention::ce;
      else if (convention == "hm") cfg.convention = ReportConvention::hm;
      else throw ConfigError("--convention must be ce or hm");
    }
    if (b_max > 0.0) cfg.b_max = b_max;
    if (a_cap_frac >= 0.0) cfg.a_cap_frac = a_cap_frac;
    if (quad > 0) cfg.quad_n = quad;
    if (candidates > 0) cfg.n_candidates = candidates;
    if (cand_a > 0) cfg.n_cand_a = cand_a;
    if (damping > 0.0) cfg.damping = damping;
    if (n_samples > 0) cfg.sim.n_samples = n_samples;
    if (t_total > 0) cfg.sim.t_total = t_total;
    if (t_burn >= 0) cfg.sim.t_burn = t_burn;
    if (sample_len > 0) cfg.sim.sample_len = sample_len;
    if (gap >= 0) cfg.sim.post_reentry_gap = gap;
    if (hp_lambda >= 0.0) cfg.sim.hp_lambda = hp_lambda;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return k_exit_config;
  }

  RunArtifacts art = run(cfg);
  if (!art.error.empty()) {
    std::fprintf(stderr, "%s\n",
                 (art.exit_code == k_exit_config ? "config error: " + art.error
                                                 : "error: " + art.error)
                     .c_str());
  } else if (art.exit_code == k_exit_nonconverged) {
    std::fprintf(stderr, "solver did not converge; artifacts written to %s\n",
                 cfg.out_dir.c_str());
  }
  return art.exit_code;
}
