#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sovdebt/equilibrium.hpp"
#include "sovdebt/simulator.hpp"
#include "sovdebt/solver_portfolio.hpp"

namespace sovdebt {

// Exit statuses of run(): configuration problems are distinguished from
// crashes, and a clean run whose solver failed to converge from both.
inline constexpr int k_exit_ok = 0;
inline constexpr int k_exit_config = 1;
inline constexpr int k_exit_crash = 2;
inline constexpr int k_exit_nonconverged = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMethod { dss, taste, linear, spline, auto_scheme };

RunMethod parse_run_method(const std::string& name);  // throws ConfigError
std::string run_method_name(RunMethod m);
PortfolioMethod parse_opt_method(const std::string& name);  // throws ConfigError
std::string opt_method_name(PortfolioMethod m);

struct RunConfig {
  ModelParams params;

  RunMethod method = RunMethod::linear;
  bool portfolio = false;
  PortfolioMethod opt = PortfolioMethod::bobyqa;

  int n_b = 350, n_y = 200, n_a = 30;
  double b_max = 1.4;
  double a_cap_frac = 0.10;  // savings cap as a fraction of mean income
  double income_width = 3.0;
  int quad_n = 200;
  double quad_width = 4.0;

  TasteParams taste;
  double tol = 1e-6;
  int max_iter = 2000;
  int switch_after = 250;
  int n_candidates = 100;
  int n_cand_a = 10;
  double local_window = 0.05;
  double damping = 1.0;

  SimConfig sim;
  ReportConvention convention = ReportConvention::ce;

  int threads = 0;  // 0 keeps the runtime default
  std::string out_dir = "out";
  std::string checkpoint_path;        // empty: <out_dir>/checkpoint_<name>.bin
  std::string resume_path;            // checkpoint to seed from
  std::vector<std::string> compare;   // method names (optimizers in portfolio mode)

  void validate() const;  // throws ConfigError
};

// Key-value config file with [sections]; '#' and ';' start comments.
// Unknown keys and malformed values throw ConfigError with the line number.
RunConfig load_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);
std::string config_to_ini(const RunConfig& cfg);

// Re-runnable config embedded in a manifest written by run().
RunConfig config_from_manifest(const std::string& manifest_path);

// Git blob hash of a byte string (what `git hash-object` prints).
std::string git_blob_sha1(const std::string& bytes);

struct RunArtifacts {
  int exit_code = k_exit_ok;
  std::string manifest_path;
  std::string moments_path;
  std::vector<std::string> files;
  std::string error;  // diagnostic when exit_code is config or crash
};

// Solve, checkpoint, simulate, report. Artifacts land in cfg.out_dir; the
// manifest echoes the full config so the run can be reproduced bitwise.
// Non-convergence still writes every artifact and returns its own status.
RunArtifacts run(const RunConfig& cfg);

}  // namespace sovdebt
