#pragma once

#include <functional>
#include <memory>

#include "sovdebt/equilibrium.hpp"
#include "sovdebt/interpolation.hpp"
#include "sovdebt/optimizers.hpp"

namespace sovdebt {

// Two-instrument model: defaultable long-duration debt b plus non-defaultable
// one-period debt a issued at the risk-free price. Non-defaultable debt is
// capped at a_cap and repaid even in default, which keeps the default value
// separable: V_D(a,y) = u(y - a - cost) + H(y) with H independent of a.
enum class PortfolioMethod : std::uint32_t { powell = 0, bobyqa = 1, nelder_mead = 2, dfp = 3 };

struct PortfolioGrids {
  std::vector<double> b_grid;
  std::vector<double> a_grid;  // {0} when the cap is zero
  IncomeGrid income;
};

PortfolioGrids make_portfolio_grids(const Ar1Params& ar1, int n_b, double b_max, int n_a,
                                    double a_cap, int n_y, double income_width,
                                    bool with_transition);

struct PortfolioState {
  double b, a, y;
};

inline double portfolio_consumption(const PortfolioState& s, double b_next, double a_next,
                                    double q, const ModelParams& p) {
  return s.y - p.debt_service_rate() * s.b - s.a + a_next / (1.0 + p.r) +
         q * (b_next - (1.0 - p.delta) * s.b);
}

// Seed for the refinement stage: the best pair found by a candidate scan
// with Brent applied along debt at every non-defaultable candidate column.
struct StagePoint {
  double b = 0.0, a = 0.0;
  double value = 0.0;
};

// Candidate scan plus per-column Brent over an arbitrary 2d objective f(b,a)
// to be maximized on the box. Ties break toward smaller a, then smaller b.
StagePoint global_stage(const std::function<double(double, double)>& f, double b_lo, double b_hi,
                        double a_lo, double a_hi, int n_cand_b = 100, int n_cand_a = 100);

struct RefineResult {
  double b = 0.0, a = 0.0;
  double value = 0.0;
  bool improved = false;       // strictly better than the seed
  OptStatus status = OptStatus::converged;
};

// Black-box polish of a stage seed, run in box-normalized coordinates. The
// result is never worse than the seed: a failed or out-of-bounds refinement
// falls back to the seed with the status kept for diagnostics.
RefineResult refine_candidate(const std::function<double(double, double)>& f, double b0,
                              double a0, double v0, double b_lo, double b_hi, double a_lo,
                              double a_hi, PortfolioMethod method, int max_evals = 120,
                              double rho_begin_frac = 0.10, double rho_end = 1e-8);

// Warm-start surfaces; dimensions must match the target grids.
struct PortfolioInit {
  Grid3<double> v_repay;
  Grid2<double> v_default;
  Grid3<double> price;
  Grid3<double> policy_b, policy_a;  // optional, empty starts at zero
};

struct PortfolioSolveOptions {
  PortfolioMethod method = PortfolioMethod::bobyqa;
  Scheme scheme = Scheme::linear;  // linear, or spline over (b,a) blended across income
  double tol = 1e-6;
  int max_iter = 2000;
  int switch_after = 250;     // iterations before the search localizes
  int n_cand_b = 100;
  int n_cand_a = 10;
  double local_window = 0.05;  // neighborhood half-width, fraction of axis span
  int refine_max_evals = 120;
  double rho_begin_frac = 0.10;
  double rho_end = 1e-8;
  std::shared_ptr<const PortfolioInit> init;  // resume surfaces
};

struct PortfolioEquilibrium {
  ModelParams params;
  double a_cap = 0.0;
  PortfolioMethod method = PortfolioMethod::bobyqa;
  Scheme scheme = Scheme::linear;
  TasteParams taste;

  std::vector<double> b_grid, a_grid;
  IncomeGrid income;

  Grid3<double> v_repay;   // (iy, ia, ib)
  Grid2<double> v_default; // (iy, ia)
  Grid3<double> v_option;
  Grid3<double> price;     // q at chosen pair (iy, ia', ib')
  Grid3<double> policy_b, policy_a;
  Grid3<std::uint8_t> default_rule;

  ConvergenceStatus status;
  long refine_fallbacks = 0;  // refinement rejected (worse or out of bounds)

  int n_b() const { return static_cast<int>(b_grid.size()); }
  int n_a() const { return static_cast<int>(a_grid.size()); }
  int n_y() const { return income.size(); }
};

// Candidate scan over (b',a') with Brent refinement along debt at the best
// non-defaultable column, then a 2d black-box polish bounded by the search
// box. A zero cap freezes the a dimension and skips the 2d polish entirely,
// so the one-asset solver is nested exactly. After switch_after iterations
// the search restricts to a neighborhood of each state's previous policy.
PortfolioEquilibrium solve_portfolio(const ModelParams& p, const PortfolioGrids& g,
                                     const Quadrature& quad,
                                     const PortfolioSolveOptions& opt = {});

// Discrete-choice taste-shock variant over the (b',a') product grid with a
// rectangular logit window. Smoothing two coupled choices does not settle at
// usable shock scales; this exists to demonstrate the non-convergence
// diagnostics (sup-norm history and oscillation amplitude).
PortfolioEquilibrium solve_portfolio_taste(const ModelParams& p, const PortfolioGrids& g,
                                           const TasteParams& taste, double tol = 1e-6,
                                           int max_iter = 400);

}  // namespace sovdebt
