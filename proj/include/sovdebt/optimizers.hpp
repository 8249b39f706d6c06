#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace sovdebt {

enum class OptStatus { converged, max_iter, bracket_failure, out_of_bounds };

// Downhill bracket a < b < c with f(b) <= min(f(a), f(c)).
struct Bracket {
  double a = 0, b = 0, c = 0;
  double fa = 0, fb = 0, fc = 0;
};

struct OptResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  OptStatus status = OptStatus::converged;
};

using Objective1D = std::function<double(double)>;
using ObjectiveND = std::function<double(std::span<const double>)>;

// Golden-section expansion from two seed points. Empty on failure.
std::optional<Bracket> bracket_minimum(const Objective1D& f, double a0, double b0,
                                       int max_expansions = 60, int* evals = nullptr);

// Brent's parabolic/golden minimization inside a bracket.
OptResult brent_min(const Objective1D& f, const Bracket& br, double tol = 1e-10,
                    int max_iter = 200);

// Simplex search. Bounds, when given, act through a quadratic penalty and the
// returned point is clamped into the box.
OptResult nelder_mead(const ObjectiveND& f, std::span<const double> x0, double scale,
                      double tol, int max_iter, std::span<const double> lower = {},
                      std::span<const double> upper = {});

// Powell's direction-set method with Brent line searches. When bounds are
// given, evaluations outside the box pay a quadratic penalty; if the search
// is still pulled past the wall the result is flagged out_of_bounds.
OptResult powell_linmin(const ObjectiveND& f, std::span<const double> x0, double step,
                        double tol, int max_iter, std::span<const double> lower = {},
                        std::span<const double> upper = {});

// Derivative-free bound-constrained trust-region method in the BOBYQA family:
// a quadratic model interpolating npt points (minimum Frobenius norm Hessian)
// is minimized over the intersection of the trust region and the box. Never
// evaluates the objective outside [lower, upper].
OptResult bobyqa(const ObjectiveND& f, std::span<const double> x0,
                 std::span<const double> lower, std::span<const double> upper,
                 double rho_begin, double rho_end = 1e-8, int max_evals = 2000, int npt = 0);

// Quasi-Newton (BFGS update, DFP family) with central-difference gradients.
// A failed directional bracket maps to bracket_failure.
OptResult dfp_bfgs(const ObjectiveND& f, std::span<const double> x0, double grad_step,
                   double tol, int max_iter, std::span<const double> lower = {},
                   std::span<const double> upper = {});

std::vector<double> finite_diff_gradient(const ObjectiveND& f, std::span<const double> x,
                                         double h);

}  // namespace sovdebt
