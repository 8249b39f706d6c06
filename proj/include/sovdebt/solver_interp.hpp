#pragma once

#include <memory>

#include "sovdebt/equilibrium.hpp"
#include "sovdebt/interpolation.hpp"

namespace sovdebt {

// Continuous evaluation view over one-asset surfaces. Linear mode blends
// bilinearly; spline mode is a cubic B-spline over debt blended linearly
// across income (values and prices alike). Price queries are clamped into
// [0, q_rf]; v_default is linear across income in both modes. The view owns
// copies of what it needs, so it outlives its source.
class OneAssetApprox {
 public:
  OneAssetApprox() = default;

  static OneAssetApprox make(Scheme scheme, const GridAxis& b_axis, const GridAxis& y_axis,
                             const Grid2<double>& v_repay, std::span<const double> v_default,
                             const Grid2<double>& price, const ModelParams& p,
                             const Quadrature& quad,
                             std::shared_ptr<const SplineBasisAxis> basis = nullptr);

  // Uses the equilibrium's own scheme and also captures the debt policy.
  static OneAssetApprox from_equilibrium(const Equilibrium& eq, const Quadrature& quad);

  double value_repay(double b, double y) const;
  double value_default(double y) const;
  double option_value(double b, double y) const {
    return std::max(value_repay(b, y), value_default(y));
  }
  double price_at(double b_next, double y) const;
  double policy_at(double b, double y) const;  // requires policy capture

  Scheme scheme() const { return scheme_; }
  const GridAxis& b_axis() const { return b_axis_; }
  const GridAxis& y_axis() const { return y_axis_; }
  const Quadrature& quadrature() const { return quad_; }
  const Ar1Params& ar1() const { return ar1_; }
  double price_cap() const { return q_cap_; }

 private:
  Scheme scheme_ = Scheme::linear;
  GridAxis b_axis_, y_axis_;
  Grid2<double> vr_, price_, policy_;   // nodal values (linear) ...
  Grid2<double> vr_coef_, price_coef_;  // ... or per-income spline coefficients
  std::vector<double> vd_;
  std::shared_ptr<const SplineBasisAxis> basis_;
  Quadrature quad_;
  Ar1Params ar1_;
  double q_cap_ = 0.0;
};

// One-step Bellman objective under repayment: current utility at the quoted
// price plus the discounted quadrature expectation of the continuation.
double bellman_rhs(const StateOneAsset& s, double b_next, const OneAssetApprox& approx,
                   const ModelParams& p);

struct OptimizeStateResult {
  double b_next = 0.0;
  double value = 0.0;
  bool at_boundary = false;
};

// Equally spaced candidate scan over the debt axis followed by Brent inside
// the bracket around the best candidate. A boundary-best scan returns the
// boundary point flagged, without refinement. Ties break to smaller debt.
OptimizeStateResult optimize_state(const StateOneAsset& s, const OneAssetApprox& approx,
                                   const ModelParams& p, int n_candidates = 100);

struct InterpSolveOptions {
  Scheme scheme = Scheme::auto_switch;
  double tol = 1e-6;
  int max_iter = 2000;
  int switch_after = 250;  // linear iterations before the spline phase (auto)
  int n_candidates = 100;
  double damping = 1.0;    // weight on the new price iterate
  std::shared_ptr<const OneAssetInit> init;  // resume surfaces, grids must match
};

// Value iteration with continuous debt choice on interpolated surfaces.
// Income expectations use Gauss-Legendre quadrature against the AR(1) law;
// update order is pure Jacobi off the previous iterate.
Equilibrium solve_one_asset(const ModelParams& p, const OneAssetGrids& g, const Quadrature& quad,
                            const InterpSolveOptions& opt = {});

// Largest |T(V) - V| over n random off-grid states of a solved equilibrium.
double max_bellman_residual(const Equilibrium& eq, const Quadrature& quad, int n_states,
                            std::uint64_t seed);

}  // namespace sovdebt
