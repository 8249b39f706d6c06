#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sovdebt/grid_array.hpp"
#include "sovdebt/model.hpp"
#include "sovdebt/stochastic.hpp"

namespace sovdebt {

enum class SolverKind : std::uint32_t { dss = 0, taste = 1, interp = 2, portfolio = 3 };

// Interpolation scheme for value/price surfaces. auto_switch runs linear
// first and reseeds a spline phase if the linear phase stalls.
enum class Scheme : std::uint32_t { linear = 0, spline = 1, auto_switch = 2 };

struct ConvergenceStatus {
  bool converged = false;
  int iterations = 0;
  double final_sup_norm = 0.0;
  std::vector<double> sup_norm_history;
  std::string phase;  // phase that produced the final iterate
  int linear_iterations = 0;
  int spline_iterations = 0;

  // Peak-to-trough spread of the sup-norm over the trailing iterations;
  // the non-convergence diagnostic for oscillating fixed points.
  double oscillation_amplitude(int window = 50) const;
};

// Smoothing scales of the extreme-value taste shocks attached to the default
// decision and to the debt choice.
struct TasteParams {
  double sigma_default = 0.003;
  double sigma_debt = 0.003;
};

// Choice probabilities over an adjacent window of debt grid points, one row
// per (income, debt) state.
struct SparseChoiceDensity {
  int n_b = 0, n_y = 0;
  std::vector<int> window_start;           // first grid index of each row's window
  std::vector<int> window_len;
  std::vector<double> probs;               // rows packed back to back
  std::vector<std::size_t> row_offset;     // into probs, size n_b*n_y + 1

  std::size_t row(int iy, int ib) const { return static_cast<std::size_t>(iy) * n_b + ib; }
  bool empty() const { return probs.empty(); }
};

struct OneAssetGrids {
  std::vector<double> b_grid;  // debt levels, increasing, b_grid[0] == 0
  IncomeGrid income;           // transition present for dss/taste only
};

OneAssetGrids make_one_asset_grids(const Ar1Params& ar1, int n_b, double b_max, int n_y,
                                   double income_width, bool with_transition);

// Warm-start surfaces for the one-asset solvers. Dimensions must match the
// target grids; debt_policy is optional (empty starts the policy at zero).
struct OneAssetInit {
  Grid2<double> v_repay;
  std::vector<double> v_default;
  Grid2<double> price;
  Grid2<double> debt_policy;
};

// Converged (or terminal) objects of the one-asset model. Arrays are indexed
// (iy, ib). Optional parts are empty unless the producing solver fills them.
struct Equilibrium {
  SolverKind kind = SolverKind::dss;
  Scheme scheme = Scheme::linear;  // approximation used by interp solvers
  ModelParams params;
  TasteParams taste;

  std::vector<double> b_grid;
  IncomeGrid income;

  Grid2<double> v_repay;
  std::vector<double> v_default;  // per income node
  Grid2<double> v_option;
  Grid2<double> price;            // q(b', y): debt choice by column
  Grid2<double> debt_policy;      // chosen b' in levels (modal choice for taste)
  Grid2<int> debt_policy_idx;     // grid index, dss/taste only
  Grid2<std::uint8_t> default_rule;
  Grid2<double> default_prob;     // smoothed default probability, taste only
  SparseChoiceDensity density;    // taste only

  ConvergenceStatus status;

  int n_b() const { return static_cast<int>(b_grid.size()); }
  int n_y() const { return income.size(); }
};

}  // namespace sovdebt
