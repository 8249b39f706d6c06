#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace sovdebt {

// log y' = (1-rho) mu + rho log y + sigma_eps epsilon', epsilon' ~ N(0,1).
struct Ar1Params {
  double rho = 0.948503;
  double sigma_eps = 0.027092;
  double mu = -0.5 * 0.027092 * 0.027092;

  double unconditional_sd() const;
  double unconditional_mean_income() const;  // E[y] of the stationary lognormal
  void validate() const;                     // throws std::invalid_argument
};

// Discrete income grid in levels. `transition` is row-stochastic when present
// (Tauchen); interpolation-based solvers carry only the nodes.
struct IncomeGrid {
  std::vector<double> nodes;
  std::vector<double> transition;  // n*n row-major, may be empty

  int size() const { return static_cast<int>(nodes.size()); }
  double prob(int i, int j) const { return transition[static_cast<std::size_t>(i) * nodes.size() + j]; }
};

// Gauss-Legendre nodes/weights for E[f(eps)], eps ~ N(0,1) truncated to
// [-width, width]. Weights embed the Gaussian density and are renormalized
// to sum to one.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }
};

// Tauchen (1986) discretization over [-width, width] unconditional sds.
IncomeGrid tauchen_discretize(const Ar1Params& p, int n, double width = 3.0);

// Income nodes equally spaced in logs over the same span, no transition matrix.
IncomeGrid log_spaced_income_grid(const Ar1Params& p, int n, double width = 3.0);

Quadrature gauss_legendre(int n, double width = 4.0);

// E[f(y') | y] via the quadrature. Non-finite values of f propagate.
double conditional_expectation(const std::function<double(double)>& f, double y,
                               const Ar1Params& p, const Quadrature& quad);

// Simulated level path of length t, started at the unconditional mean income.
std::vector<double> simulate_income_path(const Ar1Params& p, std::uint64_t seed, std::size_t t);

}  // namespace sovdebt
