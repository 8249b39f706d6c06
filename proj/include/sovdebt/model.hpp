#pragma once

#include "sovdebt/stochastic.hpp"

namespace sovdebt {

// CE: bonds mature with prob delta, coupon z on the unmatured stock.
// HM: perpetuity with geometrically decaying coupon kappa = (r+delta)/(1+r).
// With z = r/(1+r) both formulations price identically.
enum class Formulation { ce, hm };

struct ModelParams {
  double gamma = 2.0;
  double r = 0.01;
  double beta = 0.95402;
  double psi = 0.0385;  // reentry probability
  double delta = 0.05;  // maturity rate
  double z = 0.03;      // CE coupon
  double kappa = (0.01 + 0.05) / 1.01;
  double d0 = -0.18819;
  double d1 = 0.24558;
  Formulation formulation = Formulation::ce;
  Ar1Params ar1;

  void validate() const;

  // Per-unit cash obligation on outstanding debt.
  double debt_service_rate() const {
    return formulation == Formulation::ce ? delta + (1.0 - delta) * z : kappa;
  }

  // Per-unit payout to the lender next period, given the resale price there.
  double payout(double q_next) const {
    return formulation == Formulation::ce ? delta + (1.0 - delta) * (z + q_next)
                                          : kappa + (1.0 - delta) * q_next;
  }
};

struct StateOneAsset {
  double b;  // outstanding debt
  double y;  // income
};

struct BondAnalytics {
  double yield = 0.0;           // quarterly yield to maturity
  double spread_annual = 0.0;   // annualized spread over the risk-free rate
  double duration = 0.0;        // quarters; 1/delta (CE) or Macaulay (HM)
  double unit_pv = 0.0;         // present value of one unit of claims, 1/(delta+r)
};

// CRRA with a severe linear penalty below the consumption floor, so
// infeasible budget sets are dominated but comparable.
inline constexpr double k_consumption_floor = 1e-8;

namespace detail {
double crra_general(double gamma, double c);
double penalty_utility(double gamma, double c);
}  // namespace detail

inline double utility(const ModelParams& p, double c) {
  if (c < k_consumption_floor) return detail::penalty_utility(p.gamma, c);
  if (p.gamma == 2.0) return -1.0 / c;  // hot path in every solver
  return detail::crra_general(p.gamma, c);
}

// Income loss in default: max(0, d0 y + d1 y^2).
inline double default_cost(double y, double d0, double d1) {
  double v = d0 * y + d1 * y * y;
  return v > 0.0 ? v : 0.0;
}

// Budget identity under repayment.
inline double consumption_repay(const StateOneAsset& s, double b_next, double q,
                                const ModelParams& p) {
  return s.y - p.debt_service_rate() * s.b + q * (b_next - (1.0 - p.delta) * s.b);
}

double risk_free_price(const ModelParams& p);

// Yield, annualized spread and duration implied by price q. Throws on q <= 0.
BondAnalytics yield_spread_duration(double q, const ModelParams& p);

// Face value to present value, then to percent of income. Optionally divide
// by 4 (a reporting convention sometimes applied to annualize HM stocks).
double reported_debt_to_income(double b_next, double y, const ModelParams& p,
                               bool divide_by_four = false);

}  // namespace sovdebt
