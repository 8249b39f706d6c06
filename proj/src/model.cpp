#include "sovdebt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace sovdebt {

namespace detail {

double crra_general(double gamma, double c) {
  return std::pow(c, 1.0 - gamma) / (1.0 - gamma);
}

double penalty_utility(double gamma, double c) {
  double at_floor = gamma == 2.0 ? -1.0 / k_consumption_floor
                                 : crra_general(gamma, k_consumption_floor);
  return std::min(at_floor, -1e10) - 1e10 * (k_consumption_floor - c);
}

}  // namespace detail

void ModelParams::validate() const {
  ar1.validate();
  if (!(gamma > 0.0) || gamma == 1.0)
    throw std::invalid_argument("model: gamma must be positive and != 1");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("model: beta must be in (0,1)");
  if (!(r > 0.0)) throw std::invalid_argument("model: r must be positive");
  if (!(psi >= 0.0 && psi <= 1.0)) throw std::invalid_argument("model: psi must be in [0,1]");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("model: delta must be in (0,1]");
  if (!(z >= 0.0)) throw std::invalid_argument("model: z must be non-negative");
  if (formulation == Formulation::hm) {
    double want = (r + delta) / (1.0 + r);
    if (std::fabs(kappa - want) > 1e-12)
      throw std::invalid_argument("model: HM requires kappa = (r+delta)/(1+r)");
  }
  if (!(ar1.sigma_eps > 0.0)) throw std::invalid_argument("model: sigma_eps must be positive");
}

double risk_free_price(const ModelParams& p) {
  // q* solves q = payout(q)/(1+r) with no default risk.
  return p.formulation == Formulation::ce ? (p.delta + (1.0 - p.delta) * p.z) / (p.r + p.delta)
                                          : p.kappa / (p.r + p.delta);
}

BondAnalytics yield_spread_duration(double q, const ModelParams& p) {
  if (!(q > 0.0)) throw std::domain_error("yield: price must be positive");
  BondAnalytics out;
  out.unit_pv = 1.0 / (p.delta + p.r);
  if (p.formulation == Formulation::ce) {
    out.yield = (p.delta + (1.0 - p.delta) * p.z) / q - p.delta;
    out.spread_annual = std::pow(1.0 + out.yield, 4) - std::pow(1.0 + p.r, 4);
    out.duration = 1.0 / p.delta;
  } else {
    out.yield = p.kappa / q - p.delta;
    out.spread_annual = std::pow((1.0 + out.yield) / (1.0 + p.r), 4) - 1.0;
    out.duration = (1.0 + out.yield) / (out.yield + p.delta);
  }
  return out;
}

double reported_debt_to_income(double b_next, double y, const ModelParams& p,
                               bool divide_by_four) {
  // One face unit owes the service flow each period until retirement, so its
  // PV at the risk-free rate is svc/(delta+r), the risk-free bond price.
  double pv = b_next * p.debt_service_rate() / (p.delta + p.r);
  double ratio = 100.0 * pv / y;
  return divide_by_four ? ratio / 4.0 : ratio;
}

}  // namespace sovdebt
