#pragma once

#include <span>
#include <vector>

#include "sovdebt/equilibrium.hpp"

namespace sovdebt {

// sigma * log(exp(vr/sigma) + exp(vd/sigma)), computed stably; the max for
// sigma == 0. The Euler-Mascheroni location shift is deliberately omitted.
double logsumexp_value(double v_repay, double v_default, double sigma);

// Smoothed default probability; the strict indicator for sigma == 0 with
// ties resolved toward repayment.
double default_probability(double v_repay, double v_default, double sigma);

struct ChoiceDensityResult {
  std::vector<double> probs;
  bool degenerate = false;  // every alternative at penalty level
};

// Logit probabilities over a set of choice values. sigma == 0 puts unit mass
// on the first argmax.
ChoiceDensityResult choice_density(std::span<const double> values, double sigma);

// Adjacent-window length for the debt-choice density: about 100*n_b*sigma
// points, capped at n_b/2 - 1 and floored at one.
int taste_window_length(int n_b, double sigma_debt);

// Value iteration with extreme-value taste shocks on the default decision
// and the debt choice. Debt-choice mass lives on an adjacent window centered
// at the full-scan argmax (shifted to fit the grid). Pure Jacobi: value and
// price updates, including the resale mix over the choice density, read only
// the previous iterate.
Equilibrium solve_taste(const ModelParams& p, const TasteParams& taste, const OneAssetGrids& g,
                        double tol = 1e-6, int max_iter = 2000,
                        const OneAssetInit* init = nullptr);

}  // namespace sovdebt
