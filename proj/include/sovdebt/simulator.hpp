#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sovdebt/equilibrium.hpp"
#include "sovdebt/solver_portfolio.hpp"

namespace sovdebt {

struct SimConfig {
  int n_samples = 5000;
  int t_total = 1501;
  int t_burn = 500;
  int sample_len = 80;
  int post_reentry_gap = 20;
  std::uint64_t seed = 20150814;
  double hp_lambda = 1600.0;

  void validate() const;
};

// Post-burn panel. Row n is a sample path, column t counts periods from the
// end of the burn-in. bnext/anext are the balances chosen at t, q and spread
// refer to that issuance (NaN without market access). d marks default and
// exclusion periods, defevent the default period itself, start_ok admissible
// sample-window starts.
struct Panel {
  int n_samples = 0, len = 0, t_burn = 0;
  Grid2<double> y, bnext, anext, q, spread, c, tb;
  Grid2<std::uint8_t> d, defevent, start_ok;
};

// Seeded panel simulation. Every sample owns an RNG stream derived from
// (seed, sample index) and consumes four uniforms per period in fixed order
// (income, reentry, default choice, debt choice), so draws are identical
// across solution methods and thread counts. Grid-based equilibria walk the
// Markov chain; interpolated ones draw the continuous AR(1).
Panel simulate_panel(const Equilibrium& eq, const ModelParams& p, const SimConfig& cfg);
Panel simulate_panel(const PortfolioEquilibrium& eq, const ModelParams& p, const SimConfig& cfg);

struct SampleWindow {
  std::vector<double> y, c, tb, spread, q, bnext, anext;
};

struct SampleSet {
  std::vector<SampleWindow> windows;
  long skipped = 0;         // sample paths without a qualifying window
  long panel_defaults = 0;  // default events across the whole post-burn panel
  long panel_periods = 0;   // post-burn periods across the whole panel
};

// First qualifying window per sample: sample_len consecutive periods free of
// default observations, starting at least post_reentry_gap periods after the
// latest reentry. A path that never defaulted before the window start has no
// gap constraint.
SampleSet select_samples(const Panel& panel, const SimConfig& cfg);

// Trend minimizes sum (x-tau)^2 + lambda * sum (second difference of tau)^2;
// returns (trend, cycle). Requires length >= 4.
std::pair<std::vector<double>, std::vector<double>> hp_filter(const std::vector<double>& series,
                                                              double lambda);

// Reporting convention: hm divides the debt-to-income ratio by four (income
// annualization), ce reports against quarterly income as is.
enum class ReportConvention : std::uint32_t { ce = 0, hm = 1 };

struct MomentStdErrors {
  double debt_to_income = 0.0, nondef_debt_to_income = 0.0;
  double mean_spread = 0.0, sd_spread = 0.0, default_rate = 0.0;
  double sigma_c_over_sigma_y = 0.0, sigma_tby_over_sigma_y = 0.0;
  double corr_c_y = 0.0, corr_tby_y = 0.0, corr_spread_y = 0.0;
};

struct MomentTable {
  double debt_to_income = 0.0;         // 100 * svc * b' / (delta + r) / y, /4 under hm
  double nondef_debt_to_income = 0.0;  // 100 * (a'/(1+r)) / y
  double mean_spread = 0.0;            // annual percent
  double sd_spread = 0.0;
  double default_rate = 0.0;           // 400 * defaults / post-burn quarters
  double sigma_c_over_sigma_y = 0.0;   // HP cycles of logs
  double sigma_tby_over_sigma_y = 0.0; // tb/y filtered in levels
  double corr_c_y = 0.0;
  double corr_tby_y = 0.0;
  double corr_spread_y = 0.0;          // spread filtered in levels
  double duration_quarters = 0.0;      // at issuance prices
  long n_windows = 0;
  long n_skipped = 0;
  MomentStdErrors se;                  // across-window; binomial for the rate
};

// Window statistics averaged across samples with equal weights; the default
// rate comes from the full post-burn panel. Throws on an empty sample set.
// Zero-variance cycles yield NaN ratios and correlations rather than a throw.
MomentTable compute_moments(const SampleSet& samples, const ModelParams& p,
                            ReportConvention convention, double hp_lambda = 1600.0);

}  // namespace sovdebt
