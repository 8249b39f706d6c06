#include "sovdebt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

#include "sovdebt/rng.hpp"
#include "sovdebt/solver_interp.hpp"

namespace sovdebt {

void SimConfig::validate() const {
  if (n_samples < 1) throw std::invalid_argument("SimConfig: n_samples must be positive");
  if (t_burn < 0 || t_total <= t_burn)
    throw std::invalid_argument("SimConfig: need t_total > t_burn >= 0");
  if (sample_len < 4) throw std::invalid_argument("SimConfig: sample_len must be at least 4");
  if (sample_len > t_total - t_burn)
    throw std::invalid_argument("SimConfig: sample window exceeds the stored panel");
  if (post_reentry_gap < 0) throw std::invalid_argument("SimConfig: negative reentry gap");
  if (!(hp_lambda >= 0.0)) throw std::invalid_argument("SimConfig: hp_lambda must be nonnegative");
}

namespace {

constexpr double k_nan = std::numeric_limits<double>::quiet_NaN();

// splitmix64 finalizer over a golden-ratio stride: independent stream per
// sample index, stable across thread counts.
std::uint64_t stream_seed(std::uint64_t seed, int sample) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(sample + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double spread_or_nan(double q, const ModelParams& p) {
  if (!(q > 1e-12)) return k_nan;
  return yield_spread_duration(q, p).spread_annual;
}

struct Lerp {
  int j = 0;
  double t = 0.0;
};

Lerp locate01(const std::vector<double>& nodes, double x) {
  int n = static_cast<int>(nodes.size());
  if (n < 2) return {0, 0.0};
  if (x <= nodes.front()) return {0, 0.0};
  if (x >= nodes.back()) return {n - 2, 1.0};
  int j = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
  j = std::min(j, n - 2);
  double t = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
  return {j, std::clamp(t, 0.0, 1.0)};
}

double lerp2(const Grid2<double>& g, const Lerp& wy, const Lerp& wa) {
  int y1 = std::min(wy.j + 1, g.n0 - 1), a1 = std::min(wa.j + 1, g.n1 - 1);
  double lo = (1.0 - wa.t) * g(wy.j, wa.j) + wa.t * g(wy.j, a1);
  double hi = (1.0 - wa.t) * g(y1, wa.j) + wa.t * g(y1, a1);
  return (1.0 - wy.t) * lo + wy.t * hi;
}

double lerp3(const Grid3<double>& g, const Lerp& wy, const Lerp& wa, const Lerp& wb) {
  int y1 = std::min(wy.j + 1, g.n0 - 1), a1 = std::min(wa.j + 1, g.n1 - 1),
      b1 = std::min(wb.j + 1, g.n2 - 1);
  double out = 0.0;
  const double wyv[2] = {1.0 - wy.t, wy.t}, wav[2] = {1.0 - wa.t, wa.t},
               wbv[2] = {1.0 - wb.t, wb.t};
  const int yi[2] = {wy.j, y1}, ai[2] = {wa.j, a1}, bi[2] = {wb.j, b1};
  for (int u = 0; u < 2; ++u)
    for (int v = 0; v < 2; ++v)
      for (int w = 0; w < 2; ++w) out += wyv[u] * wav[v] * wbv[w] * g(yi[u], ai[v], bi[w]);
  return out;
}

struct Choice {
  double b_next = 0.0, a_next = 0.0, q = k_nan, c = 0.0;
};

// Markov-chain walk over the solved grids; covers both the indicator rule
// (dss) and smoothed default probabilities with debt drawn from the choice
// density (taste).
struct GridBehavior {
  const Equilibrium& eq;
  const ModelParams& p;
  std::vector<double> cum;  // row-wise cumulative transition
  int iy0 = 0;
  bool smooth = false;

  struct St {
    int iy = 0, ib = 0;
  };

  GridBehavior(const Equilibrium& e, const ModelParams& pp) : eq(e), p(pp) {
    if (eq.income.transition.empty())
      throw std::invalid_argument("simulate_panel: grid equilibrium lacks a transition matrix");
    int ny = eq.n_y();
    cum.resize(static_cast<std::size_t>(ny) * ny);
    for (int i = 0; i < ny; ++i) {
      double acc = 0.0;
      for (int j = 0; j < ny; ++j) {
        acc += eq.income.prob(i, j);
        cum[static_cast<std::size_t>(i) * ny + j] = acc;
      }
      cum[static_cast<std::size_t>(i) * ny + ny - 1] = 1.0;
    }
    double ybar = pp.ar1.unconditional_mean_income();
    double best = std::numeric_limits<double>::max();
    for (int i = 0; i < ny; ++i) {
      double dist = std::abs(eq.income.nodes[i] - ybar);
      if (dist < best) {
        best = dist;
        iy0 = i;
      }
    }
    smooth =
        eq.kind == SolverKind::taste && !eq.default_prob.v.empty() && !eq.density.empty();
  }

  St initial() const { return {iy0, 0}; }

  void step_income(St& s, double u) const {
    int ny = eq.n_y();
    const double* row = cum.data() + static_cast<std::size_t>(s.iy) * ny;
    int j = static_cast<int>(std::upper_bound(row, row + ny, u) - row);
    s.iy = std::min(j, ny - 1);
  }

  double income(const St& s) const { return eq.income.nodes[s.iy]; }

  bool wants_default(const St& s, double u_def) const {
    if (smooth) return u_def < eq.default_prob(s.iy, s.ib);
    return eq.default_rule(s.iy, s.ib) != 0;
  }

  double default_consumption(const St& s) const {
    double y = income(s);
    return y - default_cost(y, p.d0, p.d1);
  }

  void clear_assets(St& s) const { s.ib = 0; }

  Choice choose(St& s, double u_debt) const {
    int jb;
    if (smooth) {
      std::size_t r = eq.density.row(s.iy, s.ib);
      std::size_t off = eq.density.row_offset[r];
      int len = eq.density.window_len[r];
      int k = len - 1;
      double acc = 0.0;
      for (int m = 0; m < len; ++m) {
        acc += eq.density.probs[off + m];
        if (u_debt < acc) {
          k = m;
          break;
        }
      }
      jb = eq.density.window_start[r] + k;
    } else {
      jb = eq.debt_policy_idx(s.iy, s.ib);
    }
    double y = income(s);
    double q = eq.price(s.iy, jb);
    double c = consumption_repay({eq.b_grid[s.ib], y}, eq.b_grid[jb], q, p);
    s.ib = jb;
    return {eq.b_grid[jb], 0.0, q, c};
  }
};

// Continuous AR(1) income with policies and prices read off the fitted
// surfaces. Default follows the interpolated value comparison.
struct InterpBehavior {
  OneAssetApprox approx;
  const ModelParams& p;
  double ly0;

  struct St {
    double ly = 0.0, b = 0.0;
  };

  InterpBehavior(const Equilibrium& eq, const ModelParams& pp)
      : approx(OneAssetApprox::from_equilibrium(eq, gauss_legendre(8))),
        p(pp),
        ly0(std::log(pp.ar1.unconditional_mean_income())) {}

  St initial() const { return {ly0, 0.0}; }

  void step_income(St& s, double u) const {
    const Ar1Params& a = p.ar1;
    s.ly = (1.0 - a.rho) * a.mu + a.rho * s.ly + a.sigma_eps * inverse_normal_cdf(u);
  }

  double income(const St& s) const { return std::exp(s.ly); }

  bool wants_default(const St& s, double) const {
    double y = income(s);
    return approx.value_default(y) > approx.value_repay(s.b, y);
  }

  double default_consumption(const St& s) const {
    double y = income(s);
    return y - default_cost(y, p.d0, p.d1);
  }

  void clear_assets(St& s) const { s.b = 0.0; }

  Choice choose(St& s, double) const {
    double y = income(s);
    double bn = approx.policy_at(s.b, y);
    double q = approx.price_at(bn, y);
    double c = consumption_repay({s.b, y}, bn, q, p);
    s.b = bn;
    return {bn, 0.0, q, c};
  }
};

// Two-asset walk: continuous income, multilinear reads of the policy pair
// and the price surface. The non-defaultable balance is paid even at the
// default date and stays at zero through exclusion.
struct PortfolioBehavior {
  const PortfolioEquilibrium& eq;
  const ModelParams& p;
  double ly0, q_cap;

  struct St {
    double ly = 0.0, b = 0.0, a = 0.0;
  };

  PortfolioBehavior(const PortfolioEquilibrium& e, const ModelParams& pp)
      : eq(e),
        p(pp),
        ly0(std::log(pp.ar1.unconditional_mean_income())),
        q_cap(risk_free_price(pp)) {}

  St initial() const { return {ly0, 0.0, 0.0}; }

  void step_income(St& s, double u) const {
    const Ar1Params& a = p.ar1;
    s.ly = (1.0 - a.rho) * a.mu + a.rho * s.ly + a.sigma_eps * inverse_normal_cdf(u);
  }

  double income(const St& s) const { return std::exp(s.ly); }

  bool wants_default(const St& s, double) const {
    double y = income(s);
    Lerp wy = locate01(eq.income.nodes, y);
    Lerp wa = locate01(eq.a_grid, s.a);
    Lerp wb = locate01(eq.b_grid, s.b);
    return lerp2(eq.v_default, wy, wa) > lerp3(eq.v_repay, wy, wa, wb);
  }

  double default_consumption(const St& s) const {
    double y = income(s);
    return y - s.a - default_cost(y, p.d0, p.d1);
  }

  void clear_assets(St& s) const {
    s.b = 0.0;
    s.a = 0.0;
  }

  Choice choose(St& s, double) const {
    double y = income(s);
    Lerp wy = locate01(eq.income.nodes, y);
    Lerp wa = locate01(eq.a_grid, s.a);
    Lerp wb = locate01(eq.b_grid, s.b);
    double bn = std::clamp(lerp3(eq.policy_b, wy, wa, wb), eq.b_grid.front(), eq.b_grid.back());
    double an = std::clamp(lerp3(eq.policy_a, wy, wa, wb), eq.a_grid.front(), eq.a_grid.back());
    Lerp wan = locate01(eq.a_grid, an);
    Lerp wbn = locate01(eq.b_grid, bn);
    double q = std::clamp(lerp3(eq.price, wy, wan, wbn), 0.0, q_cap);
    double c = portfolio_consumption({s.b, s.a, y}, bn, an, q, p);
    s.b = bn;
    s.a = an;
    return {bn, an, q, c};
  }
};

template <class B>
Panel simulate_core(const B& behavior, const ModelParams& p, const SimConfig& cfg) {
  cfg.validate();
  Panel pn;
  pn.n_samples = cfg.n_samples;
  pn.len = cfg.t_total - cfg.t_burn;
  pn.t_burn = cfg.t_burn;
  pn.y = Grid2<double>(pn.n_samples, pn.len);
  pn.bnext = Grid2<double>(pn.n_samples, pn.len);
  pn.anext = Grid2<double>(pn.n_samples, pn.len);
  pn.q = Grid2<double>(pn.n_samples, pn.len);
  pn.spread = Grid2<double>(pn.n_samples, pn.len);
  pn.c = Grid2<double>(pn.n_samples, pn.len);
  pn.tb = Grid2<double>(pn.n_samples, pn.len);
  pn.d = Grid2<std::uint8_t>(pn.n_samples, pn.len);
  pn.defevent = Grid2<std::uint8_t>(pn.n_samples, pn.len);
  pn.start_ok = Grid2<std::uint8_t>(pn.n_samples, pn.len);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < cfg.n_samples; ++n) {
    Rng rng(stream_seed(cfg.seed, n));
    typename B::St st = behavior.initial();
    bool excluded = false, never_defaulted = true;
    int since_reentry = 0;
    for (int t = 0; t < cfg.t_total; ++t) {
      // Fixed draw order keeps the random numbers common across methods.
      double u_inc = rng.uniform();
      double u_re = rng.uniform();
      double u_def = rng.uniform();
      double u_debt = rng.uniform();
      if (t > 0) behavior.step_income(st, u_inc);
      if (excluded) {
        if (u_re < p.psi) {
          excluded = false;
          behavior.clear_assets(st);
          since_reentry = 0;
        }
      } else if (!never_defaulted) {
        ++since_reentry;
      }
      double y = behavior.income(st);
      double c, q = k_nan, sp = k_nan, bn = 0.0, an = 0.0;
      std::uint8_t dd = 0, de = 0, ok = 0;
      if (excluded) {
        dd = 1;
        c = behavior.default_consumption(st);
      } else if (behavior.wants_default(st, u_def)) {
        dd = 1;
        de = 1;
        c = behavior.default_consumption(st);  // carries assets due at the default date
        behavior.clear_assets(st);
        excluded = true;
        never_defaulted = false;
      } else {
        Choice ch = behavior.choose(st, u_debt);
        c = ch.c;
        q = ch.q;
        bn = ch.b_next;
        an = ch.a_next;
        sp = spread_or_nan(q, p);
        ok = (never_defaulted || since_reentry >= cfg.post_reentry_gap) ? 1 : 0;
      }
      if (t >= cfg.t_burn) {
        int col = t - cfg.t_burn;
        pn.y(n, col) = y;
        pn.bnext(n, col) = bn;
        pn.anext(n, col) = an;
        pn.q(n, col) = q;
        pn.spread(n, col) = sp;
        pn.c(n, col) = c;
        pn.tb(n, col) = y - c;
        pn.d(n, col) = dd;
        pn.defevent(n, col) = de;
        pn.start_ok(n, col) = ok;
      }
    }
  }
  return pn;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  std::size_t n = v.size();
  if (n < 2) return k_nan;
  double m = mean_of(v), acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(n - 1));
}

double corr_of(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t n = a.size();
  double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  double denom = std::sqrt(saa * sbb);
  return denom > 0.0 ? sab / denom : k_nan;
}

void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
  mean = mean_of(v);
  se = sd_of(v) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

Panel simulate_panel(const Equilibrium& eq, const ModelParams& p, const SimConfig& cfg) {
  if (eq.kind == SolverKind::interp) {
    InterpBehavior b(eq, p);
    return simulate_core(b, p, cfg);
  }
  GridBehavior b(eq, p);
  return simulate_core(b, p, cfg);
}

Panel simulate_panel(const PortfolioEquilibrium& eq, const ModelParams& p, const SimConfig& cfg) {
  PortfolioBehavior b(eq, p);
  return simulate_core(b, p, cfg);
}

SampleSet select_samples(const Panel& panel, const SimConfig& cfg) {
  int L = cfg.sample_len;
  if (panel.len < L) throw std::invalid_argument("select_samples: panel shorter than the window");
  SampleSet out;
  out.panel_periods = static_cast<long>(panel.n_samples) * panel.len;
  std::vector<int> dsum(static_cast<std::size_t>(panel.len) + 1);
  for (int n = 0; n < panel.n_samples; ++n) {
    dsum[0] = 0;
    for (int t = 0; t < panel.len; ++t) {
      dsum[t + 1] = dsum[t] + (panel.d(n, t) ? 1 : 0);
      out.panel_defaults += panel.defevent(n, t) ? 1 : 0;
    }
    int pick = -1;
    for (int s = 0; s + L <= panel.len; ++s) {
      if (!panel.start_ok(n, s)) continue;
      if (dsum[s + L] - dsum[s] == 0) {
        pick = s;
        break;
      }
    }
    if (pick < 0) {
      ++out.skipped;
      continue;
    }
    SampleWindow w;
    w.y.resize(L);
    w.c.resize(L);
    w.tb.resize(L);
    w.spread.resize(L);
    w.q.resize(L);
    w.bnext.resize(L);
    w.anext.resize(L);
    for (int t = 0; t < L; ++t) {
      w.y[t] = panel.y(n, pick + t);
      w.c[t] = panel.c(n, pick + t);
      w.tb[t] = panel.tb(n, pick + t);
      w.spread[t] = panel.spread(n, pick + t);
      w.q[t] = panel.q(n, pick + t);
      w.bnext[t] = panel.bnext(n, pick + t);
      w.anext[t] = panel.anext(n, pick + t);
    }
    out.windows.push_back(std::move(w));
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> hp_filter(const std::vector<double>& series,
                                                              double lambda) {
  int n = static_cast<int>(series.size());
  if (n < 4) throw std::invalid_argument("hp_filter: need at least 4 observations");
  if (lambda < 0.0) throw std::invalid_argument("hp_filter: negative smoothing weight");

  // Bands of I + lambda D'D, D the (n-2) x n second-difference operator.
  std::vector<double> d(n), e(n - 1), f(n - 2, lambda);
  for (int i = 0; i < n; ++i) {
    double w = 6.0;
    if (i == 0 || i == n - 1)
      w = 1.0;
    else if (i == 1 || i == n - 2)
      w = 5.0;
    d[i] = 1.0 + lambda * w;
  }
  for (int i = 0; i < n - 1; ++i) e[i] = lambda * ((i == 0 || i == n - 2) ? -2.0 : -4.0);

  // LDL' with bandwidth two, then the two triangular sweeps.
  std::vector<double> dd(n), l1(n, 0.0), l2(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (i >= 2) l2[i] = f[i - 2] / dd[i - 2];
    if (i >= 1) {
      double num = e[i - 1];
      if (i >= 2) num -= l2[i] * l1[i - 1] * dd[i - 2];
      l1[i] = num / dd[i - 1];
    }
    double val = d[i];
    if (i >= 1) val -= l1[i] * l1[i] * dd[i - 1];
    if (i >= 2) val -= l2[i] * l2[i] * dd[i - 2];
    dd[i] = val;
  }
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    double v = series[i];
    if (i >= 1) v -= l1[i] * z[i - 1];
    if (i >= 2) v -= l2[i] * z[i - 2];
    z[i] = v;
  }
  for (int i = 0; i < n; ++i) z[i] /= dd[i];
  std::vector<double> trend(n);
  for (int i = n - 1; i >= 0; --i) {
    double v = z[i];
    if (i + 1 < n) v -= l1[i + 1] * trend[i + 1];
    if (i + 2 < n) v -= l2[i + 2] * trend[i + 2];
    trend[i] = v;
  }
  std::vector<double> cycle(n);
  for (int i = 0; i < n; ++i) cycle[i] = series[i] - trend[i];
  return {std::move(trend), std::move(cycle)};
}

MomentTable compute_moments(const SampleSet& samples, const ModelParams& p,
                            ReportConvention convention, double hp_lambda) {
  if (samples.windows.empty()) throw std::invalid_argument("compute_moments: no sample windows");
  const bool div4 = convention == ReportConvention::hm;
  const std::size_t W = samples.windows.size();

  std::vector<double> v_debt, v_nnd, v_ms, v_ss, v_scy, v_sty, v_ccy, v_cty, v_csy, v_dur;
  for (auto* vp : {&v_debt, &v_nnd, &v_ms, &v_ss, &v_scy, &v_sty, &v_ccy, &v_cty, &v_csy, &v_dur})
    vp->reserve(W);

  for (const SampleWindow& w : samples.windows) {
    const int T = static_cast<int>(w.y.size());
    double acc_debt = 0.0, acc_nnd = 0.0, acc_sp = 0.0, acc_sp2 = 0.0, acc_dur = 0.0;
    std::vector<double> lc(T), ly(T), tby(T), spd(T);
    for (int t = 0; t < T; ++t) {
      acc_debt += reported_debt_to_income(w.bnext[t], w.y[t], p, div4);
      acc_nnd += 100.0 * (w.anext[t] / (1.0 + p.r)) / w.y[t];
      double s = 100.0 * w.spread[t];
      spd[t] = s;
      acc_sp += s;
      acc_sp2 += s * s;
      acc_dur += w.q[t] > 1e-12 ? yield_spread_duration(w.q[t], p).duration : k_nan;
      lc[t] = std::log(std::max(w.c[t], k_consumption_floor));
      ly[t] = std::log(w.y[t]);
      tby[t] = w.tb[t] / w.y[t];
    }
    double msp = acc_sp / T;
    double var_sp = (acc_sp2 - T * msp * msp) / (T - 1);
    std::vector<double> cy = hp_filter(ly, hp_lambda).second;
    std::vector<double> cc = hp_filter(lc, hp_lambda).second;
    std::vector<double> ct = hp_filter(tby, hp_lambda).second;
    std::vector<double> cs = hp_filter(spd, hp_lambda).second;
    double sdy = sd_of(cy);
    v_debt.push_back(acc_debt / T);
    v_nnd.push_back(acc_nnd / T);
    v_ms.push_back(msp);
    v_ss.push_back(std::sqrt(std::max(0.0, var_sp)));
    v_scy.push_back(sdy > 0.0 ? sd_of(cc) / sdy : k_nan);
    v_sty.push_back(sdy > 0.0 ? sd_of(ct) / sdy : k_nan);
    v_ccy.push_back(corr_of(cc, cy));
    v_cty.push_back(corr_of(ct, cy));
    v_csy.push_back(corr_of(cs, cy));
    v_dur.push_back(acc_dur / T);
  }

  MomentTable m;
  mean_and_se(v_debt, m.debt_to_income, m.se.debt_to_income);
  mean_and_se(v_nnd, m.nondef_debt_to_income, m.se.nondef_debt_to_income);
  mean_and_se(v_ms, m.mean_spread, m.se.mean_spread);
  mean_and_se(v_ss, m.sd_spread, m.se.sd_spread);
  mean_and_se(v_scy, m.sigma_c_over_sigma_y, m.se.sigma_c_over_sigma_y);
  mean_and_se(v_sty, m.sigma_tby_over_sigma_y, m.se.sigma_tby_over_sigma_y);
  mean_and_se(v_ccy, m.corr_c_y, m.se.corr_c_y);
  mean_and_se(v_cty, m.corr_tby_y, m.se.corr_tby_y);
  mean_and_se(v_csy, m.corr_spread_y, m.se.corr_spread_y);
  m.duration_quarters = mean_of(v_dur);

  if (samples.panel_periods > 0) {
    double phat = static_cast<double>(samples.panel_defaults) /
                  static_cast<double>(samples.panel_periods);
    m.default_rate = 400.0 * phat;
    m.se.default_rate =
        400.0 * std::sqrt(phat * (1.0 - phat) / static_cast<double>(samples.panel_periods));
  } else {
    m.default_rate = k_nan;
    m.se.default_rate = k_nan;
  }
  m.n_windows = static_cast<long>(W);
  m.n_skipped = samples.skipped;
  return m;
}

}  // namespace sovdebt
