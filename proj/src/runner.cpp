#include "sovdebt/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "sovdebt/checkpoint.hpp"
#include "sovdebt/solver_dss.hpp"
#include "sovdebt/solver_interp.hpp"
#include "sovdebt/solver_taste.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sovdebt {

namespace {

std::string g17(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

// ---------------------------------------------------------------------------
// SHA-1, for git-blob content hashes in the manifest.

struct Sha1 {
  std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
  std::uint64_t total = 0;
  unsigned char buf[64];
  std::size_t fill = 0;

  static std::uint32_t rol(std::uint32_t x, int s) { return (x << s) | (x >> (32 - s)); }

  void block(const unsigned char* p) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      std::uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }

  void update(const unsigned char* p, std::size_t n) {
    total += n;
    while (n > 0) {
      std::size_t take = std::min(n, std::size_t{64} - fill);
      std::memcpy(buf + fill, p, take);
      fill += take;
      p += take;
      n -= take;
      if (fill == 64) {
        block(buf);
        fill = 0;
      }
    }
  }

  std::string hex() {
    std::uint64_t bits = total * 8;
    unsigned char pad = 0x80;
    update(&pad, 1);
    unsigned char zero = 0;
    while (fill != 56) update(&zero, 1);
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len, 8);
    char out[41];
    for (int i = 0; i < 5; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
    return std::string(out, 40);
  }
};

// ---------------------------------------------------------------------------
// Name tables and small parsers.

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

long long to_ll(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an integer, got '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

SolverKind target_kind(const RunConfig& cfg, RunMethod m) {
  if (cfg.portfolio) return SolverKind::portfolio;
  if (m == RunMethod::dss) return SolverKind::dss;
  if (m == RunMethod::taste) return SolverKind::taste;
  return SolverKind::interp;
}

Scheme target_scheme(RunMethod m) {
  if (m == RunMethod::spline) return Scheme::spline;
  if (m == RunMethod::auto_scheme) return Scheme::auto_switch;
  return Scheme::linear;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  return a.gamma == b.gamma && a.r == b.r && a.beta == b.beta && a.psi == b.psi &&
         a.delta == b.delta && a.z == b.z && a.kappa == b.kappa && a.d0 == b.d0 &&
         a.d1 == b.d1 && a.formulation == b.formulation && a.ar1.rho == b.ar1.rho &&
         a.ar1.sigma_eps == b.ar1.sigma_eps && a.ar1.mu == b.ar1.mu;
}

bool same_nodes(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Local multilinear helpers for checkpoint re-interpolation (they tolerate
// single-node axes, unlike GridAxis).

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
  return {j, std::clamp((x - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0, 1.0)};
}

double lerp2(const Grid2<double>& g, const Lerp& w0, const Lerp& w1) {
  int a1 = std::min(w0.j + 1, g.n0 - 1), b1 = std::min(w1.j + 1, g.n1 - 1);
  double lo = (1.0 - w1.t) * g(w0.j, w1.j) + w1.t * g(w0.j, b1);
  double hi = (1.0 - w1.t) * g(a1, w1.j) + w1.t * g(a1, b1);
  return (1.0 - w0.t) * lo + w0.t * hi;
}

double lerp3(const Grid3<double>& g, const Lerp& w0, const Lerp& w1, const Lerp& w2) {
  int a1 = std::min(w0.j + 1, g.n0 - 1), b1 = std::min(w1.j + 1, g.n1 - 1),
      c1 = std::min(w2.j + 1, g.n2 - 1);
  const double u[2] = {1.0 - w0.t, w0.t}, v[2] = {1.0 - w1.t, w1.t}, w[2] = {1.0 - w2.t, w2.t};
  const int ii[2] = {w0.j, a1}, jj[2] = {w1.j, b1}, kk[2] = {w2.j, c1};
  double out = 0.0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) out += u[x] * v[y] * w[z] * g(ii[x], jj[y], kk[z]);
  return out;
}

Grid2<double> regrid2(const std::vector<double>& old_y, const std::vector<double>& old_b,
                      const Grid2<double>& src, const std::vector<double>& new_y,
                      const std::vector<double>& new_b) {
  Grid2<double> out(static_cast<int>(new_y.size()), static_cast<int>(new_b.size()));
  for (int i = 0; i < out.n0; ++i) {
    Lerp wy = locate01(old_y, new_y[i]);
    for (int j = 0; j < out.n1; ++j) out(i, j) = lerp2(src, wy, locate01(old_b, new_b[j]));
  }
  return out;
}

Grid3<double> regrid3(const std::vector<double>& old_y, const std::vector<double>& old_a,
                      const std::vector<double>& old_b, const Grid3<double>& src,
                      const std::vector<double>& new_y, const std::vector<double>& new_a,
                      const std::vector<double>& new_b) {
  Grid3<double> out(static_cast<int>(new_y.size()), static_cast<int>(new_a.size()),
                    static_cast<int>(new_b.size()));
  for (int i = 0; i < out.n0; ++i) {
    Lerp wy = locate01(old_y, new_y[i]);
    for (int j = 0; j < out.n1; ++j) {
      Lerp wa = locate01(old_a, new_a[j]);
      for (int k = 0; k < out.n2; ++k)
        out(i, j, k) = lerp3(src, wy, wa, locate01(old_b, new_b[k]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resume plumbing.

struct ResumeState {
  bool active = false;
  bool reinterpolated = false;
  bool params_differ = false;
  bool scheme_escalated = false;
  bool confirmation_only = false;
  std::shared_ptr<OneAssetInit> one;
  std::shared_ptr<PortfolioInit> port;
};

ResumeState prepare_resume(const RunConfig& cfg, RunMethod m, const OneAssetGrids* g,
                           const PortfolioGrids* pg) {
  ResumeState rs;
  if (cfg.resume_path.empty()) return rs;
  rs.active = true;
  CheckpointData d = load_checkpoint(cfg.resume_path);
  SolverKind want = target_kind(cfg, m);
  bool want_port = want == SolverKind::portfolio;
  bool have_port = d.kind == SolverKind::portfolio;
  if (want_port != have_port)
    throw ConfigError("resume: checkpoint " + cfg.resume_path +
                      (have_port ? " holds a portfolio solve" : " holds a one-asset solve") +
                      ", which does not match the requested run");
  rs.params_differ = !params_equal(d.params, cfg.params);

  if (want_port) {
    auto init = std::make_shared<PortfolioInit>();
    if (same_nodes(d.b_grid, pg->b_grid) && same_nodes(d.a_grid, pg->a_grid) &&
        same_nodes(d.income.nodes, pg->income.nodes)) {
      *init = d.portfolio;
    } else {
      rs.reinterpolated = true;
      init->v_repay = regrid3(d.income.nodes, d.a_grid, d.b_grid, d.portfolio.v_repay,
                              pg->income.nodes, pg->a_grid, pg->b_grid);
      init->v_default =
          regrid2(d.income.nodes, d.a_grid, d.portfolio.v_default, pg->income.nodes, pg->a_grid);
      init->price = regrid3(d.income.nodes, d.a_grid, d.b_grid, d.portfolio.price,
                            pg->income.nodes, pg->a_grid, pg->b_grid);
      if (!d.portfolio.policy_b.v.empty())
        init->policy_b = regrid3(d.income.nodes, d.a_grid, d.b_grid, d.portfolio.policy_b,
                                 pg->income.nodes, pg->a_grid, pg->b_grid);
      if (!d.portfolio.policy_a.v.empty())
        init->policy_a = regrid3(d.income.nodes, d.a_grid, d.b_grid, d.portfolio.policy_a,
                                 pg->income.nodes, pg->a_grid, pg->b_grid);
    }
    rs.port = std::move(init);
    rs.confirmation_only = d.converged && !rs.reinterpolated && !rs.params_differ &&
                           d.scheme == target_scheme(m) && d.method == cfg.opt;
  } else {
    auto init = std::make_shared<OneAssetInit>();
    if (same_nodes(d.b_grid, g->b_grid) && same_nodes(d.income.nodes, g->income.nodes)) {
      *init = d.one_asset;
    } else {
      rs.reinterpolated = true;
      init->v_repay = regrid2(d.income.nodes, d.b_grid, d.one_asset.v_repay, g->income.nodes,
                              g->b_grid);
      init->v_default.resize(g->income.nodes.size());
      for (std::size_t i = 0; i < g->income.nodes.size(); ++i) {
        Lerp wy = locate01(d.income.nodes, g->income.nodes[i]);
        int y1 = std::min<int>(wy.j + 1, static_cast<int>(d.one_asset.v_default.size()) - 1);
        init->v_default[i] =
            (1.0 - wy.t) * d.one_asset.v_default[wy.j] + wy.t * d.one_asset.v_default[y1];
      }
      init->price =
          regrid2(d.income.nodes, d.b_grid, d.one_asset.price, g->income.nodes, g->b_grid);
      if (!d.one_asset.debt_policy.v.empty())
        init->debt_policy = regrid2(d.income.nodes, d.b_grid, d.one_asset.debt_policy,
                                    g->income.nodes, g->b_grid);
    }
    rs.one = std::move(init);
    SolverKind stored = d.kind, wanted = target_kind(cfg, m);
    bool scheme_ok = wanted != SolverKind::interp || d.scheme == target_scheme(m);
    rs.scheme_escalated = wanted == SolverKind::interp && stored == SolverKind::interp &&
                          d.scheme == Scheme::linear && target_scheme(m) == Scheme::spline;
    rs.confirmation_only = d.converged && !rs.reinterpolated && !rs.params_differ &&
                           stored == wanted && scheme_ok &&
                           d.taste.sigma_default == cfg.taste.sigma_default &&
                           d.taste.sigma_debt == cfg.taste.sigma_debt;
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Per-method outcome.

struct Outcome {
  std::string name;
  bool is_portfolio = false;
  Equilibrium eq;
  PortfolioEquilibrium peq;
  MomentTable moments;
  ConvergenceStatus status;
  long refine_fallbacks = 0;
  double solve_ms = 0.0, sim_ms = 0.0, mom_ms = 0.0;
  std::string checkpoint_rel;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

Outcome run_one_method(const RunConfig& cfg, RunMethod m, PortfolioMethod opt,
                       const std::string& name, ResumeState* resume_out) {
  Outcome out;
  out.name = name;
  out.is_portfolio = cfg.portfolio;
  auto t0 = std::chrono::steady_clock::now();

  if (cfg.portfolio) {
    double a_cap = cfg.a_cap_frac * cfg.params.ar1.unconditional_mean_income();
    bool taste_variant = m == RunMethod::taste;
    PortfolioGrids pg = make_portfolio_grids(cfg.params.ar1, cfg.n_b, cfg.b_max, cfg.n_a, a_cap,
                                             cfg.n_y, cfg.income_width, taste_variant);
    ResumeState rs = prepare_resume(cfg, m, nullptr, &pg);
    if (resume_out) *resume_out = rs;
    int max_iter = rs.confirmation_only ? 1 : cfg.max_iter;
    if (taste_variant) {
      out.peq = solve_portfolio_taste(cfg.params, pg, cfg.taste, cfg.tol, max_iter);
    } else {
      PortfolioSolveOptions po;
      po.method = opt;
      po.scheme = target_scheme(m);
      po.tol = cfg.tol;
      po.max_iter = max_iter;
      po.switch_after = cfg.switch_after;
      po.n_cand_b = cfg.n_candidates;
      po.n_cand_a = cfg.n_cand_a;
      po.local_window = cfg.local_window;
      po.init = rs.port;
      out.peq = solve_portfolio(cfg.params, pg, gauss_legendre(cfg.quad_n, cfg.quad_width), po);
    }
    out.status = out.peq.status;
    out.refine_fallbacks = out.peq.refine_fallbacks;
    out.solve_ms = ms_since(t0);

    auto t1 = std::chrono::steady_clock::now();
    Panel panel = simulate_panel(out.peq, cfg.params, cfg.sim);
    SampleSet samples = select_samples(panel, cfg.sim);
    out.sim_ms = ms_since(t1);
    auto t2 = std::chrono::steady_clock::now();
    out.moments = compute_moments(samples, cfg.params, cfg.convention, cfg.sim.hp_lambda);
    out.mom_ms = ms_since(t2);
    return out;
  }

  bool needs_markov = m == RunMethod::dss || m == RunMethod::taste;
  OneAssetGrids g = make_one_asset_grids(cfg.params.ar1, cfg.n_b, cfg.b_max, cfg.n_y,
                                         cfg.income_width, needs_markov);
  ResumeState rs = prepare_resume(cfg, m, &g, nullptr);
  if (resume_out) *resume_out = rs;
  int max_iter = rs.confirmation_only ? 1 : cfg.max_iter;
  const OneAssetInit* init = rs.one ? rs.one.get() : nullptr;

  switch (m) {
    case RunMethod::dss:
      out.eq = solve_dss(cfg.params, g, cfg.tol, max_iter, init);
      break;
    case RunMethod::taste:
      out.eq = solve_taste(cfg.params, cfg.taste, g, cfg.tol, max_iter, init);
      break;
    default: {
      InterpSolveOptions io;
      io.scheme = target_scheme(m);
      io.tol = cfg.tol;
      io.max_iter = max_iter;
      io.switch_after = cfg.switch_after;
      io.n_candidates = cfg.n_candidates;
      io.damping = cfg.damping;
      io.init = rs.one;
      out.eq = solve_one_asset(cfg.params, g, gauss_legendre(cfg.quad_n, cfg.quad_width), io);
      break;
    }
  }
  out.status = out.eq.status;
  out.solve_ms = ms_since(t0);

  auto t1 = std::chrono::steady_clock::now();
  Panel panel = simulate_panel(out.eq, cfg.params, cfg.sim);
  SampleSet samples = select_samples(panel, cfg.sim);
  out.sim_ms = ms_since(t1);
  auto t2 = std::chrono::steady_clock::now();
  out.moments = compute_moments(samples, cfg.params, cfg.convention, cfg.sim.hp_lambda);
  out.mom_ms = ms_since(t2);
  return out;
}

// ---------------------------------------------------------------------------
// CSV assembly.

std::string moments_csv(const std::vector<Outcome>& runs) {
  std::string s = "statistic";
  for (const Outcome& r : runs) s += "," + r.name;
  s += "\n";
  auto row = [&](const char* label, auto get) {
    s += label;
    for (const Outcome& r : runs) {
      s += ",";
      s += get(r);
    }
    s += "\n";
  };
  auto d = [](double x) { return g17(x); };
  row("debt_to_income", [&](const Outcome& r) { return d(r.moments.debt_to_income); });
  row("nondef_debt_to_income",
      [&](const Outcome& r) { return d(r.moments.nondef_debt_to_income); });
  row("mean_spread", [&](const Outcome& r) { return d(r.moments.mean_spread); });
  row("sd_spread", [&](const Outcome& r) { return d(r.moments.sd_spread); });
  row("default_rate", [&](const Outcome& r) { return d(r.moments.default_rate); });
  row("sigma_c_over_sigma_y",
      [&](const Outcome& r) { return d(r.moments.sigma_c_over_sigma_y); });
  row("sigma_tby_over_sigma_y",
      [&](const Outcome& r) { return d(r.moments.sigma_tby_over_sigma_y); });
  row("corr_c_y", [&](const Outcome& r) { return d(r.moments.corr_c_y); });
  row("corr_tby_y", [&](const Outcome& r) { return d(r.moments.corr_tby_y); });
  row("corr_spread_y", [&](const Outcome& r) { return d(r.moments.corr_spread_y); });
  row("duration_quarters", [&](const Outcome& r) { return d(r.moments.duration_quarters); });
  row("n_windows", [&](const Outcome& r) { return std::to_string(r.moments.n_windows); });
  row("n_skipped", [&](const Outcome& r) { return std::to_string(r.moments.n_skipped); });
  row("se_debt_to_income", [&](const Outcome& r) { return d(r.moments.se.debt_to_income); });
  row("se_nondef_debt_to_income",
      [&](const Outcome& r) { return d(r.moments.se.nondef_debt_to_income); });
  row("se_mean_spread", [&](const Outcome& r) { return d(r.moments.se.mean_spread); });
  row("se_sd_spread", [&](const Outcome& r) { return d(r.moments.se.sd_spread); });
  row("se_default_rate", [&](const Outcome& r) { return d(r.moments.se.default_rate); });
  row("se_sigma_c_over_sigma_y",
      [&](const Outcome& r) { return d(r.moments.se.sigma_c_over_sigma_y); });
  row("se_sigma_tby_over_sigma_y",
      [&](const Outcome& r) { return d(r.moments.se.sigma_tby_over_sigma_y); });
  row("se_corr_c_y", [&](const Outcome& r) { return d(r.moments.se.corr_c_y); });
  row("se_corr_tby_y", [&](const Outcome& r) { return d(r.moments.se.corr_tby_y); });
  row("se_corr_spread_y", [&](const Outcome& r) { return d(r.moments.se.corr_spread_y); });
  row("converged", [&](const Outcome& r) { return std::string(r.status.converged ? "1" : "0"); });
  row("iterations", [&](const Outcome& r) { return std::to_string(r.status.iterations); });
  row("final_sup_norm", [&](const Outcome& r) { return d(r.status.final_sup_norm); });
  row("oscillation_amplitude",
      [&](const Outcome& r) { return d(r.status.oscillation_amplitude()); });
  return s;
}

std::string one_asset_policy_csv(const Equilibrium& eq) {
  int ny = eq.n_y(), nb = eq.n_b();
  int iy[3] = {0, ny / 2, ny - 1};
  std::string s = "b,b_next_low,b_next_mid,b_next_high,default_low,default_mid,default_high\n";
  for (int ib = 0; ib < nb; ++ib) {
    s += g17(eq.b_grid[ib]);
    for (int k = 0; k < 3; ++k) s += "," + g17(eq.debt_policy(iy[k], ib));
    for (int k = 0; k < 3; ++k) s += "," + std::to_string(int(eq.default_rule(iy[k], ib)));
    s += "\n";
  }
  return s;
}

std::string one_asset_price_csv(const Equilibrium& eq) {
  int ny = eq.n_y(), nb = eq.n_b();
  int iy[3] = {0, ny / 2, ny - 1};
  std::string s = "b_next,q_low,q_mid,q_high\n";
  for (int ib = 0; ib < nb; ++ib) {
    s += g17(eq.b_grid[ib]);
    for (int k = 0; k < 3; ++k) s += "," + g17(eq.price(iy[k], ib));
    s += "\n";
  }
  return s;
}

std::string one_asset_value_csv(const Equilibrium& eq) {
  int ny = eq.n_y(), nb = eq.n_b();
  int mid = ny / 2;
  std::string s = "b,v_repay_mid,v_default_mid,v_option_mid\n";
  for (int ib = 0; ib < nb; ++ib) {
    s += g17(eq.b_grid[ib]) + "," + g17(eq.v_repay(mid, ib)) + "," + g17(eq.v_default[mid]) +
         "," + g17(eq.v_option(mid, ib)) + "\n";
  }
  return s;
}

std::string taste_density_csv(const Equilibrium& eq) {
  int ny = eq.n_y(), nb = eq.n_b();
  int mid = ny / 2;
  std::string s = "ib,b,choice_index,b_choice,prob\n";
  for (int ib = 0; ib < nb; ++ib) {
    std::size_t r = eq.density.row(mid, ib);
    std::size_t off = eq.density.row_offset[r];
    int len = eq.density.window_len[r], start = eq.density.window_start[r];
    for (int k = 0; k < len; ++k) {
      s += std::to_string(ib) + "," + g17(eq.b_grid[ib]) + "," + std::to_string(start + k) +
           "," + g17(eq.b_grid[start + k]) + "," + g17(eq.density.probs[off + k]) + "\n";
    }
  }
  return s;
}

std::string portfolio_policy_csv(const PortfolioEquilibrium& eq) {
  int ny = eq.n_y(), na = eq.n_a(), nb = eq.n_b();
  int mid = ny / 2;
  std::string s = "ia,ib,a,b,b_next,a_next,v_repay,default\n";
  std::vector<int> slabs = {0};
  if (na > 1) slabs.push_back(na - 1);
  for (int ia : slabs) {
    for (int ib = 0; ib < nb; ++ib) {
      s += std::to_string(ia) + "," + std::to_string(ib) + "," + g17(eq.a_grid[ia]) + "," +
           g17(eq.b_grid[ib]) + "," + g17(eq.policy_b(mid, ia, ib)) + "," +
           g17(eq.policy_a(mid, ia, ib)) + "," + g17(eq.v_repay(mid, ia, ib)) + "," +
           std::to_string(int(eq.default_rule(mid, ia, ib))) + "\n";
    }
  }
  return s;
}

std::string portfolio_price_csv(const PortfolioEquilibrium& eq) {
  int ny = eq.n_y(), na = eq.n_a(), nb = eq.n_b();
  int mid = ny / 2;
  std::string s = "b_next,q_a_low,q_a_high\n";
  for (int ib = 0; ib < nb; ++ib) {
    s += g17(eq.b_grid[ib]) + "," + g17(eq.price(mid, 0, ib)) + "," +
         g17(eq.price(mid, na - 1, ib)) + "\n";
  }
  return s;
}

struct Writer {
  std::string dir;
  std::vector<std::pair<std::string, std::string>> hashes;  // rel path -> blob sha1
  std::vector<std::string> files;

  std::string put(const std::string& rel, const std::string& content) {
    std::string path = dir + "/" + rel;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    if (!f) throw std::runtime_error("short write to " + path);
    hashes.emplace_back(rel, git_blob_sha1(content));
    files.push_back(path);
    return path;
  }

  void note_binary(const std::string& rel, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    hashes.emplace_back(rel, git_blob_sha1(bytes));
    files.push_back(path);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Method names.

RunMethod parse_run_method(const std::string& name) {
  if (name == "dss") return RunMethod::dss;
  if (name == "taste") return RunMethod::taste;
  if (name == "linear") return RunMethod::linear;
  if (name == "spline") return RunMethod::spline;
  if (name == "auto") return RunMethod::auto_scheme;
  throw ConfigError("unknown method '" + name + "' (expected dss|taste|linear|spline|auto)");
}

std::string run_method_name(RunMethod m) {
  switch (m) {
    case RunMethod::dss: return "dss";
    case RunMethod::taste: return "taste";
    case RunMethod::linear: return "linear";
    case RunMethod::spline: return "spline";
    default: return "auto";
  }
}

PortfolioMethod parse_opt_method(const std::string& name) {
  if (name == "powell") return PortfolioMethod::powell;
  if (name == "bobyqa") return PortfolioMethod::bobyqa;
  if (name == "nelder-mead" || name == "nelder_mead") return PortfolioMethod::nelder_mead;
  if (name == "dfp") return PortfolioMethod::dfp;
  throw ConfigError("unknown optimizer '" + name + "' (expected powell|bobyqa|nelder-mead|dfp)");
}

std::string opt_method_name(PortfolioMethod m) {
  switch (m) {
    case PortfolioMethod::powell: return "powell";
    case PortfolioMethod::bobyqa: return "bobyqa";
    case PortfolioMethod::nelder_mead: return "nelder-mead";
    default: return "dfp";
  }
}

// ---------------------------------------------------------------------------
// Config validation, parsing, serialization.

void RunConfig::validate() const {
  try {
    params.validate();
    sim.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (n_b < 4 || n_y < 4) throw ConfigError("grids: n_b and n_y must be at least 4");
  if (portfolio && n_a < 1) throw ConfigError("grids: n_a must be positive");
  if (b_max <= 0.0) throw ConfigError("grids: b_max must be positive");
  if (a_cap_frac < 0.0) throw ConfigError("grids: a_cap_frac must be nonnegative");
  if (income_width <= 0.0) throw ConfigError("grids: income_width must be positive");
  if (quad_n < 1) throw ConfigError("grids: quad_n must be positive");
  if (quad_width <= 0.0) throw ConfigError("grids: quad_width must be positive");
  if (taste.sigma_default < 0.0 || taste.sigma_debt < 0.0)
    throw ConfigError("solver: taste scales must be nonnegative");
  if (tol <= 0.0) throw ConfigError("solver: tol must be positive");
  if (max_iter < 1) throw ConfigError("solver: max_iter must be positive");
  if (switch_after < 0) throw ConfigError("solver: switch_after must be nonnegative");
  if (n_candidates < 2) throw ConfigError("solver: n_candidates must be at least 2");
  if (n_cand_a < 1) throw ConfigError("solver: n_cand_a must be positive");
  if (local_window <= 0.0 || local_window > 1.0)
    throw ConfigError("solver: local_window must be in (0, 1]");
  if (damping <= 0.0 || damping > 1.0) throw ConfigError("solver: damping must be in (0, 1]");
  if (threads < 0) throw ConfigError("output: threads must be nonnegative");
  if (out_dir.empty()) throw ConfigError("output: out_dir must be set");
  if (portfolio && method == RunMethod::dss)
    throw ConfigError("the portfolio model has no discrete-grid dss variant");
  if (portfolio && method == RunMethod::auto_scheme)
    throw ConfigError("the portfolio solver does not support scheme auto");
  if (!resume_path.empty() && !compare.empty())
    throw ConfigError("resume cannot be combined with compare");
  for (const std::string& name : compare) {
    if (portfolio)
      parse_opt_method(name);
    else
      parse_run_method(name);
  }
}

namespace {

void apply_kv(RunConfig& cfg, const std::string& sec, const std::string& key,
              const std::string& value, const std::string& where) {
  auto is = [&](const char* s, const char* k) { return sec == s && key == k; };
  if (is("model", "gamma")) cfg.params.gamma = to_double(value, where);
  else if (is("model", "r")) cfg.params.r = to_double(value, where);
  else if (is("model", "beta")) cfg.params.beta = to_double(value, where);
  else if (is("model", "psi")) cfg.params.psi = to_double(value, where);
  else if (is("model", "delta")) cfg.params.delta = to_double(value, where);
  else if (is("model", "z")) cfg.params.z = to_double(value, where);
  else if (is("model", "kappa")) cfg.params.kappa = to_double(value, where);
  else if (is("model", "d0")) cfg.params.d0 = to_double(value, where);
  else if (is("model", "d1")) cfg.params.d1 = to_double(value, where);
  else if (is("model", "rho")) cfg.params.ar1.rho = to_double(value, where);
  else if (is("model", "sigma_eps")) cfg.params.ar1.sigma_eps = to_double(value, where);
  else if (is("model", "mu")) cfg.params.ar1.mu = to_double(value, where);
  else if (is("model", "formulation")) {
    if (value == "ce") cfg.params.formulation = Formulation::ce;
    else if (value == "hm") cfg.params.formulation = Formulation::hm;
    else throw ConfigError(where + ": formulation must be ce or hm");
  } else if (is("grids", "n_b")) cfg.n_b = static_cast<int>(to_ll(value, where));
  else if (is("grids", "n_y")) cfg.n_y = static_cast<int>(to_ll(value, where));
  else if (is("grids", "n_a")) cfg.n_a = static_cast<int>(to_ll(value, where));
  else if (is("grids", "b_max")) cfg.b_max = to_double(value, where);
  else if (is("grids", "a_cap_frac")) cfg.a_cap_frac = to_double(value, where);
  else if (is("grids", "income_width")) cfg.income_width = to_double(value, where);
  else if (is("grids", "quad_n")) cfg.quad_n = static_cast<int>(to_ll(value, where));
  else if (is("grids", "quad_width")) cfg.quad_width = to_double(value, where);
  else if (is("solver", "method")) cfg.method = parse_run_method(value);
  else if (is("solver", "portfolio")) cfg.portfolio = to_bool(value, where);
  else if (is("solver", "opt")) cfg.opt = parse_opt_method(value);
  else if (is("solver", "sigma_taste_default")) cfg.taste.sigma_default = to_double(value, where);
  else if (is("solver", "sigma_taste_debt")) cfg.taste.sigma_debt = to_double(value, where);
  else if (is("solver", "tol")) cfg.tol = to_double(value, where);
  else if (is("solver", "max_iter")) cfg.max_iter = static_cast<int>(to_ll(value, where));
  else if (is("solver", "switch_after")) cfg.switch_after = static_cast<int>(to_ll(value, where));
  else if (is("solver", "n_candidates")) cfg.n_candidates = static_cast<int>(to_ll(value, where));
  else if (is("solver", "n_cand_a")) cfg.n_cand_a = static_cast<int>(to_ll(value, where));
  else if (is("solver", "local_window")) cfg.local_window = to_double(value, where);
  else if (is("solver", "damping")) cfg.damping = to_double(value, where);
  else if (is("solver", "convention")) {
    if (value == "ce") cfg.convention = ReportConvention::ce;
    else if (value == "hm") cfg.convention = ReportConvention::hm;
    else throw ConfigError(where + ": convention must be ce or hm");
  } else if (is("sim", "n_samples")) cfg.sim.n_samples = static_cast<int>(to_ll(value, where));
  else if (is("sim", "t_total")) cfg.sim.t_total = static_cast<int>(to_ll(value, where));
  else if (is("sim", "t_burn")) cfg.sim.t_burn = static_cast<int>(to_ll(value, where));
  else if (is("sim", "sample_len")) cfg.sim.sample_len = static_cast<int>(to_ll(value, where));
  else if (is("sim", "post_reentry_gap"))
    cfg.sim.post_reentry_gap = static_cast<int>(to_ll(value, where));
  else if (is("sim", "seed")) cfg.sim.seed = static_cast<std::uint64_t>(to_ll(value, where));
  else if (is("sim", "hp_lambda")) cfg.sim.hp_lambda = to_double(value, where);
  else if (is("output", "out_dir")) cfg.out_dir = value;
  else if (is("output", "checkpoint")) cfg.checkpoint_path = value;
  else if (is("output", "resume")) cfg.resume_path = value;
  else if (is("output", "compare")) cfg.compare = split_list(value);
  else if (is("output", "threads")) cfg.threads = static_cast<int>(to_ll(value, where));
  else throw ConfigError(where + ": unknown key '" + key + "' in section [" + sec + "]");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string where = origin + ":" + std::to_string(line_no);
    std::size_t cmt = line.find_first_of("#;");
    if (cmt != std::string::npos) line.erase(cmt);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    apply_kv(cfg, section, key, value, where);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

std::string config_to_ini(const RunConfig& cfg) {
  std::string s;
  auto kv = [&](const char* k, const std::string& v) {
    s += k;
    s += " = ";
    s += v;
    s += "\n";
  };
  s += "[model]\n";
  kv("gamma", g17(cfg.params.gamma));
  kv("r", g17(cfg.params.r));
  kv("beta", g17(cfg.params.beta));
  kv("psi", g17(cfg.params.psi));
  kv("delta", g17(cfg.params.delta));
  kv("z", g17(cfg.params.z));
  kv("kappa", g17(cfg.params.kappa));
  kv("d0", g17(cfg.params.d0));
  kv("d1", g17(cfg.params.d1));
  kv("rho", g17(cfg.params.ar1.rho));
  kv("sigma_eps", g17(cfg.params.ar1.sigma_eps));
  kv("mu", g17(cfg.params.ar1.mu));
  kv("formulation", cfg.params.formulation == Formulation::ce ? "ce" : "hm");
  s += "\n[grids]\n";
  kv("n_b", std::to_string(cfg.n_b));
  kv("n_y", std::to_string(cfg.n_y));
  kv("n_a", std::to_string(cfg.n_a));
  kv("b_max", g17(cfg.b_max));
  kv("a_cap_frac", g17(cfg.a_cap_frac));
  kv("income_width", g17(cfg.income_width));
  kv("quad_n", std::to_string(cfg.quad_n));
  kv("quad_width", g17(cfg.quad_width));
  s += "\n[solver]\n";
  kv("method", run_method_name(cfg.method));
  kv("portfolio", cfg.portfolio ? "true" : "false");
  kv("opt", opt_method_name(cfg.opt));
  kv("sigma_taste_default", g17(cfg.taste.sigma_default));
  kv("sigma_taste_debt", g17(cfg.taste.sigma_debt));
  kv("tol", g17(cfg.tol));
  kv("max_iter", std::to_string(cfg.max_iter));
  kv("switch_after", std::to_string(cfg.switch_after));
  kv("n_candidates", std::to_string(cfg.n_candidates));
  kv("n_cand_a", std::to_string(cfg.n_cand_a));
  kv("local_window", g17(cfg.local_window));
  kv("damping", g17(cfg.damping));
  kv("convention", cfg.convention == ReportConvention::ce ? "ce" : "hm");
  s += "\n[sim]\n";
  kv("n_samples", std::to_string(cfg.sim.n_samples));
  kv("t_total", std::to_string(cfg.sim.t_total));
  kv("t_burn", std::to_string(cfg.sim.t_burn));
  kv("sample_len", std::to_string(cfg.sim.sample_len));
  kv("post_reentry_gap", std::to_string(cfg.sim.post_reentry_gap));
  kv("seed", std::to_string(cfg.sim.seed));
  kv("hp_lambda", g17(cfg.sim.hp_lambda));
  s += "\n[output]\n";
  kv("out_dir", cfg.out_dir);
  kv("checkpoint", cfg.checkpoint_path);
  kv("resume", cfg.resume_path);
  std::string cmp;
  for (std::size_t i = 0; i < cfg.compare.size(); ++i) {
    if (i) cmp += ",";
    cmp += cfg.compare[i];
  }
  kv("compare", cmp);
  kv("threads", std::to_string(cfg.threads));
  return s;
}

RunConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw ConfigError("cannot open manifest " + manifest_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("manifest " + manifest_path + " is not valid JSON: " + e.what());
  }
  if (!j.contains("config_ini") || !j["config_ini"].is_string())
    throw ConfigError("manifest " + manifest_path + " has no embedded config");
  return parse_config_text(j["config_ini"].get<std::string>(), manifest_path + ":config_ini");
}

std::string git_blob_sha1(const std::string& bytes) {
  Sha1 s;
  std::string hdr = "blob " + std::to_string(bytes.size());
  s.update(reinterpret_cast<const unsigned char*>(hdr.data()), hdr.size() + 1);
  s.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  return s.hex();
}

// ---------------------------------------------------------------------------
// Orchestration.

RunArtifacts run(const RunConfig& cfg) {
  RunArtifacts art;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    art.exit_code = k_exit_config;
    art.error = e.what();
    return art;
  }

  try {
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    std::filesystem::create_directories(cfg.out_dir);
    Writer w{cfg.out_dir, {}, {}};

    struct Planned {
      RunMethod m;
      PortfolioMethod opt;
      std::string name;
    };
    std::vector<Planned> plan;
    if (cfg.compare.empty()) {
      std::string name = cfg.portfolio
                             ? (cfg.method == RunMethod::taste
                                    ? std::string("portfolio_taste")
                                    : "portfolio_" + opt_method_name(cfg.opt))
                             : run_method_name(cfg.method);
      plan.push_back({cfg.method, cfg.opt, name});
    } else if (cfg.portfolio) {
      for (const std::string& n : cfg.compare)
        plan.push_back({cfg.method, parse_opt_method(n), "portfolio_" + n});
    } else {
      for (const std::string& n : cfg.compare) plan.push_back({parse_run_method(n), cfg.opt, n});
    }

    std::vector<Outcome> runs;
    ResumeState resume;
    for (const Planned& pl : plan) {
      ResumeState rs;
      Outcome out = run_one_method(cfg, pl.m, pl.opt, pl.name, &rs);
      if (rs.active) resume = rs;

      std::string ckpt_rel = "checkpoint_" + pl.name + ".bin";
      std::string ckpt_path = cfg.out_dir + "/" + ckpt_rel;
      if (!cfg.checkpoint_path.empty() && plan.size() == 1) {
        ckpt_path = cfg.checkpoint_path;
        ckpt_rel = cfg.checkpoint_path;
      }
      if (out.is_portfolio)
        save_checkpoint(ckpt_path, out.peq);
      else
        save_checkpoint(ckpt_path, out.eq);
      w.note_binary(ckpt_rel, ckpt_path);
      out.checkpoint_rel = ckpt_rel;

      if (out.is_portfolio) {
        w.put("policy_" + pl.name + ".csv", portfolio_policy_csv(out.peq));
        w.put("price_" + pl.name + ".csv", portfolio_price_csv(out.peq));
      } else {
        w.put("policy_" + pl.name + ".csv", one_asset_policy_csv(out.eq));
        w.put("price_" + pl.name + ".csv", one_asset_price_csv(out.eq));
        w.put("value_" + pl.name + ".csv", one_asset_value_csv(out.eq));
        if (!out.eq.density.empty())
          w.put("density_" + pl.name + ".csv", taste_density_csv(out.eq));
      }

      std::printf(
          "[%s] converged=%d iterations=%d sup=%.3e debt=%.2f spread=%.2f sd=%.2f def=%.2f "
          "windows=%ld skipped=%ld\n",
          pl.name.c_str(), out.status.converged ? 1 : 0, out.status.iterations,
          out.status.final_sup_norm, out.moments.debt_to_income, out.moments.mean_spread,
          out.moments.sd_spread, out.moments.default_rate, out.moments.n_windows,
          out.moments.n_skipped);
      std::fflush(stdout);
      runs.push_back(std::move(out));
    }

    art.moments_path = w.put("moments.csv", moments_csv(runs));

    bool all_converged = true;
    nlohmann::json jm = nlohmann::json::array();
    for (const Outcome& r : runs) {
      all_converged = all_converged && r.status.converged;
      nlohmann::json e;
      e["name"] = r.name;
      e["converged"] = r.status.converged;
      e["iterations"] = r.status.iterations;
      e["final_sup_norm"] = r.status.final_sup_norm;
      e["phase"] = r.status.phase;
      e["linear_iterations"] = r.status.linear_iterations;
      e["spline_iterations"] = r.status.spline_iterations;
      e["oscillation_amplitude"] = r.status.oscillation_amplitude();
      if (r.is_portfolio) e["refine_fallbacks"] = r.refine_fallbacks;
      e["timings_ms"] = {{"solve", r.solve_ms}, {"simulate", r.sim_ms}, {"moments", r.mom_ms}};
      e["checkpoint"] = r.checkpoint_rel;
      e["moments"] = {{"debt_to_income", r.moments.debt_to_income},
                      {"nondef_debt_to_income", r.moments.nondef_debt_to_income},
                      {"mean_spread", r.moments.mean_spread},
                      {"sd_spread", r.moments.sd_spread},
                      {"default_rate", r.moments.default_rate},
                      {"sigma_c_over_sigma_y", r.moments.sigma_c_over_sigma_y},
                      {"sigma_tby_over_sigma_y", r.moments.sigma_tby_over_sigma_y},
                      {"corr_c_y", r.moments.corr_c_y},
                      {"corr_tby_y", r.moments.corr_tby_y},
                      {"corr_spread_y", r.moments.corr_spread_y},
                      {"duration_quarters", r.moments.duration_quarters},
                      {"n_windows", r.moments.n_windows},
                      {"n_skipped", r.moments.n_skipped}};
      jm.push_back(std::move(e));
    }

    int exit_code = all_converged ? k_exit_ok : k_exit_nonconverged;

    nlohmann::json j;
    j["tool"] = "sovdebt";
    j["checkpoint_version"] = k_checkpoint_version;
    {
      std::time_t now = std::time(nullptr);
      char ts[32];
      std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
      j["created_utc"] = ts;
    }
    j["exit_code"] = exit_code;
    j["config_ini"] = config_to_ini(cfg);
    j["methods"] = std::move(jm);
    if (resume.active) {
      j["resume"] = {{"source", cfg.resume_path},
                     {"reinterpolated", resume.reinterpolated},
                     {"params_differ", resume.params_differ},
                     {"scheme_escalated", resume.scheme_escalated},
                     {"confirmation_only", resume.confirmation_only},
                     {"additional_iterations",
                      resume.confirmation_only ? 0 : runs.front().status.iterations}};
    }
    j["notes"] = {
        {"default_rate", "400 * default events / post-burn panel quarters, percent per year"},
        {"spread", "annualized percent, averaged over the sampled windows"},
        {"business_cycle",
         "HP cycles of log consumption and log income; tb/y and spread filtered in levels"},
        {"debt_stock",
         "risk-free PV of the service flow, svc * face / (delta + r), as percent of quarterly "
         "income; divided by four under the hm convention"}};
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [rel, sha] : w.hashes) hashes[rel] = sha;
    j["artifacts"] = std::move(hashes);

    art.manifest_path = w.put("manifest.json", j.dump(2) + "\n");
    art.files = w.files;
    art.exit_code = exit_code;
    return art;
  } catch (const ConfigError& e) {
    art.exit_code = k_exit_config;
    art.error = e.what();
    return art;
  } catch (const std::exception& e) {
    art.exit_code = k_exit_crash;
    art.error = e.what();
    return art;
  }
}

}  // namespace sovdebt
