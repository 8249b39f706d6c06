#include "sovdebt/solver_portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sovdebt/solver_taste.hpp"

namespace sovdebt {

PortfolioGrids make_portfolio_grids(const Ar1Params& ar1, int n_b, double b_max, int n_a,
                                    double a_cap, int n_y, double income_width,
                                    bool with_transition) {
  PortfolioGrids g;
  g.b_grid.resize(n_b);
  for (int i = 0; i < n_b; ++i) g.b_grid[i] = b_max * i / (n_b - 1);
  if (a_cap <= 0.0) {
    g.a_grid = {0.0};
  } else {
    g.a_grid.resize(std::max(n_a, 2));
    for (std::size_t i = 0; i < g.a_grid.size(); ++i)
      g.a_grid[i] = a_cap * i / (g.a_grid.size() - 1);
  }
  g.income = with_transition ? tauchen_discretize(ar1, n_y, income_width)
                             : log_spaced_income_grid(ar1, n_y, income_width);
  return g;
}

StagePoint global_stage(const std::function<double(double, double)>& f, double b_lo, double b_hi,
                        double a_lo, double a_hi, int n_cand_b, int n_cand_a) {
  int ncb = b_hi - b_lo > 1e-14 ? std::max(n_cand_b, 2) : 1;
  int nca = a_hi - a_lo > 1e-14 ? std::max(n_cand_a, 2) : 1;
  std::vector<double> cb(ncb), ca(nca);
  for (int i = 0; i < ncb; ++i) cb[i] = ncb == 1 ? b_lo : b_lo + (b_hi - b_lo) * i / (ncb - 1);
  for (int i = 0; i < nca; ++i) ca[i] = nca == 1 ? a_lo : a_lo + (a_hi - a_lo) * i / (nca - 1);

  StagePoint best{cb[0], ca[0], -1e300};
  std::vector<double> col(ncb);
  for (int j = 0; j < nca; ++j) {
    int jb = 0;
    for (int i = 0; i < ncb; ++i) {
      col[i] = f(cb[i], ca[j]);
      if (col[i] > col[jb]) jb = i;
    }
    if (col[jb] > best.value) best = {cb[jb], ca[j], col[jb]};
    if (jb > 0 && jb < ncb - 1) {
      double aj = ca[j];
      auto neg = [&](double x) { return -f(x, aj); };
      Bracket br{cb[jb - 1], cb[jb], cb[jb + 1], -col[jb - 1], -col[jb], -col[jb + 1]};
      OptResult r = brent_min(neg, br, 1e-10, 200);
      if (-r.f > best.value) best = {r.x[0], aj, -r.f};
    }
  }
  return best;
}

RefineResult refine_candidate(const std::function<double(double, double)>& f, double b0,
                              double a0, double v0, double b_lo, double b_hi, double a_lo,
                              double a_hi, PortfolioMethod method, int max_evals,
                              double rho_begin_frac, double rho_end) {
  RefineResult out{b0, a0, v0, false, OptStatus::converged};
  double span_b = b_hi - b_lo, span_a = a_hi - a_lo;
  if (span_b <= 1e-14 || span_a <= 1e-14) return out;

  auto fnorm = [&](std::span<const double> u) -> double {
    return -f(b_lo + u[0] * span_b, a_lo + u[1] * span_a);
  };
  double u0[2] = {std::clamp((b0 - b_lo) / span_b, 0.0, 1.0),
                  std::clamp((a0 - a_lo) / span_a, 0.0, 1.0)};
  double lo2[2] = {0.0, 0.0}, hi2[2] = {1.0, 1.0};
  std::span<const double> x0(u0, 2), lo(lo2, 2), hi(hi2, 2);

  OptResult r;
  switch (method) {
    case PortfolioMethod::powell:
      r = powell_linmin(fnorm, x0, 0.2, 1e-9, 6, lo, hi);
      break;
    case PortfolioMethod::bobyqa:
      r = bobyqa(fnorm, x0, lo, hi, rho_begin_frac, rho_end, max_evals);
      break;
    case PortfolioMethod::nelder_mead:
      r = nelder_mead(fnorm, x0, 0.1, 1e-10, max_evals, lo, hi);
      break;
    case PortfolioMethod::dfp:
      r = dfp_bfgs(fnorm, x0, 1e-6, 1e-8, 40, lo, hi);
      break;
  }
  out.status = r.status;
  bool in_box = r.x[0] >= -1e-9 && r.x[0] <= 1.0 + 1e-9 && r.x[1] >= -1e-9 && r.x[1] <= 1.0 + 1e-9;
  if (r.status != OptStatus::out_of_bounds && in_box && std::isfinite(r.f) && -r.f > v0) {
    out.b = b_lo + std::clamp(r.x[0], 0.0, 1.0) * span_b;
    out.a = a_lo + std::clamp(r.x[1], 0.0, 1.0) * span_a;
    out.value = -r.f;
    out.improved = true;
  }
  return out;
}

namespace {

// Bracketing on a possibly degenerate axis (single node allowed).
inline int locate_axis(const std::vector<double>& nodes, double x, double* t) {
  int n = static_cast<int>(nodes.size());
  if (n == 1 || x <= nodes.front()) {
    *t = 0.0;
    return 0;
  }
  if (x >= nodes.back()) {
    *t = 1.0;
    return n - 2;
  }
  int i = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
  if (i > n - 2) i = n - 2;
  *t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
  return i;
}

struct IncomeBlendTable {
  std::vector<int> j;
  std::vector<double> t;
};

IncomeBlendTable make_income_blend(const std::vector<double>& ynodes, const Ar1Params& ar1,
                                   const Quadrature& quad) {
  int ny = static_cast<int>(ynodes.size());
  int K = quad.size();
  IncomeBlendTable bl;
  bl.j.resize(static_cast<std::size_t>(ny) * K);
  bl.t.resize(static_cast<std::size_t>(ny) * K);
  for (int i = 0; i < ny; ++i) {
    double m = (1.0 - ar1.rho) * ar1.mu + ar1.rho * std::log(ynodes[i]);
    for (int k = 0; k < K; ++k) {
      double yn = std::exp(m + ar1.sigma_eps * quad.nodes[k]);
      bl.j[static_cast<std::size_t>(i) * K + k] =
          locate_axis(ynodes, yn, &bl.t[static_cast<std::size_t>(i) * K + k]);
    }
  }
  return bl;
}

// Tensor cubic fit over (a, b) into a coefficient slab ((na+2) x (nb+2)).
// Values are a (na x nb) block, b fastest.
void fit_surface(const SplineBasisAxis& a_basis, const SplineBasisAxis& b_basis,
                 const double* values, int na, int nb, std::vector<double>& stage,
                 double* coefs) {
  int ncb = b_basis.ncoef(), nca = a_basis.ncoef();
  stage.resize(static_cast<std::size_t>(na) * ncb);
  for (int ia = 0; ia < na; ++ia)
    b_basis.fit(std::span<const double>(values + static_cast<std::size_t>(ia) * nb, nb),
                std::span<double>(stage.data() + static_cast<std::size_t>(ia) * ncb, ncb));
  std::vector<double> col(nca);
  for (int j = 0; j < ncb; ++j) {
    col[0] = 0.0;
    for (int ia = 0; ia < na; ++ia) col[ia + 1] = stage[static_cast<std::size_t>(ia) * ncb + j];
    col[nca - 1] = 0.0;
    a_basis.solve_collocation(col);
    for (int ia = 0; ia < nca; ++ia) coefs[static_cast<std::size_t>(ia) * ncb + j] = col[ia];
  }
}

struct RowSlabs {
  // Income blends of the previous iterate per quadrature node; cell-major so
  // the k run is contiguous: index (cell * K + k).
  std::vector<double> vrn;  // (na*nb) cells
  std::vector<double> qn;
  std::vector<double> pb, pa;
  std::vector<double> vd;   // (na) cells
  std::vector<double> vrc, qc;  // spline coef slabs, ((na+2)*(nb+2)) cells
  std::vector<double> cont_cand, q_cand;  // (nca * ncb)
  std::vector<int> col_best;
  std::vector<double> col_val;
  std::vector<double> stage;  // spline fit scratch
  std::vector<double> qci;    // row-i price coefs (spline budget)
};

}  // namespace

PortfolioEquilibrium solve_portfolio(const ModelParams& p, const PortfolioGrids& g,
                                     const Quadrature& quad, const PortfolioSolveOptions& opt) {
  p.validate();
  const int nb = static_cast<int>(g.b_grid.size());
  const int na = static_cast<int>(g.a_grid.size());
  const int ny = g.income.size();
  const int K = quad.size();
  const double svc = p.debt_service_rate();
  const double one_less_delta = 1.0 - p.delta;
  const double inv_gross = 1.0 / (1.0 + p.r);
  const double q_cap = risk_free_price(p);
  const std::vector<double>& b = g.b_grid;
  const std::vector<double>& a = g.a_grid;
  const std::vector<double>& y = g.income.nodes;
  const double a_cap = a.back();
  const bool frozen_a = na == 1;
  const bool spline = opt.scheme == Scheme::spline;
  if (opt.scheme == Scheme::auto_switch)
    throw std::invalid_argument("portfolio: scheme must be linear or spline");
  if (spline && (na < 4 || nb < 4))
    throw std::invalid_argument("portfolio: spline scheme needs at least 4 nodes per axis");

  IncomeBlendTable blend = make_income_blend(y, p.ar1, quad);

  std::shared_ptr<SplineBasisAxis> b_basis, a_basis;
  int ncb = 0, nca = 0;
  if (spline) {
    b_basis = std::make_shared<SplineBasisAxis>(b);
    a_basis = std::make_shared<SplineBasisAxis>(a);
    ncb = b_basis->ncoef();
    nca = a_basis->ncoef();
  }

  // Candidate grids over each axis with precomputed brackets.
  const int nCB = std::max(opt.n_cand_b, 2);
  const int nCA = frozen_a ? 1 : std::max(opt.n_cand_a, 2);
  std::vector<double> cand_b(nCB), cand_a(nCA);
  std::vector<int> cb_m(nCB), ca_m(nCA);
  std::vector<double> cb_s(nCB), ca_s(nCA);
  std::vector<SplineBasisAxis::Basis4> cb_b4(nCB), ca_b4(nCA);
  for (int c = 0; c < nCB; ++c) {
    cand_b[c] = b.front() + (b.back() - b.front()) * c / (nCB - 1);
    cb_m[c] = locate_axis(b, cand_b[c], &cb_s[c]);
    if (spline) cb_b4[c] = b_basis->basis(cand_b[c]);
  }
  for (int c = 0; c < nCA; ++c) {
    cand_a[c] = frozen_a ? 0.0 : a.front() + (a.back() - a.front()) * c / (nCA - 1);
    ca_m[c] = locate_axis(a, cand_a[c], &ca_s[c]);
    if (spline && !frozen_a) ca_b4[c] = a_basis->basis(cand_a[c]);
  }

  PortfolioEquilibrium eq;
  eq.params = p;
  eq.a_cap = a_cap;
  eq.method = opt.method;
  eq.scheme = opt.scheme;
  eq.b_grid = b;
  eq.a_grid = a;
  eq.income = g.income;

  Grid3<double> vr(ny, na, nb), vr_new(ny, na, nb);
  Grid3<double> q3(ny, na, nb, 0.0), q3_new(ny, na, nb);
  Grid3<double> polb(ny, na, nb, 0.0), polb_new(ny, na, nb);
  Grid3<double> pola(ny, na, nb, 0.0), pola_new(ny, na, nb);
  Grid2<double> vd2(ny, na), vd2_new(ny, na);
  std::vector<double> u_def(static_cast<std::size_t>(ny) * na);

  for (int i = 0; i < ny; ++i)
    for (int ia = 0; ia < na; ++ia) {
      u_def[static_cast<std::size_t>(i) * na + ia] =
          utility(p, y[i] - a[ia] - default_cost(y[i], p.d0, p.d1));
      vd2(i, ia) = u_def[static_cast<std::size_t>(i) * na + ia];
      for (int ib = 0; ib < nb; ++ib) vr(i, ia, ib) = utility(p, y[i] - svc * b[ib] - a[ia]);
    }

  if (opt.init) {
    const PortfolioInit& in = *opt.init;
    if (in.v_repay.v.size() != vr.v.size() || in.v_default.v.size() != vd2.v.size() ||
        in.price.v.size() != q3.v.size())
      throw std::invalid_argument("portfolio: warm-start dimensions do not match grids");
    vr.v = in.v_repay.v;
    vd2.v = in.v_default.v;
    q3.v = in.price.v;
    if (in.policy_b.v.size() == polb.v.size()) polb.v = in.policy_b.v;
    if (in.policy_a.v.size() == pola.v.size()) pola.v = in.policy_a.v;
  }

  Grid2<double> vrc_rows, qc_rows;  // per-income spline coef slabs
  if (spline) {
    vrc_rows = Grid2<double>(ny, nca * ncb);
    qc_rows = Grid2<double>(ny, nca * ncb);
  }

  long fallbacks = 0;
  eq.status.phase = "global";

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const bool local = iter >= opt.switch_after;

    if (spline) {
#pragma omp parallel
      {
        std::vector<double> stage;
#pragma omp for schedule(static)
        for (int i = 0; i < ny; ++i) {
          fit_surface(*a_basis, *b_basis, vr.row(i, 0), na, nb, stage, vrc_rows.row(i));
          fit_surface(*a_basis, *b_basis, q3.row(i, 0), na, nb, stage, qc_rows.row(i));
        }
      }
    }

#pragma omp parallel reduction(+ : fallbacks)
    {
      RowSlabs rs;
      rs.vrn.resize(static_cast<std::size_t>(na) * nb * K);
      rs.qn.resize(static_cast<std::size_t>(na) * nb * K);
      rs.pb.resize(static_cast<std::size_t>(na) * nb * K);
      rs.pa.resize(static_cast<std::size_t>(na) * nb * K);
      rs.vd.resize(static_cast<std::size_t>(na) * K);
      if (spline) {
        rs.vrc.resize(static_cast<std::size_t>(nca) * ncb * K);
        rs.qc.resize(static_cast<std::size_t>(nca) * ncb * K);
        rs.qci.resize(static_cast<std::size_t>(nca) * ncb);
      }
      rs.cont_cand.resize(static_cast<std::size_t>(nCA) * nCB);
      rs.q_cand.resize(static_cast<std::size_t>(nCA) * nCB);
      rs.col_best.resize(nCA);
      rs.col_val.resize(nCA);

#pragma omp for schedule(static)
      for (int i = 0; i < ny; ++i) {
        const int* bj = blend.j.data() + static_cast<std::size_t>(i) * K;
        const double* bt = blend.t.data() + static_cast<std::size_t>(i) * K;
        const double* wt = quad.weights.data();
        double yi = y[i];

        for (int k = 0; k < K; ++k) {
          int jlo = bj[k];
          int jhi = std::min(jlo + 1, ny - 1);
          double t = bt[k];
          const double* v0 = vr.row(jlo, 0);
          const double* v1 = vr.row(jhi, 0);
          const double* q0 = q3.row(jlo, 0);
          const double* q1 = q3.row(jhi, 0);
          const double* pb0 = polb.row(jlo, 0);
          const double* pb1 = polb.row(jhi, 0);
          const double* pa0 = pola.row(jlo, 0);
          const double* pa1 = pola.row(jhi, 0);
          for (int cell = 0; cell < na * nb; ++cell) {
            std::size_t off = static_cast<std::size_t>(cell) * K + k;
            rs.vrn[off] = (1.0 - t) * v0[cell] + t * v1[cell];
            rs.qn[off] = (1.0 - t) * q0[cell] + t * q1[cell];
            rs.pb[off] = (1.0 - t) * pb0[cell] + t * pb1[cell];
            rs.pa[off] = (1.0 - t) * pa0[cell] + t * pa1[cell];
          }
          for (int ia = 0; ia < na; ++ia)
            rs.vd[static_cast<std::size_t>(ia) * K + k] =
                (1.0 - t) * vd2(jlo, ia) + t * vd2(jhi, ia);
          if (spline) {
            const double* c0 = vrc_rows.row(jlo);
            const double* c1 = vrc_rows.row(jhi);
            const double* d0 = qc_rows.row(jlo);
            const double* d1 = qc_rows.row(jhi);
            for (int cell = 0; cell < nca * ncb; ++cell) {
              std::size_t off = static_cast<std::size_t>(cell) * K + k;
              rs.vrc[off] = (1.0 - t) * c0[cell] + t * c1[cell];
              rs.qc[off] = (1.0 - t) * d0[cell] + t * d1[cell];
            }
          }
        }

        if (spline) fit_surface(*a_basis, *b_basis, q3.row(i, 0), na, nb, rs.stage, rs.qci.data());

        // Continuation over quadrature nodes at an arbitrary choice pair.
        auto cont_at = [&](double bn, double an, int cb_hint, int ca_hint) -> double {
          int ial;
          double ta;
          if (ca_hint >= 0) {
            ial = ca_m[ca_hint];
            ta = ca_s[ca_hint];
          } else {
            ial = locate_axis(a, an, &ta);
          }
          int iah = std::min(ial + 1, na - 1);
          const double* vdl = rs.vd.data() + static_cast<std::size_t>(ial) * K;
          const double* vdh = rs.vd.data() + static_cast<std::size_t>(iah) * K;
          double acc = 0.0;
          if (!spline) {
            int mb;
            double sb;
            if (cb_hint >= 0) {
              mb = cb_m[cb_hint];
              sb = cb_s[cb_hint];
            } else {
              mb = locate_axis(b, bn, &sb);
            }
            const double* c00 = rs.vrn.data() + (static_cast<std::size_t>(ial) * nb + mb) * K;
            const double* c01 = c00 + K;
            const double* c10 = rs.vrn.data() + (static_cast<std::size_t>(iah) * nb + mb) * K;
            const double* c11 = c10 + K;
            for (int k = 0; k < K; ++k) {
              double lo = (1.0 - sb) * c00[k] + sb * c01[k];
              double hi = (1.0 - sb) * c10[k] + sb * c11[k];
              double vrep = (1.0 - ta) * lo + ta * hi;
              double vdef = (1.0 - ta) * vdl[k] + ta * vdh[k];
              acc += wt[k] * std::max(vrep, vdef);
            }
          } else {
            auto b4 = cb_hint >= 0 ? cb_b4[cb_hint] : b_basis->basis(bn);
            auto a4 = ca_hint >= 0 ? ca_b4[ca_hint] : a_basis->basis(an);
            const double* base = rs.vrc.data();
            for (int k = 0; k < K; ++k) {
              double vrep = 0.0;
              for (int pa_i = 0; pa_i < 4; ++pa_i) {
                const double* rowp =
                    base + (static_cast<std::size_t>(a4.first + pa_i) * ncb + b4.first) * K + k;
                vrep += a4.w[pa_i] * (b4.w[0] * rowp[0] + b4.w[1] * rowp[K] +
                                      b4.w[2] * rowp[2 * K] + b4.w[3] * rowp[3 * K]);
              }
              double vdef = (1.0 - ta) * vdl[k] + ta * vdh[k];
              acc += wt[k] * std::max(vrep, vdef);
            }
          }
          return acc;
        };

        // Quoted price at the current income row.
        const double* qslab = q3.row(i, 0);
        auto price_at = [&](double bn, double an, int cb_hint, int ca_hint) -> double {
          double v;
          if (!spline) {
            int mb, ial;
            double sb, ta;
            if (cb_hint >= 0) {
              mb = cb_m[cb_hint];
              sb = cb_s[cb_hint];
            } else {
              mb = locate_axis(b, bn, &sb);
            }
            if (ca_hint >= 0) {
              ial = ca_m[ca_hint];
              ta = ca_s[ca_hint];
            } else {
              ial = locate_axis(a, an, &ta);
            }
            int iah = std::min(ial + 1, na - 1);
            int mb1 = std::min(mb + 1, nb - 1);
            const double* r0 = qslab + static_cast<std::size_t>(ial) * nb;
            const double* r1 = qslab + static_cast<std::size_t>(iah) * nb;
            double lo = (1.0 - sb) * r0[mb] + sb * r0[mb1];
            double hi = (1.0 - sb) * r1[mb] + sb * r1[mb1];
            v = (1.0 - ta) * lo + ta * hi;
          } else {
            auto b4 = cb_hint >= 0 ? cb_b4[cb_hint] : b_basis->basis(bn);
            auto a4 = ca_hint >= 0 ? ca_b4[ca_hint] : a_basis->basis(an);
            v = 0.0;
            for (int pa_i = 0; pa_i < 4; ++pa_i) {
              const double* rowp =
                  rs.qci.data() + static_cast<std::size_t>(a4.first + pa_i) * ncb + b4.first;
              v += a4.w[pa_i] * (b4.w[0] * rowp[0] + b4.w[1] * rowp[1] + b4.w[2] * rowp[2] +
                                 b4.w[3] * rowp[3]);
            }
          }
          return std::clamp(v, 0.0, q_cap);
        };

        for (int c2 = 0; c2 < nCA; ++c2)
          for (int c1 = 0; c1 < nCB; ++c1) {
            rs.cont_cand[static_cast<std::size_t>(c2) * nCB + c1] =
                cont_at(cand_b[c1], cand_a[c2], c1, c2);
            rs.q_cand[static_cast<std::size_t>(c2) * nCB + c1] =
                price_at(cand_b[c1], cand_a[c2], c1, c2);
          }

        // Default value: exclusion pays a, runs zero balances afterwards.
        {
          double acc = 0.0;
          const double* vd0 = rs.vd.data();
          const double* v00 = rs.vrn.data();
          for (int k = 0; k < K; ++k)
            acc += wt[k] * ((1.0 - p.psi) * vd0[k] + p.psi * std::max(v00[k], vd0[k]));
          double H = p.beta * acc;
          for (int ia = 0; ia < na; ++ia)
            vd2_new(i, ia) = u_def[static_cast<std::size_t>(i) * na + ia] + H;
        }

        for (int ia = 0; ia < na; ++ia) {
          for (int ib = 0; ib < nb; ++ib) {
            double w0 = yi - svc * b[ib] - a[ia];
            double carry = one_less_delta * b[ib];

            double box_blo = b.front(), box_bhi = b.back();
            double box_alo = a.front(), box_ahi = a.back();
            if (local) {
              double wb = opt.local_window * (b.back() - b.front());
              double wa = opt.local_window * (a.back() - a.front());
              double pb_prev = polb(i, ia, ib), pa_prev = pola(i, ia, ib);
              box_blo = std::max(box_blo, pb_prev - wb);
              box_bhi = std::min(box_bhi, pb_prev + wb);
              box_alo = std::max(box_alo, pa_prev - wa);
              box_ahi = std::min(box_ahi, pa_prev + wa);
            }

            auto objective = [&](double bn, double an, int cb_hint, int ca_hint) -> double {
              double qx = (cb_hint >= 0 && ca_hint >= 0)
                              ? rs.q_cand[static_cast<std::size_t>(ca_hint) * nCB + cb_hint]
                              : price_at(bn, an, cb_hint, ca_hint);
              double cont = (cb_hint >= 0 && ca_hint >= 0)
                                ? rs.cont_cand[static_cast<std::size_t>(ca_hint) * nCB + cb_hint]
                                : cont_at(bn, an, cb_hint, ca_hint);
              double cons = w0 + inv_gross * an + qx * (bn - carry);
              return utility(p, cons) + p.beta * cont;
            };

            // Candidate scan restricted to the search box, tracking the best
            // debt candidate per non-defaultable column.
            double best = -1e300, bb = b.front(), ba = a.front();
            for (int c2 = 0; c2 < nCA; ++c2) {
              rs.col_best[c2] = -1;
              rs.col_val[c2] = -1e300;
              if (cand_a[c2] < box_alo - 1e-15 || cand_a[c2] > box_ahi + 1e-15) continue;
              double an_term = inv_gross * cand_a[c2];
              const double* qrowc = rs.q_cand.data() + static_cast<std::size_t>(c2) * nCB;
              const double* crowc = rs.cont_cand.data() + static_cast<std::size_t>(c2) * nCB;
              for (int c1 = 0; c1 < nCB; ++c1) {
                if (cand_b[c1] < box_blo - 1e-15 || cand_b[c1] > box_bhi + 1e-15) continue;
                double cons = w0 + an_term + qrowc[c1] * (cand_b[c1] - carry);
                double v = utility(p, cons) + p.beta * crowc[c1];
                if (v > rs.col_val[c2]) {
                  rs.col_val[c2] = v;
                  rs.col_best[c2] = c1;
                }
              }
              if (rs.col_best[c2] >= 0 && rs.col_val[c2] > best) {
                best = rs.col_val[c2];
                bb = cand_b[rs.col_best[c2]];
                ba = cand_a[c2];
              }
            }

            // Brent along debt at every admissible column.
            for (int c2 = 0; c2 < nCA; ++c2) {
              int jb = rs.col_best[c2];
              if (jb <= 0 || jb >= nCB - 1) continue;
              if (cand_b[jb - 1] < box_blo - 1e-15 || cand_b[jb + 1] > box_bhi + 1e-15) continue;
              double a_fix = cand_a[c2];
              auto neg = [&](double x) { return -objective(x, a_fix, -1, c2); };
              Bracket br;
              br.a = cand_b[jb - 1];
              br.b = cand_b[jb];
              br.c = cand_b[jb + 1];
              br.fa = -objective(cand_b[jb - 1], a_fix, jb - 1, c2);
              br.fb = -rs.col_val[c2];
              br.fc = -objective(cand_b[jb + 1], a_fix, jb + 1, c2);
              OptResult r = brent_min(neg, br, 1e-10, 200);
              if (-r.f > best) {
                best = -r.f;
                bb = r.x[0];
                ba = a_fix;
              }
            }

            if (local) {
              // The previous policy point anchors the local search.
              double pb_prev = std::clamp(polb(i, ia, ib), box_blo, box_bhi);
              double pa_prev = std::clamp(pola(i, ia, ib), box_alo, box_ahi);
              double v = objective(pb_prev, pa_prev, -1, -1);
              if (v > best) {
                best = v;
                bb = pb_prev;
                ba = pa_prev;
              }
            }

            // Two-dimensional polish inside the box.
            if (!frozen_a) {
              auto f2 = [&](double bn, double an) { return objective(bn, an, -1, -1); };
              RefineResult rr =
                  refine_candidate(f2, bb, ba, best, box_blo, box_bhi, box_alo, box_ahi,
                                   opt.method, opt.refine_max_evals, opt.rho_begin_frac,
                                   opt.rho_end);
              if (rr.improved) {
                best = rr.value;
                bb = rr.b;
                ba = rr.a;
              } else if (rr.status == OptStatus::out_of_bounds) {
                ++fallbacks;
              }
            }

            vr_new(i, ia, ib) = best;
            polb_new(i, ia, ib) = bb;
            pola_new(i, ia, ib) = ba;
          }
        }

        // Price update from the previous iterate's policies and default sets.
        for (int ia = 0; ia < na; ++ia) {
          const double* vdk = rs.vd.data() + static_cast<std::size_t>(ia) * K;
          for (int ib = 0; ib < nb; ++ib) {
            std::size_t cell = static_cast<std::size_t>(ia) * nb + ib;
            const double* vrk = rs.vrn.data() + cell * K;
            const double* pbk = rs.pb.data() + cell * K;
            const double* pak = rs.pa.data() + cell * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) {
              if (vdk[k] > vrk[k]) continue;
              double bpp = pbk[k], app = pak[k];
              double qres;
              if (!spline) {
                double sb, ta;
                int mb = locate_axis(b, bpp, &sb);
                int ial = locate_axis(a, app, &ta);
                int iah = std::min(ial + 1, na - 1);
                int mb1 = std::min(mb + 1, nb - 1);
                const double* r0 = rs.qn.data() + static_cast<std::size_t>(ial) * nb * K + k;
                const double* r1 = rs.qn.data() + static_cast<std::size_t>(iah) * nb * K + k;
                double lo = (1.0 - sb) * r0[static_cast<std::size_t>(mb) * K] +
                            sb * r0[static_cast<std::size_t>(mb1) * K];
                double hi = (1.0 - sb) * r1[static_cast<std::size_t>(mb) * K] +
                            sb * r1[static_cast<std::size_t>(mb1) * K];
                qres = (1.0 - ta) * lo + ta * hi;
              } else {
                auto b4 = b_basis->basis(bpp);
                auto a4 = a_basis->basis(app);
                qres = 0.0;
                for (int pa_i = 0; pa_i < 4; ++pa_i) {
                  const double* rowp =
                      rs.qc.data() +
                      (static_cast<std::size_t>(a4.first + pa_i) * ncb + b4.first) * K + k;
                  qres += a4.w[pa_i] * (b4.w[0] * rowp[0] + b4.w[1] * rowp[K] +
                                        b4.w[2] * rowp[2 * K] + b4.w[3] * rowp[3 * K]);
                }
              }
              qres = std::clamp(qres, 0.0, q_cap);
              acc += wt[k] * p.payout(qres);
            }
            q3_new(i, ia, ib) = inv_gross * acc;
          }
        }
      }
    }  // omp parallel

    double sup = 0.0;
#pragma omp parallel for schedule(static) reduction(max : sup)
    for (int i = 0; i < ny; ++i) {
      double m = 0.0;
      for (int ia = 0; ia < na; ++ia) {
        m = std::max(m, std::fabs(vd2_new(i, ia) - vd2(i, ia)));
        for (int ib = 0; ib < nb; ++ib) {
          m = std::max(m, std::fabs(vr_new(i, ia, ib) - vr(i, ia, ib)));
          m = std::max(m, std::fabs(q3_new(i, ia, ib) - q3(i, ia, ib)));
        }
      }
      sup = std::max(sup, m);
    }

    vr.v.swap(vr_new.v);
    q3.v.swap(q3_new.v);
    polb.v.swap(polb_new.v);
    pola.v.swap(pola_new.v);
    vd2.v.swap(vd2_new.v);

    eq.status.sup_norm_history.push_back(sup);
    eq.status.iterations = iter + 1;
    eq.status.final_sup_norm = sup;
    eq.status.phase = local ? "local" : "global";
    if (sup < opt.tol) {
      eq.status.converged = true;
      break;
    }
  }

  eq.refine_fallbacks = fallbacks;
  eq.v_repay = std::move(vr);
  eq.v_default = std::move(vd2);
  eq.price = std::move(q3);
  eq.policy_b = std::move(polb);
  eq.policy_a = std::move(pola);
  eq.v_option = Grid3<double>(ny, na, nb);
  eq.default_rule = Grid3<std::uint8_t>(ny, na, nb);
  for (int i = 0; i < ny; ++i)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        bool def = eq.v_default(i, ia) > eq.v_repay(i, ia, ib);
        eq.default_rule(i, ia, ib) = def;
        eq.v_option(i, ia, ib) = def ? eq.v_default(i, ia) : eq.v_repay(i, ia, ib);
      }
  return eq;
}

PortfolioEquilibrium solve_portfolio_taste(const ModelParams& p, const PortfolioGrids& g,
                                           const TasteParams& taste, double tol, int max_iter) {
  p.validate();
  if (g.income.transition.empty())
    throw std::invalid_argument("portfolio taste: income grid needs a transition matrix");
  const int nb = static_cast<int>(g.b_grid.size());
  const int na = static_cast<int>(g.a_grid.size());
  const int ny = g.income.size();
  const double svc = p.debt_service_rate();
  const double one_less_delta = 1.0 - p.delta;
  const double inv_gross = 1.0 / (1.0 + p.r);
  const double sig_d = taste.sigma_default;
  const double sig_b = taste.sigma_debt;
  const std::vector<double>& b = g.b_grid;
  const std::vector<double>& a = g.a_grid;
  const std::vector<double>& y = g.income.nodes;

  const int Lb = taste_window_length(nb, sig_b);
  const int La = na >= 4 ? taste_window_length(na, sig_b) : na;
  const int npair = na * nb;
  const int nwin = La * Lb;
  const std::size_t nstates = static_cast<std::size_t>(ny) * npair;

  PortfolioEquilibrium eq;
  eq.params = p;
  eq.a_cap = a.back();
  eq.taste = taste;
  eq.b_grid = b;
  eq.a_grid = a;
  eq.income = g.income;

  Grid3<double> vr(ny, na, nb), vr_new(ny, na, nb);
  Grid3<double> vs(ny, na, nb), vs_new(ny, na, nb);
  Grid3<double> q3(ny, na, nb, 0.0), q3_new(ny, na, nb);
  Grid3<double> pd(ny, na, nb), pd_new(ny, na, nb);
  Grid3<double> polb(ny, na, nb), pola(ny, na, nb);
  Grid2<double> vd2(ny, na), vd2_new(ny, na);
  std::vector<int> win_b(nstates, 0), win_a(nstates, 0), win_b_new(nstates), win_a_new(nstates);
  std::vector<double> dens(nstates * nwin, 0.0), dens_new(nstates * nwin);
  for (std::size_t s = 0; s < nstates; ++s) dens[s * nwin] = 1.0;

  for (int i = 0; i < ny; ++i)
    for (int ia = 0; ia < na; ++ia) {
      vd2(i, ia) = utility(p, y[i] - a[ia] - default_cost(y[i], p.d0, p.d1));
      for (int ib = 0; ib < nb; ++ib) {
        vr(i, ia, ib) = utility(p, y[i] - svc * b[ib] - a[ia]);
        vs(i, ia, ib) = logsumexp_value(vr(i, ia, ib), vd2(i, ia), sig_d);
        pd(i, ia, ib) = default_probability(vr(i, ia, ib), vd2(i, ia), sig_d);
      }
    }

  Grid3<double> evs(ny, na, nb);
  Grid2<double> evd(ny, na);
  Grid3<double> payoff(ny, na, nb);

  eq.status.phase = "taste2d";
  for (int iter = 0; iter < max_iter; ++iter) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      // Resale mix over the previous density, then expected payoff.
      for (int cell = 0; cell < npair; ++cell) {
        std::size_t rr = static_cast<std::size_t>(i) * npair + cell;
        const double* pr = dens.data() + rr * nwin;
        int sa = win_a[rr], sb = win_b[rr];
        double resale = 0.0;
        for (int la = 0; la < La; ++la)
          for (int lb = 0; lb < Lb; ++lb)
            resale += pr[la * Lb + lb] * q3(i, sa + la, sb + lb);
        payoff.v[static_cast<std::size_t>(i) * npair + cell] =
            (1.0 - pd.v[static_cast<std::size_t>(i) * npair + cell]) * p.payout(resale);
      }

      double* evrow = evs.row(i, 0);
      std::fill(evrow, evrow + npair, 0.0);
      for (int ia = 0; ia < na; ++ia) evd(i, ia) = 0.0;
      for (int k = 0; k < ny; ++k) {
        double w = g.income.prob(i, k);
        const double* vsk = vs.row(k, 0);
        for (int cell = 0; cell < npair; ++cell) evrow[cell] += w * vsk[cell];
        for (int ia = 0; ia < na; ++ia) evd(i, ia) += w * vd2(k, ia);
      }
    }

#pragma omp parallel
    {
      std::vector<double> tv(npair);
#pragma omp for schedule(static)
      for (int i = 0; i < ny; ++i) {
        double yi = y[i];
        for (int ia = 0; ia < na; ++ia)
          vd2_new(i, ia) = utility(p, yi - a[ia] - default_cost(yi, p.d0, p.d1)) +
                           p.beta * ((1.0 - p.psi) * evd(i, 0) + p.psi * evs(i, 0, 0));

        const double* evrow = evs.row(i, 0);
        for (int ia = 0; ia < na; ++ia) {
          for (int ib = 0; ib < nb; ++ib) {
            double w0 = yi - svc * b[ib] - a[ia];
            double carry = one_less_delta * b[ib];
            double bestv = -1e300;
            int bestcell = 0;
            for (int ja = 0; ja < na; ++ja) {
              double aterm = inv_gross * a[ja];
              for (int jb = 0; jb < nb; ++jb) {
                int cell = ja * nb + jb;
                double c = w0 + aterm + q3(i, ja, jb) * (b[jb] - carry);
                double v = utility(p, c) + p.beta * evrow[cell];
                tv[cell] = v;
                if (v > bestv) {
                  bestv = v;
                  bestcell = cell;
                }
              }
            }
            int ja_star = bestcell / nb, jb_star = bestcell % nb;
            int sa = std::clamp(ja_star - La / 2, 0, na - La);
            int sb = std::clamp(jb_star - Lb / 2, 0, nb - Lb);

            std::size_t rr = static_cast<std::size_t>(i) * npair + ia * nb + ib;
            double* pr = dens_new.data() + rr * nwin;
            win_a_new[rr] = sa;
            win_b_new[rr] = sb;
            double vrep;
            if (sig_b <= 0.0) {
              std::fill(pr, pr + nwin, 0.0);
              pr[(ja_star - sa) * Lb + (jb_star - sb)] = 1.0;
              vrep = bestv;
            } else {
              double sum = 0.0;
              for (int la = 0; la < La; ++la)
                for (int lb = 0; lb < Lb; ++lb) {
                  double e = std::exp((tv[(sa + la) * nb + sb + lb] - bestv) / sig_b);
                  pr[la * Lb + lb] = e;
                  sum += e;
                }
              for (int l = 0; l < nwin; ++l) pr[l] /= sum;
              vrep = bestv + sig_b * std::log(sum);
            }

            vr_new(i, ia, ib) = vrep;
            polb(i, ia, ib) = b[jb_star];
            pola(i, ia, ib) = a[ja_star];
            vs_new(i, ia, ib) = logsumexp_value(vrep, vd2_new(i, ia), sig_d);
            pd_new(i, ia, ib) = default_probability(vrep, vd2_new(i, ia), sig_d);
          }
        }

        double* qn = q3_new.row(i, 0);
        std::fill(qn, qn + npair, 0.0);
        for (int k = 0; k < ny; ++k) {
          double w = g.income.prob(i, k) * inv_gross;
          const double* pay = payoff.row(k, 0);
          for (int cell = 0; cell < npair; ++cell) qn[cell] += w * pay[cell];
        }
      }
    }

    double sup = 0.0;
#pragma omp parallel for schedule(static) reduction(max : sup)
    for (int i = 0; i < ny; ++i) {
      double m = 0.0;
      for (int ia = 0; ia < na; ++ia) {
        m = std::max(m, std::fabs(vd2_new(i, ia) - vd2(i, ia)));
        for (int ib = 0; ib < nb; ++ib) {
          m = std::max(m, std::fabs(vr_new(i, ia, ib) - vr(i, ia, ib)));
          m = std::max(m, std::fabs(q3_new(i, ia, ib) - q3(i, ia, ib)));
        }
      }
      sup = std::max(sup, m);
    }

    vr.v.swap(vr_new.v);
    vs.v.swap(vs_new.v);
    q3.v.swap(q3_new.v);
    pd.v.swap(pd_new.v);
    vd2.v.swap(vd2_new.v);
    dens.swap(dens_new);
    win_a.swap(win_a_new);
    win_b.swap(win_b_new);

    eq.status.sup_norm_history.push_back(sup);
    eq.status.iterations = iter + 1;
    eq.status.final_sup_norm = sup;
    if (sup < tol) {
      eq.status.converged = true;
      break;
    }
  }

  eq.v_repay = std::move(vr);
  eq.v_option = std::move(vs);
  eq.price = std::move(q3);
  eq.policy_b = std::move(polb);
  eq.policy_a = std::move(pola);
  eq.v_default = std::move(vd2);
  eq.default_rule = Grid3<std::uint8_t>(ny, na, nb);
  for (int i = 0; i < ny; ++i)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib)
        eq.default_rule(i, ia, ib) = eq.v_default(i, ia) > eq.v_repay(i, ia, ib);
  return eq;
}

}  // namespace sovdebt
