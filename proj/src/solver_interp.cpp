#include "sovdebt/solver_interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sovdebt/optimizers.hpp"
#include "sovdebt/rng.hpp"

namespace sovdebt {

OneAssetApprox OneAssetApprox::make(Scheme scheme, const GridAxis& b_axis, const GridAxis& y_axis,
                                    const Grid2<double>& v_repay,
                                    std::span<const double> v_default, const Grid2<double>& price,
                                    const ModelParams& p, const Quadrature& quad,
                                    std::shared_ptr<const SplineBasisAxis> basis) {
  OneAssetApprox a;
  a.scheme_ = scheme == Scheme::spline ? Scheme::spline : Scheme::linear;
  a.b_axis_ = b_axis;
  a.y_axis_ = y_axis;
  a.vd_.assign(v_default.begin(), v_default.end());
  a.quad_ = quad;
  a.ar1_ = p.ar1;
  a.q_cap_ = risk_free_price(p);
  if (a.scheme_ == Scheme::linear) {
    a.vr_ = v_repay;
    a.price_ = price;
  } else {
    a.basis_ = basis ? std::move(basis) : std::make_shared<SplineBasisAxis>(b_axis.nodes);
    int ny = v_repay.n0, nb = v_repay.n1, nc = a.basis_->ncoef();
    a.vr_coef_ = Grid2<double>(ny, nc);
    a.price_coef_ = Grid2<double>(ny, nc);
    for (int i = 0; i < ny; ++i) {
      a.basis_->fit(std::span<const double>(v_repay.row(i), nb),
                    std::span<double>(a.vr_coef_.row(i), nc));
      a.basis_->fit(std::span<const double>(price.row(i), nb),
                    std::span<double>(a.price_coef_.row(i), nc));
    }
  }
  return a;
}

OneAssetApprox OneAssetApprox::from_equilibrium(const Equilibrium& eq, const Quadrature& quad) {
  GridAxis b_ax{eq.b_grid};
  GridAxis y_ax{eq.income.nodes};
  OneAssetApprox a = make(eq.scheme, b_ax, y_ax, eq.v_repay, eq.v_default, eq.price, eq.params,
                          quad);
  a.policy_ = eq.debt_policy;
  return a;
}

double OneAssetApprox::value_repay(double b, double y) const {
  double t;
  int j = y_axis_.locate(y, &t);
  if (scheme_ == Scheme::linear) {
    double s;
    int m = b_axis_.locate(b, &s);
    double lo = (1.0 - s) * vr_(j, m) + s * vr_(j, m + 1);
    double hi = (1.0 - s) * vr_(j + 1, m) + s * vr_(j + 1, m + 1);
    return (1.0 - t) * lo + t * hi;
  }
  auto bs = basis_->basis(b);
  const double* c0 = vr_coef_.row(j) + bs.first;
  const double* c1 = vr_coef_.row(j + 1) + bs.first;
  double lo = c0[0] * bs.w[0] + c0[1] * bs.w[1] + c0[2] * bs.w[2] + c0[3] * bs.w[3];
  double hi = c1[0] * bs.w[0] + c1[1] * bs.w[1] + c1[2] * bs.w[2] + c1[3] * bs.w[3];
  return (1.0 - t) * lo + t * hi;
}

double OneAssetApprox::value_default(double y) const {
  double t;
  int j = y_axis_.locate(y, &t);
  return (1.0 - t) * vd_[j] + t * vd_[j + 1];
}

double OneAssetApprox::price_at(double b_next, double y) const {
  double t;
  int j = y_axis_.locate(y, &t);
  double v;
  if (scheme_ == Scheme::linear) {
    double s;
    int m = b_axis_.locate(b_next, &s);
    double lo = (1.0 - s) * price_(j, m) + s * price_(j, m + 1);
    double hi = (1.0 - s) * price_(j + 1, m) + s * price_(j + 1, m + 1);
    v = (1.0 - t) * lo + t * hi;
  } else {
    auto bs = basis_->basis(b_next);
    const double* c0 = price_coef_.row(j) + bs.first;
    const double* c1 = price_coef_.row(j + 1) + bs.first;
    double lo = c0[0] * bs.w[0] + c0[1] * bs.w[1] + c0[2] * bs.w[2] + c0[3] * bs.w[3];
    double hi = c1[0] * bs.w[0] + c1[1] * bs.w[1] + c1[2] * bs.w[2] + c1[3] * bs.w[3];
    v = (1.0 - t) * lo + t * hi;
  }
  return std::clamp(v, 0.0, q_cap_);
}

double OneAssetApprox::policy_at(double b, double y) const {
  double t, s;
  int j = y_axis_.locate(y, &t);
  int m = b_axis_.locate(b, &s);
  double lo = (1.0 - s) * policy_(j, m) + s * policy_(j, m + 1);
  double hi = (1.0 - s) * policy_(j + 1, m) + s * policy_(j + 1, m + 1);
  return (1.0 - t) * lo + t * hi;
}

double bellman_rhs(const StateOneAsset& s, double b_next, const OneAssetApprox& approx,
                   const ModelParams& p) {
  double q = approx.price_at(b_next, s.y);
  double c = consumption_repay(s, b_next, q, p);
  const Quadrature& quad = approx.quadrature();
  const Ar1Params& ar1 = approx.ar1();
  double m = (1.0 - ar1.rho) * ar1.mu + ar1.rho * std::log(s.y);
  double cont = 0.0;
  for (int k = 0; k < quad.size(); ++k) {
    double yn = std::exp(m + ar1.sigma_eps * quad.nodes[k]);
    double vrn = approx.value_repay(b_next, yn);
    double vdn = approx.value_default(yn);
    cont += quad.weights[k] * std::max(vrn, vdn);
  }
  return utility(p, c) + p.beta * cont;
}

OptimizeStateResult optimize_state(const StateOneAsset& s, const OneAssetApprox& approx,
                                   const ModelParams& p, int n_candidates) {
  const GridAxis& bx = approx.b_axis();
  double lo = bx.nodes.front(), hi = bx.nodes.back();
  int nc = std::max(n_candidates, 2);

  double best = -1e300, bestx = lo;
  int besti = 0;
  std::vector<double> fv(nc);
  for (int c = 0; c < nc; ++c) {
    double x = lo + (hi - lo) * c / (nc - 1);
    double v = bellman_rhs(s, x, approx, p);
    fv[c] = v;
    if (v > best) {
      best = v;
      bestx = x;
      besti = c;
    }
  }
  if (besti == 0 || besti == nc - 1)
    return {bestx, best, true};

  auto step = (hi - lo) / (nc - 1);
  Bracket br;
  br.a = lo + step * (besti - 1);
  br.b = bestx;
  br.c = lo + step * (besti + 1);
  br.fa = -fv[besti - 1];
  br.fb = -best;
  br.fc = -fv[besti + 1];
  auto neg = [&](double x) { return -bellman_rhs(s, x, approx, p); };
  OptResult r = brent_min(neg, br, 1e-10, 200);
  if (-r.f >= best) return {r.x[0], -r.f, false};
  return {bestx, best, false};
}

// ---------------------------------------------------------------------------
// Fast iteration internals. Per income row the previous iterate is blended
// across income once per quadrature node, so candidate continuation values
// are shared by every debt state in the row. The arithmetic composition is
// the same as bellman_rhs; only the association order of the income blend
// differs.
// ---------------------------------------------------------------------------

namespace {

struct QuadIncomeBlend {
  std::vector<int> j;     // (ny x K) lower income row of y'_{ik}
  std::vector<double> t;  // weight on the upper row
};

QuadIncomeBlend make_blend(const GridAxis& y_axis, const Ar1Params& ar1, const Quadrature& quad) {
  int ny = y_axis.size(), K = quad.size();
  QuadIncomeBlend bl;
  bl.j.resize(static_cast<std::size_t>(ny) * K);
  bl.t.resize(static_cast<std::size_t>(ny) * K);
  for (int i = 0; i < ny; ++i) {
    double m = (1.0 - ar1.rho) * ar1.mu + ar1.rho * std::log(y_axis.nodes[i]);
    for (int k = 0; k < K; ++k) {
      double yn = std::exp(m + ar1.sigma_eps * quad.nodes[k]);
      double t;
      int j = y_axis.locate(yn, &t);
      bl.j[static_cast<std::size_t>(i) * K + k] = j;
      bl.t[static_cast<std::size_t>(i) * K + k] = t;
    }
  }
  return bl;
}

// Scratch for one income row; reused across iterations per thread.
struct RowScratch {
  std::vector<double> vrn;   // nodal blends of v_repay, (nb x K), node-major
  std::vector<double> vrc;   // blended spline coefs, ((nb+2) x K)
  std::vector<double> qn;    // nodal blends of price
  std::vector<double> qc;    // blended price coefs
  std::vector<double> pt;    // blended policy at nodes, (nb x K)
  std::vector<double> vd_k;  // blended v_default per quadrature node
  std::vector<double> cont_cand, q_cand, val_cand;
};

struct Workspace {
  const ModelParams& p;
  const GridAxis& b_axis;
  const GridAxis& y_axis;
  const Quadrature& quad;
  QuadIncomeBlend blend;
  std::shared_ptr<const SplineBasisAxis> basis{};
  std::vector<double> cand{};                      // candidate debt levels
  std::vector<int> cand_m{};                       // linear locate per candidate
  std::vector<double> cand_s{};
  std::vector<SplineBasisAxis::Basis4> cand_b4{};  // spline basis per candidate
  std::vector<SplineBasisAxis::Basis4> node_b4{};  // spline basis at grid nodes
  double q_cap = 0.0;
  int nb = 0, ny = 0, K = 0, ncand = 0;
};

// Continuation of the repayment value at debt choice x for every quadrature
// node blended row; linear phase.
inline double continuation_linear(const Workspace& w, const RowScratch& rs, int m, double s) {
  const double* lo = rs.vrn.data() + static_cast<std::size_t>(m) * w.K;
  const double* hi = lo + w.K;
  const double* vd = rs.vd_k.data();
  const double* wt = w.quad.weights.data();
  double acc = 0.0;
  for (int k = 0; k < w.K; ++k) {
    double v = (1.0 - s) * lo[k] + s * hi[k];
    acc += wt[k] * std::max(v, vd[k]);
  }
  return acc;
}

inline double continuation_spline(const Workspace& w, const RowScratch& rs,
                                  const SplineBasisAxis::Basis4& b4) {
  const double* c0 = rs.vrc.data() + static_cast<std::size_t>(b4.first) * w.K;
  const double* c1 = c0 + w.K;
  const double* c2 = c1 + w.K;
  const double* c3 = c2 + w.K;
  const double* vd = rs.vd_k.data();
  const double* wt = w.quad.weights.data();
  double acc = 0.0;
  for (int k = 0; k < w.K; ++k) {
    double v = b4.w[0] * c0[k] + b4.w[1] * c1[k] + b4.w[2] * c2[k] + b4.w[3] * c3[k];
    acc += wt[k] * std::max(v, vd[k]);
  }
  return acc;
}

}  // namespace

Equilibrium solve_one_asset(const ModelParams& p, const OneAssetGrids& g, const Quadrature& quad,
                            const InterpSolveOptions& opt) {
  p.validate();
  const int nb = static_cast<int>(g.b_grid.size());
  const int ny = g.income.size();
  const int K = quad.size();
  const double svc = p.debt_service_rate();
  const double one_less_delta = 1.0 - p.delta;
  const double inv_gross = 1.0 / (1.0 + p.r);
  const std::vector<double>& b = g.b_grid;
  const std::vector<double>& y = g.income.nodes;

  GridAxis b_axis{b};
  GridAxis y_axis{y};
  b_axis.validate();
  y_axis.validate();

  Workspace w{.p = p,
              .b_axis = b_axis,
              .y_axis = y_axis,
              .quad = quad,
              .blend = make_blend(y_axis, p.ar1, quad)};
  w.q_cap = risk_free_price(p);
  w.nb = nb;
  w.ny = ny;
  w.K = K;
  w.ncand = std::max(opt.n_candidates, 2);
  w.cand.resize(w.ncand);
  w.cand_m.resize(w.ncand);
  w.cand_s.resize(w.ncand);
  for (int c = 0; c < w.ncand; ++c) {
    w.cand[c] = b.front() + (b.back() - b.front()) * c / (w.ncand - 1);
    w.cand_m[c] = b_axis.locate(w.cand[c], &w.cand_s[c]);
  }

  Equilibrium eq;
  eq.kind = SolverKind::interp;
  eq.params = p;
  eq.b_grid = b;
  eq.income = g.income;

  Grid2<double> vr(ny, nb), vr_new(ny, nb);
  Grid2<double> q(ny, nb, 0.0), q_new(ny, nb);
  Grid2<double> pol(ny, nb, 0.0), pol_new(ny, nb);
  std::vector<double> vd(ny), vd_new(ny), u_def(ny);
  for (int i = 0; i < ny; ++i) {
    u_def[i] = utility(p, y[i] - default_cost(y[i], p.d0, p.d1));
    vd[i] = u_def[i];
    for (int j = 0; j < nb; ++j) vr(i, j) = utility(p, y[i] - svc * b[j]);
  }
  if (opt.init) {
    const OneAssetInit& in = *opt.init;
    if (in.v_repay.v.size() != vr.v.size() || in.v_default.size() != vd.size() ||
        in.price.v.size() != q.v.size())
      throw std::invalid_argument("solve_one_asset: warm-start dimensions do not match grids");
    vr.v = in.v_repay.v;
    vd = in.v_default;
    q.v = in.price.v;
    if (in.debt_policy.v.size() == pol.v.size()) pol.v = in.debt_policy.v;
  }

  Scheme phase = opt.scheme == Scheme::spline ? Scheme::spline : Scheme::linear;
  Grid2<double> vrc, qc;  // spline coefficient rows of the previous iterate
  auto ensure_spline = [&]() {
    if (!w.basis) {
      w.basis = std::make_shared<SplineBasisAxis>(b);
      w.cand_b4.resize(w.ncand);
      for (int c = 0; c < w.ncand; ++c) w.cand_b4[c] = w.basis->basis(w.cand[c]);
      w.node_b4.resize(nb);
      for (int j = 0; j < nb; ++j) w.node_b4[j] = w.basis->basis(b[j]);
      vrc = Grid2<double>(ny, w.basis->ncoef());
      qc = Grid2<double>(ny, w.basis->ncoef());
    }
  };
  if (phase == Scheme::spline) ensure_spline();

  eq.status.phase = phase == Scheme::spline ? "spline" : "linear";
  int boundary_hits = 0;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    if (opt.scheme == Scheme::auto_switch && phase == Scheme::linear &&
        iter >= opt.switch_after) {
      phase = Scheme::spline;
      ensure_spline();
    }
    const bool spline = phase == Scheme::spline;

    if (spline) {
      int ncoef = w.basis->ncoef();
#pragma omp parallel for schedule(static)
      for (int i = 0; i < ny; ++i) {
        w.basis->fit(std::span<const double>(vr.row(i), nb), std::span<double>(vrc.row(i), ncoef));
        w.basis->fit(std::span<const double>(q.row(i), nb), std::span<double>(qc.row(i), ncoef));
      }
    }

#pragma omp parallel
    {
      RowScratch rs;
      rs.vrn.resize(static_cast<std::size_t>(nb) * K);
      rs.qn.resize(static_cast<std::size_t>(nb) * K);
      rs.pt.resize(static_cast<std::size_t>(nb) * K);
      rs.vd_k.resize(K);
      rs.cont_cand.resize(w.ncand);
      rs.q_cand.resize(w.ncand);
      rs.val_cand.resize(w.ncand);
      if (spline) {
        rs.vrc.resize(static_cast<std::size_t>(nb + 2) * K);
        rs.qc.resize(static_cast<std::size_t>(nb + 2) * K);
      }

#pragma omp for schedule(static)
      for (int i = 0; i < ny; ++i) {
        const int* bj = w.blend.j.data() + static_cast<std::size_t>(i) * K;
        const double* bt = w.blend.t.data() + static_cast<std::size_t>(i) * K;

        // Income blends of the previous iterate at each quadrature node.
        for (int k = 0; k < K; ++k) {
          int jlo = bj[k];
          double t = bt[k];
          rs.vd_k[k] = (1.0 - t) * vd[jlo] + t * vd[jlo + 1];
          const double* r0 = vr.row(jlo);
          const double* r1 = vr.row(jlo + 1);
          const double* q0 = q.row(jlo);
          const double* q1 = q.row(jlo + 1);
          const double* p0 = pol.row(jlo);
          const double* p1 = pol.row(jlo + 1);
          for (int m = 0; m < nb; ++m) {
            rs.vrn[static_cast<std::size_t>(m) * K + k] = (1.0 - t) * r0[m] + t * r1[m];
            rs.qn[static_cast<std::size_t>(m) * K + k] = (1.0 - t) * q0[m] + t * q1[m];
            rs.pt[static_cast<std::size_t>(m) * K + k] = (1.0 - t) * p0[m] + t * p1[m];
          }
          if (spline) {
            const double* c0 = vrc.row(jlo);
            const double* c1 = vrc.row(jlo + 1);
            const double* d0 = qc.row(jlo);
            const double* d1 = qc.row(jlo + 1);
            for (int m = 0; m < nb + 2; ++m) {
              rs.vrc[static_cast<std::size_t>(m) * K + k] = (1.0 - t) * c0[m] + t * c1[m];
              rs.qc[static_cast<std::size_t>(m) * K + k] = (1.0 - t) * d0[m] + t * d1[m];
            }
          }
        }

        double yi = y[i];
        const double* wt = quad.weights.data();

        // Default value: exclusion continuation at zero debt.
        {
          double acc = 0.0;
          for (int k = 0; k < K; ++k) {
            double v0 = rs.vrn[k];  // node 0 blend
            acc += wt[k] * ((1.0 - p.psi) * rs.vd_k[k] + p.psi * std::max(v0, rs.vd_k[k]));
          }
          vd_new[i] = u_def[i] + p.beta * acc;
        }

        // Candidate continuations and quoted prices, shared across states.
        const double* qrow = q.row(i);
        const double* qcrow = spline ? qc.row(i) : nullptr;
        auto price_here = [&](double x, int hint) -> double {
          double v;
          if (spline) {
            auto b4 = hint >= 0 ? w.cand_b4[hint] : w.basis->basis(x);
            const double* c = qcrow + b4.first;
            v = c[0] * b4.w[0] + c[1] * b4.w[1] + c[2] * b4.w[2] + c[3] * b4.w[3];
          } else {
            double s;
            int m;
            if (hint >= 0) {
              m = w.cand_m[hint];
              s = w.cand_s[hint];
            } else {
              m = w.b_axis.locate(x, &s);
            }
            v = (1.0 - s) * qrow[m] + s * qrow[m + 1];
          }
          return std::clamp(v, 0.0, w.q_cap);
        };
        for (int c = 0; c < w.ncand; ++c) {
          rs.q_cand[c] = price_here(w.cand[c], c);
          rs.cont_cand[c] = spline ? continuation_spline(w, rs, w.cand_b4[c])
                                   : continuation_linear(w, rs, w.cand_m[c], w.cand_s[c]);
        }

        for (int ib = 0; ib < nb; ++ib) {
          double w0 = yi - svc * b[ib];
          double carry = one_less_delta * b[ib];

          double best = -1e300;
          int besti = 0;
          for (int c = 0; c < w.ncand; ++c) {
            double cons = w0 + rs.q_cand[c] * (w.cand[c] - carry);
            double v = utility(p, cons) + p.beta * rs.cont_cand[c];
            rs.val_cand[c] = v;
            if (v > best) {
              best = v;
              besti = c;
            }
          }

          double bstar = w.cand[besti], vstar = best;
          if (besti == 0 || besti == w.ncand - 1) {
#pragma omp atomic
            ++boundary_hits;
          } else {
            auto neg = [&](double x) {
              double qx = price_here(x, -1);
              double cons = w0 + qx * (x - carry);
              double cont;
              if (spline) {
                cont = continuation_spline(w, rs, w.basis->basis(x));
              } else {
                double s;
                int m = w.b_axis.locate(x, &s);
                cont = continuation_linear(w, rs, m, s);
              }
              return -(utility(p, cons) + p.beta * cont);
            };
            Bracket br;
            br.a = w.cand[besti - 1];
            br.b = bstar;
            br.c = w.cand[besti + 1];
            br.fa = -rs.val_cand[besti - 1];
            br.fb = -vstar;
            br.fc = -rs.val_cand[besti + 1];
            OptResult r = brent_min(neg, br, 1e-10, 200);
            if (-r.f >= vstar) {
              bstar = r.x[0];
              vstar = -r.f;
            }
          }
          vr_new(i, ib) = vstar;
          pol_new(i, ib) = bstar;
        }

        // Price at each grid choice from the previous iterate's policy, price
        // and default sets.
        double* qn = q_new.row(i);
        for (int j = 0; j < nb; ++j) {
          const double* vnode = rs.vrn.data() + static_cast<std::size_t>(j) * K;
          const double* pnode = rs.pt.data() + static_cast<std::size_t>(j) * K;
          double acc = 0.0;
          for (int k = 0; k < K; ++k) {
            if (rs.vd_k[k] > vnode[k]) continue;  // default next period
            double bpp = pnode[k];
            double qres;
            if (spline) {
              auto b4 = w.basis->basis(bpp);
              const double* c0 = rs.qc.data() + static_cast<std::size_t>(b4.first) * K + k;
              qres = b4.w[0] * c0[0] + b4.w[1] * c0[K] + b4.w[2] * c0[2 * K] + b4.w[3] * c0[3 * K];
            } else {
              double s;
              int m = w.b_axis.locate(bpp, &s);
              const double* qlo = rs.qn.data() + static_cast<std::size_t>(m) * K + k;
              qres = (1.0 - s) * qlo[0] + s * qlo[K];
            }
            qres = std::clamp(qres, 0.0, w.q_cap);
            acc += wt[k] * p.payout(qres);
          }
          double fresh = inv_gross * acc;
          qn[j] = opt.damping * fresh + (1.0 - opt.damping) * qrow[j];
        }
      }
    }  // omp parallel

    double sup = 0.0;
#pragma omp parallel for schedule(static) reduction(max : sup)
    for (int i = 0; i < ny; ++i) {
      double m = std::fabs(vd_new[i] - vd[i]);
      for (int j = 0; j < nb; ++j) {
        m = std::max(m, std::fabs(vr_new(i, j) - vr(i, j)));
        m = std::max(m, std::fabs(q_new(i, j) - q(i, j)));
      }
      sup = std::max(sup, m);
    }

    vr.v.swap(vr_new.v);
    q.v.swap(q_new.v);
    pol.v.swap(pol_new.v);
    vd.swap(vd_new);

    if (phase == Scheme::spline)
      ++eq.status.spline_iterations;
    else
      ++eq.status.linear_iterations;
    eq.status.sup_norm_history.push_back(sup);
    eq.status.iterations = iter + 1;
    eq.status.final_sup_norm = sup;
    if (sup < opt.tol) {
      eq.status.converged = true;
      break;
    }
  }

  eq.scheme = phase;
  eq.status.phase = phase == Scheme::spline ? "spline" : "linear";
  eq.v_repay = std::move(vr);
  eq.v_default = std::move(vd);
  eq.price = std::move(q);
  eq.debt_policy = std::move(pol);
  eq.v_option = Grid2<double>(ny, nb);
  eq.default_rule = Grid2<std::uint8_t>(ny, nb);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nb; ++j) {
      bool def = eq.v_default[i] > eq.v_repay(i, j);
      eq.default_rule(i, j) = def;
      eq.v_option(i, j) = def ? eq.v_default[i] : eq.v_repay(i, j);
    }
  (void)boundary_hits;
  return eq;
}

double max_bellman_residual(const Equilibrium& eq, const Quadrature& quad, int n_states,
                            std::uint64_t seed) {
  OneAssetApprox approx = OneAssetApprox::from_equilibrium(eq, quad);
  const ModelParams& p = eq.params;
  Rng rng(seed);
  double worst = 0.0;
  double blo = eq.b_grid.front(), bhi = eq.b_grid.back();
  double ylo = eq.income.nodes.front(), yhi = eq.income.nodes.back();
  for (int it = 0; it < n_states; ++it) {
    StateOneAsset s{blo + (bhi - blo) * rng.uniform(), ylo + (yhi - ylo) * rng.uniform()};
    OptimizeStateResult r = optimize_state(s, approx, p, 100);

    // Default-side value recomputed one step.
    const Ar1Params& ar1 = p.ar1;
    double m = (1.0 - ar1.rho) * ar1.mu + ar1.rho * std::log(s.y);
    double acc = 0.0;
    for (int k = 0; k < quad.size(); ++k) {
      double yn = std::exp(m + ar1.sigma_eps * quad.nodes[k]);
      double vdn = approx.value_default(yn);
      double v0 = approx.value_repay(blo, yn);
      acc += quad.weights[k] * ((1.0 - p.psi) * vdn + p.psi * std::max(v0, vdn));
    }
    double vdef = utility(p, s.y - default_cost(s.y, p.d0, p.d1)) + p.beta * acc;

    double tv = std::max(r.value, vdef);
    double v = approx.option_value(s.b, s.y);
    worst = std::max(worst, std::fabs(tv - v));
  }
  return worst;
}

}  // namespace sovdebt
