#include "sovdebt/solver_dss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sovdebt {

double ConvergenceStatus::oscillation_amplitude(int window) const {
  if (sup_norm_history.empty()) return 0.0;
  std::size_t n = sup_norm_history.size();
  std::size_t start = n > static_cast<std::size_t>(window) ? n - window : 0;
  double lo = sup_norm_history[start], hi = lo;
  for (std::size_t i = start; i < n; ++i) {
    lo = std::min(lo, sup_norm_history[i]);
    hi = std::max(hi, sup_norm_history[i]);
  }
  return hi - lo;
}

OneAssetGrids make_one_asset_grids(const Ar1Params& ar1, int n_b, double b_max, int n_y,
                                   double income_width, bool with_transition) {
  OneAssetGrids g;
  g.b_grid.resize(n_b);
  for (int i = 0; i < n_b; ++i) g.b_grid[i] = b_max * i / (n_b - 1);
  g.income = with_transition ? tauchen_discretize(ar1, n_y, income_width)
                             : log_spaced_income_grid(ar1, n_y, income_width);
  return g;
}

Equilibrium solve_dss(const ModelParams& p, const OneAssetGrids& g, double tol, int max_iter,
                      const OneAssetInit* init) {
  p.validate();
  const int nb = static_cast<int>(g.b_grid.size());
  const int ny = g.income.size();
  const double svc = p.debt_service_rate();
  const double one_less_delta = 1.0 - p.delta;
  const double inv_gross = 1.0 / (1.0 + p.r);
  const std::vector<double>& b = g.b_grid;
  const std::vector<double>& y = g.income.nodes;

  Equilibrium eq;
  eq.kind = SolverKind::dss;
  eq.params = p;
  eq.b_grid = b;
  eq.income = g.income;

  Grid2<double> vr(ny, nb), vr_new(ny, nb);
  Grid2<double> vo(ny, nb), vo_new(ny, nb);
  Grid2<double> q(ny, nb, 0.0), q_new(ny, nb);
  Grid2<int> pol(ny, nb, 0), pol_new(ny, nb);
  Grid2<std::uint8_t> drule(ny, nb, 0), drule_new(ny, nb);
  std::vector<double> vd(ny), vd_new(ny);
  std::vector<double> u_def(ny);

  for (int i = 0; i < ny; ++i) {
    u_def[i] = utility(p, y[i] - default_cost(y[i], p.d0, p.d1));
    vd[i] = u_def[i];
    for (int j = 0; j < nb; ++j) {
      vr(i, j) = utility(p, y[i] - svc * b[j]);
      vo(i, j) = std::max(vr(i, j), vd[i]);
      drule(i, j) = vd[i] > vr(i, j);
    }
  }

  if (init) {
    if (init->v_repay.v.size() != vr.v.size() || init->v_default.size() != vd.size() ||
        init->price.v.size() != q.v.size())
      throw std::invalid_argument("solve_dss: warm-start dimensions do not match grids");
    vr.v = init->v_repay.v;
    vd = init->v_default;
    q.v = init->price.v;
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < nb; ++j) {
        vo(i, j) = std::max(vr(i, j), vd[i]);
        drule(i, j) = vd[i] > vr(i, j);
        if (!init->debt_policy.v.empty()) {
          double target = init->debt_policy(i, j);
          int best = 0;
          for (int l = 1; l < nb; ++l)
            if (std::fabs(b[l] - target) < std::fabs(b[best] - target)) best = l;
          pol(i, j) = best;
        }
      }
  }

  Grid2<double> ev(ny, nb);        // E[max(V_R, V_D) | y_i] at each b' node
  std::vector<double> evd(ny);     // E[V_D | y_i]
  Grid2<double> payoff(ny, nb);    // lender payoff next period, previous iterate

  eq.status.phase = "dss";
  for (int iter = 0; iter < max_iter; ++iter) {
    // Continuations and next-period payoffs from the previous iterate.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      double* evrow = ev.row(i);
      std::fill(evrow, evrow + nb, 0.0);
      double ed = 0.0;
      for (int k = 0; k < ny; ++k) {
        double w = g.income.prob(i, k);
        const double* vok = vo.row(k);
        for (int j = 0; j < nb; ++j) evrow[j] += w * vok[j];
        ed += w * vd[k];
      }
      evd[i] = ed;

      double* pay = payoff.row(i);
      const double* qi = q.row(i);
      const int* poli = pol.row(i);
      const std::uint8_t* di = drule.row(i);
      for (int j = 0; j < nb; ++j)
        pay[j] = di[j] ? 0.0 : p.payout(qi[poli[j]]);
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      const double* evrow = ev.row(i);
      const double* qi = q.row(i);
      double yi = y[i];
      vd_new[i] = u_def[i] + p.beta * ((1.0 - p.psi) * evd[i] + p.psi * ev(i, 0));

      std::vector<double> qb(nb);
      for (int j = 0; j < nb; ++j) qb[j] = qi[j] * b[j];

      for (int ib = 0; ib < nb; ++ib) {
        double w0 = yi - svc * b[ib];
        double carry = one_less_delta * b[ib];
        double best = -1e300;
        int bestj = 0;
        for (int j = 0; j < nb; ++j) {
          double c = w0 + qb[j] - qi[j] * carry;
          double val = utility(p, c) + p.beta * evrow[j];
          if (val > best) {
            best = val;
            bestj = j;
          }
        }
        vr_new(i, ib) = best;
        pol_new(i, ib) = bestj;
        bool def = vd_new[i] > best;
        drule_new(i, ib) = def;
        vo_new(i, ib) = def ? vd_new[i] : best;
      }

      // Price at each debt choice: expected discounted payoff.
      double* qn = q_new.row(i);
      std::fill(qn, qn + nb, 0.0);
      for (int k = 0; k < ny; ++k) {
        double w = g.income.prob(i, k) * inv_gross;
        const double* pay = payoff.row(k);
        for (int j = 0; j < nb; ++j) qn[j] += w * pay[j];
      }
    }

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
    vo.v.swap(vo_new.v);
    q.v.swap(q_new.v);
    pol.v.swap(pol_new.v);
    drule.v.swap(drule_new.v);
    vd.swap(vd_new);

    eq.status.sup_norm_history.push_back(sup);
    eq.status.iterations = iter + 1;
    eq.status.final_sup_norm = sup;
    if (sup < tol) {
      eq.status.converged = true;
      break;
    }
  }

  eq.v_repay = std::move(vr);
  eq.v_option = std::move(vo);
  eq.price = std::move(q);
  eq.debt_policy_idx = std::move(pol);
  eq.default_rule = std::move(drule);
  eq.v_default = std::move(vd);
  eq.debt_policy = Grid2<double>(ny, nb);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nb; ++j) eq.debt_policy(i, j) = b[eq.debt_policy_idx(i, j)];
  return eq;
}

}  // namespace sovdebt
