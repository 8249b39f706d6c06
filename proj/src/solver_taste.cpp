#include "sovdebt/solver_taste.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sovdebt {

double logsumexp_value(double v_repay, double v_default, double sigma) {
  double m = std::max(v_repay, v_default);
  if (sigma <= 0.0) return m;
  double lo = std::min(v_repay, v_default);
  return m + sigma * std::log1p(std::exp((lo - m) / sigma));
}

double default_probability(double v_repay, double v_default, double sigma) {
  if (sigma <= 0.0) return v_default > v_repay ? 1.0 : 0.0;
  double x = (v_default - v_repay) / sigma;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

ChoiceDensityResult choice_density(std::span<const double> values, double sigma) {
  ChoiceDensityResult out;
  out.probs.assign(values.size(), 0.0);
  if (values.empty()) return out;

  std::size_t arg = 0;
  double m = values[0];
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > m) {
      m = values[i];
      arg = i;
    }
  out.degenerate = m <= -1e10;

  if (sigma <= 0.0) {
    out.probs[arg] = 1.0;
    return out;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.probs[i] = std::exp((values[i] - m) / sigma);
    sum += out.probs[i];
  }
  for (auto& pr : out.probs) pr /= sum;
  return out;
}

int taste_window_length(int n_b, double sigma_debt) {
  int cap = n_b / 2 - 1;
  int len = static_cast<int>(std::ceil(100.0 * n_b * sigma_debt));
  len = std::min(len, cap);
  len = std::max(len, 1);
  return std::min(len, n_b);
}

Equilibrium solve_taste(const ModelParams& p, const TasteParams& taste, const OneAssetGrids& g,
                        double tol, int max_iter, const OneAssetInit* init) {
  p.validate();
  const int nb = static_cast<int>(g.b_grid.size());
  const int ny = g.income.size();
  const double svc = p.debt_service_rate();
  const double one_less_delta = 1.0 - p.delta;
  const double inv_gross = 1.0 / (1.0 + p.r);
  const double sig_d = taste.sigma_default;
  const double sig_b = taste.sigma_debt;
  const std::vector<double>& b = g.b_grid;
  const std::vector<double>& y = g.income.nodes;

  const int wlen = taste_window_length(nb, sig_b);
  const std::size_t nstates = static_cast<std::size_t>(ny) * nb;

  auto make_density = [&]() {
    SparseChoiceDensity d;
    d.n_b = nb;
    d.n_y = ny;
    d.window_start.assign(nstates, 0);
    d.window_len.assign(nstates, wlen);
    d.probs.assign(nstates * wlen, 0.0);
    d.row_offset.resize(nstates + 1);
    for (std::size_t rr = 0; rr <= nstates; ++rr) d.row_offset[rr] = rr * wlen;
    return d;
  };

  Equilibrium eq;
  eq.kind = SolverKind::taste;
  eq.params = p;
  eq.taste = taste;
  eq.b_grid = b;
  eq.income = g.income;

  Grid2<double> vr(ny, nb), vr_new(ny, nb);
  Grid2<double> vs(ny, nb), vs_new(ny, nb);  // smoothed option value
  Grid2<double> q(ny, nb, 0.0), q_new(ny, nb);
  Grid2<double> pd(ny, nb), pd_new(ny, nb);  // smoothed default probability
  Grid2<int> pol(ny, nb, 0), pol_new(ny, nb);
  std::vector<double> vd(ny), vd_new(ny), u_def(ny);
  SparseChoiceDensity dens = make_density(), dens_new = make_density();
  for (std::size_t rr = 0; rr < nstates; ++rr) dens.probs[rr * wlen] = 1.0;

  for (int i = 0; i < ny; ++i) {
    u_def[i] = utility(p, y[i] - default_cost(y[i], p.d0, p.d1));
    vd[i] = u_def[i];
    for (int j = 0; j < nb; ++j) {
      vr(i, j) = utility(p, y[i] - svc * b[j]);
      vs(i, j) = logsumexp_value(vr(i, j), vd[i], sig_d);
      pd(i, j) = default_probability(vr(i, j), vd[i], sig_d);
    }
  }

  if (init) {
    if (init->v_repay.v.size() != vr.v.size() || init->v_default.size() != vd.size() ||
        init->price.v.size() != q.v.size())
      throw std::invalid_argument("solve_taste: warm-start dimensions do not match grids");
    vr.v = init->v_repay.v;
    vd = init->v_default;
    q.v = init->price.v;
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < nb; ++j) {
        vs(i, j) = logsumexp_value(vr(i, j), vd[i], sig_d);
        pd(i, j) = default_probability(vr(i, j), vd[i], sig_d);
        if (!init->debt_policy.v.empty()) {
          double target = init->debt_policy(i, j);
          int best = 0;
          for (int l = 1; l < nb; ++l)
            if (std::fabs(b[l] - target) < std::fabs(b[best] - target)) best = l;
          std::size_t rr = static_cast<std::size_t>(i) * nb + j;
          int start = std::clamp(best - wlen / 2, 0, nb - wlen);
          dens.window_start[rr] = start;
          std::fill(dens.probs.begin() + rr * wlen, dens.probs.begin() + (rr + 1) * wlen, 0.0);
          dens.probs[rr * wlen + (best - start)] = 1.0;
          pol(i, j) = best;
        }
      }
  }

  Grid2<double> evs(ny, nb);     // E[V_sigma | y_i] at each b' node
  std::vector<double> evd(ny);
  Grid2<double> payoff(ny, nb);  // (1 - P_D) * payout(resale mix), previous iterate

  eq.status.phase = "taste";
  for (int iter = 0; iter < max_iter; ++iter) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      // Resale value mixed over the previous iteration's choice density.
      double* pay = payoff.row(i);
      const double* qi = q.row(i);
      for (int j = 0; j < nb; ++j) {
        std::size_t rr = static_cast<std::size_t>(i) * nb + j;
        const double* pr = dens.probs.data() + dens.row_offset[rr];
        int s = dens.window_start[rr];
        double resale = 0.0;
        for (int l = 0; l < wlen; ++l) resale += pr[l] * qi[s + l];
        pay[j] = (1.0 - pd(i, j)) * p.payout(resale);
      }
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      double* evrow = evs.row(i);
      std::fill(evrow, evrow + nb, 0.0);
      double ed = 0.0;
      for (int k = 0; k < ny; ++k) {
        double w = g.income.prob(i, k);
        const double* vsk = vs.row(k);
        for (int j = 0; j < nb; ++j) evrow[j] += w * vsk[j];
        ed += w * vd[k];
      }
      evd[i] = ed;
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < ny; ++i) {
      const double* evrow = evs.row(i);
      const double* qi = q.row(i);
      double yi = y[i];
      vd_new[i] = u_def[i] + p.beta * ((1.0 - p.psi) * evd[i] + p.psi * evs(i, 0));

      std::vector<double> qb(nb), tv(nb);
      for (int j = 0; j < nb; ++j) qb[j] = qi[j] * b[j];

      for (int ib = 0; ib < nb; ++ib) {
        double w0 = yi - svc * b[ib];
        double carry = one_less_delta * b[ib];
        double best = -1e300;
        int bestj = 0;
        for (int j = 0; j < nb; ++j) {
          double c = w0 + qb[j] - qi[j] * carry;
          double val = utility(p, c) + p.beta * evrow[j];
          tv[j] = val;
          if (val > best) {
            best = val;
            bestj = j;
          }
        }

        int start = bestj - wlen / 2;
        start = std::clamp(start, 0, nb - wlen);

        std::size_t rr = static_cast<std::size_t>(i) * nb + ib;
        double* pr = dens_new.probs.data() + dens_new.row_offset[rr];
        dens_new.window_start[rr] = start;
        double vrep;
        if (sig_b <= 0.0) {
          for (int l = 0; l < wlen; ++l) pr[l] = 0.0;
          pr[bestj - start] = 1.0;
          vrep = best;
        } else {
          double sum = 0.0;
          for (int l = 0; l < wlen; ++l) {
            pr[l] = std::exp((tv[start + l] - best) / sig_b);
            sum += pr[l];
          }
          for (int l = 0; l < wlen; ++l) pr[l] /= sum;
          vrep = best + sig_b * std::log(sum);
        }

        vr_new(i, ib) = vrep;
        pol_new(i, ib) = bestj;
        vs_new(i, ib) = logsumexp_value(vrep, vd_new[i], sig_d);
        pd_new(i, ib) = default_probability(vrep, vd_new[i], sig_d);
      }

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
    vs.v.swap(vs_new.v);
    q.v.swap(q_new.v);
    pd.v.swap(pd_new.v);
    pol.v.swap(pol_new.v);
    vd.swap(vd_new);
    std::swap(dens, dens_new);

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
  eq.price = std::move(q);
  eq.default_prob = std::move(pd);
  eq.debt_policy_idx = std::move(pol);
  eq.v_default = std::move(vd);
  eq.density = std::move(dens);
  eq.default_rule = Grid2<std::uint8_t>(ny, nb);
  eq.debt_policy = Grid2<double>(ny, nb);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nb; ++j) {
      eq.default_rule(i, j) = eq.v_default[i] > eq.v_repay(i, j);
      eq.debt_policy(i, j) = b[eq.debt_policy_idx(i, j)];
    }
  return eq;
}

}  // namespace sovdebt
