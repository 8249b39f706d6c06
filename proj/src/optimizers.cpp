#include "sovdebt/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sovdebt {

namespace {

constexpr double k_gold = 1.618033988749895;
constexpr double k_cgold = 0.3819660112501051;
constexpr double k_zeps = 1e-14;

// Quadratic penalty outside a box. The inner objective is evaluated at the
// raw point: objectives built on the interpolation layer are clamped there,
// and a genuinely decreasing objective past the wall is exactly the escape
// the out_of_bounds status exists to report.
struct Boxed {
  const ObjectiveND& f;
  std::span<const double> lo, hi;
  double weight = 1e8;

  bool bounded() const { return !lo.empty(); }

  double operator()(std::span<const double> x, std::vector<double>&) const {
    if (!bounded()) return f(x);
    double pen = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < lo[i]) {
        double d = lo[i] - x[i];
        pen += d * d;
      } else if (x[i] > hi[i]) {
        double d = x[i] - hi[i];
        pen += d * d;
      }
    }
    return f(x) + weight * pen;
  }
};

bool outside_box(std::span<const double> x, std::span<const double> lo,
                 std::span<const double> hi, double slack) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return true;
  return false;
}

// Dense LU solve with partial pivoting; A is n*n row-major, clobbered.
bool dense_solve(std::vector<double>& A, std::vector<double>& b, int n) {
  for (int c = 0; c < n; ++c) {
    int p = c;
    double best = std::fabs(A[static_cast<std::size_t>(c) * n + c]);
    for (int r = c + 1; r < n; ++r) {
      double v = std::fabs(A[static_cast<std::size_t>(r) * n + c]);
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (best < 1e-300) return false;
    if (p != c) {
      for (int k = c; k < n; ++k)
        std::swap(A[static_cast<std::size_t>(c) * n + k], A[static_cast<std::size_t>(p) * n + k]);
      std::swap(b[c], b[p]);
    }
    double piv = A[static_cast<std::size_t>(c) * n + c];
    for (int r = c + 1; r < n; ++r) {
      double m = A[static_cast<std::size_t>(r) * n + c] / piv;
      if (m == 0.0) continue;
      A[static_cast<std::size_t>(r) * n + c] = 0.0;
      for (int k = c + 1; k < n; ++k)
        A[static_cast<std::size_t>(r) * n + k] -= m * A[static_cast<std::size_t>(c) * n + k];
      b[r] -= m * b[c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= A[static_cast<std::size_t>(r) * n + k] * b[k];
    b[r] = s / A[static_cast<std::size_t>(r) * n + r];
  }
  return true;
}

}  // namespace

std::optional<Bracket> bracket_minimum(const Objective1D& f, double a0, double b0,
                                       int max_expansions, int* evals) {
  Bracket br;
  br.a = a0;
  br.b = b0;
  br.fa = f(br.a);
  br.fb = f(br.b);
  int ne = 2;
  if (br.fb > br.fa) {
    std::swap(br.a, br.b);
    std::swap(br.fa, br.fb);
  }
  br.c = br.b + k_gold * (br.b - br.a);
  br.fc = f(br.c);
  ++ne;
  int left = max_expansions;
  while (br.fb >= br.fc) {
    if (--left < 0 || !std::isfinite(br.c)) {
      if (evals) *evals += ne;
      return std::nullopt;
    }
    br.a = br.b;
    br.fa = br.fb;
    br.b = br.c;
    br.fb = br.fc;
    br.c = br.b + k_gold * (br.b - br.a);
    br.fc = f(br.c);
    ++ne;
  }
  if (evals) *evals += ne;
  if (br.a > br.c) {
    std::swap(br.a, br.c);
    std::swap(br.fa, br.fc);
  }
  return br;
}

OptResult brent_min(const Objective1D& f, const Bracket& br, double tol, int max_iter) {
  double a = std::min(br.a, br.c), b = std::max(br.a, br.c);
  double x = br.b, w = br.b, v = br.b;
  double fx = br.fb, fw = br.fb, fv = br.fb;
  double d = 0.0, e = 0.0;
  OptResult out;
  for (int iter = 0; iter < max_iter; ++iter) {
    double xm = 0.5 * (a + b);
    double tol1 = tol * std::fabs(x) + k_zeps;
    double tol2 = 2.0 * tol1;
    if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) {
      out.x = {x};
      out.f = fx;
      out.status = OptStatus::converged;
      return out;
    }
    double u;
    if (std::fabs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      double etemp = e;
      e = d;
      if (std::fabs(p) >= std::fabs(0.5 * q * etemp) || p <= q * (a - x) || p >= q * (b - x)) {
        e = x >= xm ? a - x : b - x;
        d = k_cgold * e;
      } else {
        d = p / q;
        u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
      }
    } else {
      e = x >= xm ? a - x : b - x;
      d = k_cgold * e;
    }
    u = std::fabs(d) >= tol1 ? x + d : x + std::copysign(tol1, d);
    double fu = f(u);
    ++out.evaluations;
    if (fu <= fx) {
      if (u >= x)
        a = x;
      else
        b = x;
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x)
        a = u;
      else
        b = u;
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  out.x = {x};
  out.f = fx;
  out.status = OptStatus::max_iter;
  return out;
}

OptResult nelder_mead(const ObjectiveND& f, std::span<const double> x0, double scale, double tol,
                      int max_iter, std::span<const double> lower, std::span<const double> upper) {
  int n = static_cast<int>(x0.size());
  Boxed g{f, lower, upper};
  std::vector<double> scratch;
  OptResult out;

  std::vector<std::vector<double>> pts(n + 1, std::vector<double>(x0.begin(), x0.end()));
  std::vector<double> fv(n + 1);
  for (int i = 1; i <= n; ++i) pts[i][i - 1] += scale;
  for (int i = 0; i <= n; ++i) {
    fv[i] = g(pts[i], scratch);
    ++out.evaluations;
  }

  std::vector<int> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  out.status = OptStatus::max_iter;
  for (int iter = 0; iter < max_iter; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    int best = order[0], worst = order[n], second = order[n - 1];

    if (std::fabs(fv[worst] - fv[best]) <= tol * (1.0 + std::fabs(fv[best]))) {
      out.status = OptStatus::converged;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (int i = 0; i <= n; ++i)
      if (i != worst)
        for (int k = 0; k < n; ++k) centroid[k] += pts[i][k] / n;

    for (int k = 0; k < n; ++k) xr[k] = centroid[k] + (centroid[k] - pts[worst][k]);
    double fr = g(xr, scratch);
    ++out.evaluations;
    if (fr < fv[best]) {
      for (int k = 0; k < n; ++k) xe[k] = centroid[k] + 2.0 * (centroid[k] - pts[worst][k]);
      double fe = g(xe, scratch);
      ++out.evaluations;
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
    } else {
      bool outsidec = fr < fv[worst];
      for (int k = 0; k < n; ++k)
        xc[k] = outsidec ? centroid[k] + 0.5 * (xr[k] - centroid[k])
                         : centroid[k] - 0.5 * (centroid[k] - pts[worst][k]);
      double fc = g(xc, scratch);
      ++out.evaluations;
      if (fc < std::min(fr, fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (int k = 0; k < n; ++k) pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
          fv[i] = g(pts[i], scratch);
          ++out.evaluations;
        }
      }
    }
  }

  int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  out.x = pts[best];
  out.f = fv[best];
  if (!lower.empty())
    for (int k = 0; k < n; ++k) out.x[k] = std::clamp(out.x[k], lower[k], upper[k]);
  return out;
}

namespace {

// Line minimization used by Powell: bracket then Brent along direction d.
// Returns the step taken; 0 when no downhill bracket exists.
double linmin(const std::function<double(std::span<const double>)>& g, std::vector<double>& p,
              double& fp, const std::vector<double>& d, int* evals, std::vector<double>& work) {
  int n = static_cast<int>(p.size());
  auto phi = [&](double alpha) {
    for (int k = 0; k < n; ++k) work[k] = p[k] + alpha * d[k];
    ++*evals;
    return g(work);
  };
  auto br = bracket_minimum(phi, 0.0, 1.0, 60, evals);
  if (!br) return 0.0;
  OptResult r = brent_min(phi, *br, 1e-10, 200);
  *evals += r.evaluations;
  if (r.f < fp) {
    double alpha = r.x[0];
    for (int k = 0; k < n; ++k) p[k] += alpha * d[k];
    fp = r.f;
    return alpha;
  }
  return 0.0;
}

}  // namespace

OptResult powell_linmin(const ObjectiveND& f, std::span<const double> x0, double step, double tol,
                        int max_iter, std::span<const double> lower, std::span<const double> upper) {
  int n = static_cast<int>(x0.size());
  Boxed boxed{f, lower, upper};
  std::vector<double> scratch;
  auto g = [&](std::span<const double> x) { return boxed(x, scratch); };

  OptResult out;
  std::vector<std::vector<double>> dirs(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) dirs[i][i] = step;

  std::vector<double> p(x0.begin(), x0.end()), p0(n), ext(n), dnew(n), work(n);
  double fret = g(p);
  ++out.evaluations;
  const double slack = 1e-9 * std::fabs(step) + 1e-12;

  out.status = OptStatus::max_iter;
  for (int iter = 0; iter < max_iter; ++iter) {
    p0 = p;
    double fp = fret;
    int ibig = 0;
    double del = 0.0;
    for (int i = 0; i < n; ++i) {
      double before = fret;
      linmin(g, p, fret, dirs[i], &out.evaluations, work);
      if (before - fret > del) {
        del = before - fret;
        ibig = i;
      }
    }
    if (!lower.empty() && outside_box(p, lower, upper, slack)) {
      out.status = OptStatus::out_of_bounds;
      break;
    }
    if (2.0 * (fp - fret) <= tol * (std::fabs(fp) + std::fabs(fret)) + k_zeps) {
      out.status = OptStatus::converged;
      break;
    }
    for (int k = 0; k < n; ++k) {
      ext[k] = 2.0 * p[k] - p0[k];
      dnew[k] = p[k] - p0[k];
    }
    double fext = g(ext);
    ++out.evaluations;
    if (fext < fp) {
      double t = 2.0 * (fp - 2.0 * fret + fext) * (fp - fret - del) * (fp - fret - del) -
                 del * (fp - fext) * (fp - fext);
      if (t < 0.0) {
        linmin(g, p, fret, dnew, &out.evaluations, work);
        dirs[ibig] = dirs[n - 1];
        dirs[n - 1] = dnew;
      }
    }
  }

  if (out.status == OptStatus::out_of_bounds) {
    for (int k = 0; k < n; ++k) p[k] = std::clamp(p[k], lower[k], upper[k]);
    fret = g(p);
    ++out.evaluations;
  }
  out.x = p;
  out.f = fret;
  return out;
}

OptResult bobyqa(const ObjectiveND& f, std::span<const double> x0, std::span<const double> lower,
                 std::span<const double> upper, double rho_begin, double rho_end, int max_evals,
                 int npt) {
  int nfull = static_cast<int>(x0.size());
  OptResult out;

  // Frozen coordinates (degenerate box) are held fixed; the model works in
  // the remaining free coordinates.
  std::vector<int> free_dim;
  for (int i = 0; i < nfull; ++i)
    if (upper[i] - lower[i] > 1e-14) free_dim.push_back(i);
  int n = static_cast<int>(free_dim.size());

  std::vector<double> xfull(x0.begin(), x0.end());
  for (int i = 0; i < nfull; ++i) xfull[i] = std::clamp(xfull[i], lower[i], upper[i]);
  auto eval_full = [&](const std::vector<double>& xr) {
    for (int i = 0; i < n; ++i) xfull[free_dim[i]] = xr[i];
    ++out.evaluations;
    return f(xfull);
  };

  if (n == 0) {
    out.f = f(xfull);
    out.evaluations = 1;
    out.x = xfull;
    out.status = OptStatus::converged;
    return out;
  }

  std::vector<double> lo(n), hi(n);
  double min_span = 1e300;
  for (int i = 0; i < n; ++i) {
    lo[i] = lower[free_dim[i]];
    hi[i] = upper[free_dim[i]];
    min_span = std::min(min_span, hi[i] - lo[i]);
  }
  double rho = std::min(rho_begin, 0.49 * min_span);
  rho = std::max(rho, rho_end);

  if (npt <= 0) npt = 2 * n + 1;
  npt = std::clamp(npt, n + 2, 2 * n + 1);

  // Initial cloud: center plus +/- rho steps, all inside the box.
  std::vector<double> xc(n);
  for (int i = 0; i < n; ++i) xc[i] = std::clamp(xfull[free_dim[i]], lo[i] + rho, hi[i] - rho);
  std::vector<std::vector<double>> pts;
  pts.push_back(xc);
  for (int i = 0; i < n && static_cast<int>(pts.size()) < npt; ++i) {
    auto p = xc;
    p[i] += rho;
    pts.push_back(p);
    if (static_cast<int>(pts.size()) < npt) {
      p[i] = xc[i] - rho;
      pts.push_back(p);
    }
  }
  npt = static_cast<int>(pts.size());
  const int npt_target = npt;
  std::vector<double> fval(npt);
  for (int i = 0; i < npt; ++i) fval[i] = eval_full(pts[i]);
  int kbest = static_cast<int>(std::min_element(fval.begin(), fval.end()) - fval.begin());

  double delta = rho;
  int repair_axis = 0;
  out.status = OptStatus::max_iter;

  // Fresh +/- radius stencil around the incumbent, used when rho shrinks so
  // the model geometry follows the resolution.
  auto reseed = [&](double radius) {
    std::vector<double> best = pts[kbest];
    double fb = fval[kbest];
    std::vector<double> center = best;
    for (int i = 0; i < n; ++i) center[i] = std::clamp(center[i], lo[i] + radius, hi[i] - radius);
    int want = npt_target;
    pts.clear();
    fval.clear();
    pts.push_back(center);
    fval.push_back(center == best ? fb : eval_full(center));
    for (int i = 0; i < n && static_cast<int>(pts.size()) < want; ++i) {
      auto p = center;
      p[i] += radius;
      pts.push_back(p);
      fval.push_back(eval_full(p));
      if (static_cast<int>(pts.size()) < want) {
        p[i] = center[i] - radius;
        pts.push_back(p);
        fval.push_back(eval_full(p));
      }
    }
    if (center != best) {
      pts.push_back(best);
      fval.push_back(fb);
    }
    npt = static_cast<int>(pts.size());
    kbest = static_cast<int>(std::min_element(fval.begin(), fval.end()) - fval.begin());
  };

  // Lower the resolution floor; true when already at the end of the schedule.
  auto shrink_rho = [&]() -> bool {
    if (rho <= rho_end * 1.000001) return true;
    if (rho <= 16.0 * rho_end)
      rho = rho_end;
    else if (rho <= 250.0 * rho_end)
      rho = std::sqrt(rho * rho_end);
    else
      rho *= 0.1;
    delta = std::max(0.5 * delta, rho);
    reseed(rho);
    return false;
  };

  std::vector<double> grad(n), Hd(static_cast<std::size_t>(n) * n);
  while (out.evaluations < max_evals) {
    const std::vector<double>& xk = pts[kbest];

    // Minimum-Frobenius-norm quadratic model through all points:
    // KKT system over [lambda; c; g].
    int dim = npt + 1 + n;
    std::vector<double> M(static_cast<std::size_t>(dim) * dim, 0.0), rhs(dim, 0.0);
    for (int i = 0; i < npt; ++i) {
      for (int j = 0; j < npt; ++j) {
        double dot = 0.0;
        for (int k = 0; k < n; ++k) dot += (pts[i][k] - xk[k]) * (pts[j][k] - xk[k]);
        M[static_cast<std::size_t>(i) * dim + j] = 0.5 * dot * dot;
      }
      M[static_cast<std::size_t>(i) * dim + npt] = 1.0;
      M[static_cast<std::size_t>(npt) * dim + i] = 1.0;
      for (int k = 0; k < n; ++k) {
        M[static_cast<std::size_t>(i) * dim + npt + 1 + k] = pts[i][k] - xk[k];
        M[static_cast<std::size_t>(npt + 1 + k) * dim + i] = pts[i][k] - xk[k];
      }
      rhs[i] = fval[i];
    }
    std::vector<double> sol = rhs;
    bool ok = dense_solve(M, sol, dim);
    if (!ok) {
      // Degenerate geometry: nudge the farthest point along a cycling axis.
      int far = -1;
      double dmax = -1.0;
      for (int i = 0; i < npt; ++i) {
        if (i == kbest) continue;
        double d2 = 0.0;
        for (int k = 0; k < n; ++k) d2 += (pts[i][k] - xk[k]) * (pts[i][k] - xk[k]);
        if (d2 > dmax) {
          dmax = d2;
          far = i;
        }
      }
      auto p = xk;
      int ax = repair_axis++ % n;
      double up = hi[ax] - p[ax], down = p[ax] - lo[ax];
      p[ax] += (up >= down ? std::min(delta, up) : -std::min(delta, down));
      pts[far] = p;
      fval[far] = eval_full(p);
      if (fval[far] < fval[kbest]) kbest = far;
      continue;
    }

    for (int k = 0; k < n; ++k) grad[k] = sol[npt + 1 + k];
    std::fill(Hd.begin(), Hd.end(), 0.0);
    for (int i = 0; i < npt; ++i) {
      double lam = sol[i];
      if (lam == 0.0) continue;
      for (int a = 0; a < n; ++a) {
        double sa = pts[i][a] - xk[a];
        for (int b = 0; b < n; ++b)
          Hd[static_cast<std::size_t>(a) * n + b] += lam * sa * (pts[i][b] - xk[b]);
      }
    }

    auto model = [&](const std::vector<double>& s) {
      double m = 0.0;
      for (int a = 0; a < n; ++a) {
        m += grad[a] * s[a];
        double hs = 0.0;
        for (int b = 0; b < n; ++b) hs += Hd[static_cast<std::size_t>(a) * n + b] * s[b];
        m += 0.5 * s[a] * hs;
      }
      return m;
    };
    auto clip = [&](std::vector<double>& s) {
      for (int k = 0; k < n; ++k) s[k] = std::clamp(xk[k] + s[k], lo[k], hi[k]) - xk[k];
      double norm = 0.0;
      for (int k = 0; k < n; ++k) norm += s[k] * s[k];
      norm = std::sqrt(norm);
      if (norm > delta && norm > 0.0)
        for (int k = 0; k < n; ++k) s[k] *= delta / norm;
    };

    // Trust-region step: clipped Newton candidate plus a projected-gradient
    // line scan, then keep the best model value.
    std::vector<double> sbest(n, 0.0);
    double mbest = 0.0;
    {
      auto consider = [&](std::vector<double> s) {
        clip(s);
        double m = model(s);
        if (m < mbest) {
          mbest = m;
          sbest = std::move(s);
        }
      };
      std::vector<double> A = Hd, rb(grad);
      for (auto& v : rb) v = -v;
      std::vector<double> Acp = A, rcp = rb;
      if (dense_solve(Acp, rcp, n)) {
        double nnorm = 0.0;
        for (double v : rcp) nnorm += v * v;
        nnorm = std::sqrt(nnorm);
        consider(rcp);
        if (nnorm > 0.0) {
          // partial Newton steps help when the full step leaves the region
          for (double frac : {0.5, 0.25, 2.0}) {
            std::vector<double> s(n);
            for (int k = 0; k < n; ++k) s[k] = frac * rcp[k];
            consider(std::move(s));
          }
        }
      }
      double gnorm = 0.0;
      for (int k = 0; k < n; ++k) gnorm += grad[k] * grad[k];
      gnorm = std::sqrt(gnorm);
      if (gnorm > 0.0) {
        for (int j = -6; j <= 3; ++j) {
          double t = delta / gnorm * std::pow(2.0, j);
          std::vector<double> s(n);
          for (int k = 0; k < n; ++k) s[k] = -t * grad[k];
          consider(std::move(s));
        }
      }
    }

    double snorm = 0.0;
    for (int k = 0; k < n; ++k) snorm += sbest[k] * sbest[k];
    snorm = std::sqrt(snorm);

    if (mbest >= -1e-300 || snorm < 0.5 * rho) {
      // Model predicts no useful progress at this resolution.
      if (shrink_rho()) {
        out.status = OptStatus::converged;
        break;
      }
      continue;
    }

    std::vector<double> trial(n);
    for (int k = 0; k < n; ++k) trial[k] = std::clamp(xk[k] + sbest[k], lo[k], hi[k]);
    double ft = eval_full(trial);
    double actual = fval[kbest] - ft;
    double ratio = actual / (-mbest);

    if (ratio < 0.1)
      delta = std::max(0.5 * snorm, rho);
    else if (ratio > 0.7 && snorm > 0.5 * delta)
      delta = std::min(2.0 * delta, 1e3 * rho_begin);

    // Replace the farthest point from the (possibly new) center.
    int far = -1;
    double dmax = -1.0;
    const std::vector<double>& center = ft < fval[kbest] ? trial : pts[kbest];
    for (int i = 0; i < npt; ++i) {
      if (i == kbest) continue;
      double d2 = 0.0;
      for (int k = 0; k < n; ++k) d2 += (pts[i][k] - center[k]) * (pts[i][k] - center[k]);
      if (d2 > dmax) {
        dmax = d2;
        far = i;
      }
    }
    pts[far] = trial;
    fval[far] = ft;
    bool improved = ft < fval[kbest];
    if (improved) kbest = far;

    // A failed step at the resolution floor ends this rho stage.
    if (!improved && delta <= rho * 1.000001) {
      if (shrink_rho()) {
        out.status = OptStatus::converged;
        break;
      }
    }
  }

  for (int i = 0; i < n; ++i) xfull[free_dim[i]] = pts[kbest][i];
  out.x = xfull;
  out.f = fval[kbest];
  return out;
}

OptResult dfp_bfgs(const ObjectiveND& f, std::span<const double> x0, double grad_step, double tol,
                   int max_iter, std::span<const double> lower, std::span<const double> upper) {
  int n = static_cast<int>(x0.size());
  Boxed boxed{f, lower, upper};
  std::vector<double> scratch;
  auto g = [&](std::span<const double> x) { return boxed(x, scratch); };
  ObjectiveND gfun = g;

  OptResult out;
  std::vector<double> x(x0.begin(), x0.end());
  double fx = g(x);
  ++out.evaluations;
  std::vector<double> grad = finite_diff_gradient(gfun, x, grad_step);
  out.evaluations += 2 * n;

  std::vector<double> Hinv(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) Hinv[static_cast<std::size_t>(i) * n + i] = 1.0;

  std::vector<double> d(n), work(n), xnew(n), gnew(n), s(n), yv(n), hy(n);
  out.status = OptStatus::max_iter;
  for (int iter = 0; iter < max_iter; ++iter) {
    double gmax = 0.0;
    for (int k = 0; k < n; ++k) gmax = std::max(gmax, std::fabs(grad[k]));
    if (gmax < tol) {
      out.status = OptStatus::converged;
      break;
    }

    double dg = 0.0;
    for (int a = 0; a < n; ++a) {
      double v = 0.0;
      for (int b = 0; b < n; ++b) v += Hinv[static_cast<std::size_t>(a) * n + b] * grad[b];
      d[a] = -v;
    }
    for (int k = 0; k < n; ++k) dg += d[k] * grad[k];
    if (dg >= 0.0) {  // lost positive-definiteness; restart from steepest descent
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) Hinv[static_cast<std::size_t>(a) * n + b] = a == b ? 1.0 : 0.0;
      for (int k = 0; k < n; ++k) d[k] = -grad[k];
    }

    auto phi = [&](double alpha) {
      for (int k = 0; k < n; ++k) work[k] = x[k] + alpha * d[k];
      ++out.evaluations;
      return g(work);
    };
    auto br = bracket_minimum(phi, 0.0, 1.0, 60, &out.evaluations);
    if (!br) {
      out.status = OptStatus::bracket_failure;
      break;
    }
    OptResult ls = brent_min(phi, *br, 1e-10, 200);
    out.evaluations += ls.evaluations;
    double alpha = ls.x[0];

    for (int k = 0; k < n; ++k) xnew[k] = x[k] + alpha * d[k];
    double fnew = ls.f;
    gnew = finite_diff_gradient(gfun, xnew, grad_step);
    out.evaluations += 2 * n;

    double sy = 0.0;
    for (int k = 0; k < n; ++k) {
      s[k] = xnew[k] - x[k];
      yv[k] = gnew[k] - grad[k];
      sy += s[k] * yv[k];
    }
    if (sy > 1e-12) {
      double yhy = 0.0;
      for (int a = 0; a < n; ++a) {
        double v = 0.0;
        for (int b = 0; b < n; ++b) v += Hinv[static_cast<std::size_t>(a) * n + b] * yv[b];
        hy[a] = v;
      }
      for (int k = 0; k < n; ++k) yhy += yv[k] * hy[k];
      // BFGS inverse update.
      double c1 = (sy + yhy) / (sy * sy);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          Hinv[static_cast<std::size_t>(a) * n + b] +=
              c1 * s[a] * s[b] - (hy[a] * s[b] + s[a] * hy[b]) / sy;
    }

    bool fstall = std::fabs(fx - fnew) <= tol * (1.0 + std::fabs(fx));
    x = xnew;
    fx = fnew;
    grad = gnew;
    if (fstall) {
      out.status = OptStatus::converged;
      break;
    }
  }

  if (!lower.empty())
    for (int k = 0; k < n; ++k) x[k] = std::clamp(x[k], lower[k], upper[k]);
  out.x = x;
  out.f = fx;
  return out;
}

std::vector<double> finite_diff_gradient(const ObjectiveND& f, std::span<const double> x,
                                         double h) {
  std::vector<double> grad(x.size());
  std::vector<double> p(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double saved = p[i];
    p[i] = saved + h;
    double fp = f(p);
    p[i] = saved - h;
    double fm = f(p);
    p[i] = saved;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace sovdebt
