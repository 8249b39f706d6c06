#include "sovdebt/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sovdebt {

void GridAxis::validate() const {
  if (nodes.size() < 2) throw std::invalid_argument("axis: need at least 2 nodes");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i] > nodes[i - 1])) throw std::invalid_argument("axis: nodes must increase");
}

int GridAxis::locate(double x, double* t) const {
  int n = size();
  if (x <= nodes.front()) {
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

GridAxis make_axis(double lo, double hi, int n) {
  GridAxis ax;
  ax.nodes.resize(n);
  for (int i = 0; i < n; ++i) ax.nodes[i] = lo + (hi - lo) * i / (n - 1);
  ax.nodes.back() = hi;
  ax.validate();
  return ax;
}

double linear_eval(std::span<const GridAxis> axes, std::span<const double> values,
                   std::span<const double> x) {
  int d = static_cast<int>(axes.size());
  if (d < 1 || d > 3) throw std::invalid_argument("linear_eval: 1 to 3 dimensions");
  if (x.size() != axes.size()) throw std::invalid_argument("linear_eval: query size mismatch");

  int idx[3] = {0, 0, 0};
  double t[3] = {0.0, 0.0, 0.0};
  std::size_t stride[3] = {1, 1, 1};
  std::size_t total = 1;
  for (int k = d - 1; k >= 0; --k) {
    stride[k] = total;
    total *= axes[k].size();
  }
  if (values.size() != total) throw std::invalid_argument("linear_eval: values size mismatch");
  for (int k = 0; k < d; ++k) idx[k] = axes[k].locate(x[k], &t[k]);

  double acc = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    std::size_t off = 0;
    for (int k = 0; k < d; ++k) {
      int up = (corner >> k) & 1;
      w *= up ? t[k] : 1.0 - t[k];
      off += (idx[k] + up) * stride[k];
    }
    acc += w * values[off];
  }
  return acc;
}

// ---- cubic B-spline machinery ----

namespace {

// Banded LU with partial pivoting, LAPACK-style storage. Element (i,j) of the
// matrix lives at ab[(kl+ku + i - j) * n + j]; the top kl rows are fill.
struct Band {
  int n, kl, ku, ld;
  std::vector<double>& ab;
  double& at(int stor_row, int col) { return ab[static_cast<std::size_t>(stor_row) * n + col]; }
};

void band_factor(int n, int kl, int ku, std::vector<double>& ab, std::vector<int>& piv) {
  int kv = kl + ku;
  Band m{n, kl, ku, 2 * kl + ku + 1, ab};
  piv.assign(n, 0);
  int ju = 0;
  for (int j = 0; j < n; ++j) {
    int km = std::min(kl, n - 1 - j);
    int jp = 0;
    double best = std::fabs(m.at(kv, j));
    for (int k = 1; k <= km; ++k) {
      double v = std::fabs(m.at(kv + k, j));
      if (v > best) {
        best = v;
        jp = k;
      }
    }
    piv[j] = j + jp;
    if (m.at(kv + jp, j) == 0.0) throw std::runtime_error("spline: singular collocation matrix");
    ju = std::max(ju, std::min(j + ku + jp, n - 1));
    if (jp != 0)
      for (int c = j; c <= ju; ++c) std::swap(m.at(kv + j - c, c), m.at(kv + j + jp - c, c));
    double pivval = m.at(kv, j);
    for (int k = 1; k <= km; ++k) m.at(kv + k, j) /= pivval;
    for (int c = j + 1; c <= ju; ++c) {
      double f = m.at(kv + j - c, c);
      if (f != 0.0)
        for (int k = 1; k <= km; ++k) m.at(kv + k + j - c, c) -= m.at(kv + k, j) * f;
    }
  }
}

void band_solve(int n, int kl, int ku, const std::vector<double>& ab, const std::vector<int>& piv,
                std::span<double> b) {
  int kv = kl + ku;
  auto at = [&](int r, int c) { return ab[static_cast<std::size_t>(r) * n + c]; };
  for (int j = 0; j < n - 1; ++j) {
    if (piv[j] != j) std::swap(b[j], b[piv[j]]);
    int km = std::min(kl, n - 1 - j);
    for (int k = 1; k <= km; ++k) b[j + k] -= at(kv + k, j) * b[j];
  }
  for (int j = n - 1; j >= 0; --j) {
    b[j] /= at(kv, j);
    int top = std::max(0, j - kv);
    for (int i = top; i < j; ++i) b[i] -= at(kv + i - j, j) * b[j];
  }
}

constexpr int kDeg = 3;

int find_span(const std::vector<double>& knots, int ncoef, double x) {
  // knots[span] <= x < knots[span+1], span in [kDeg, ncoef-1]
  if (x >= knots[ncoef]) return ncoef - 1;
  if (x <= knots[kDeg]) return kDeg;
  int lo = kDeg, hi = ncoef;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    if (x < knots[mid])
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

void basis_funs(const std::vector<double>& knots, int span, double x, double* out) {
  double left[kDeg + 1], right[kDeg + 1];
  out[0] = 1.0;
  for (int j = 1; j <= kDeg; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

// Basis derivatives up to order 2 (The NURBS Book, A2.3).
void basis_ders(const std::vector<double>& knots, int span, double x, double ders[3][kDeg + 1]) {
  double ndu[kDeg + 1][kDeg + 1];
  double left[kDeg + 1], right[kDeg + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= kDeg; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= kDeg; ++j) ders[0][j] = ndu[j][kDeg];

  double a[2][kDeg + 1];
  for (int r = 0; r <= kDeg; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= 2; ++k) {
      double d = 0.0;
      int rk = r - k, pk = kDeg - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      int j1 = rk >= -1 ? 1 : -rk;
      int j2 = r - 1 <= pk ? k - 1 : kDeg - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double f = kDeg;
  for (int k = 1; k <= 2; ++k) {
    for (int j = 0; j <= kDeg; ++j) ders[k][j] *= f;
    f *= kDeg - k;
  }
}

}  // namespace

SplineBasisAxis::SplineBasisAxis(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  n_ = static_cast<int>(nodes_.size());
  if (n_ < 4) throw std::invalid_argument("spline: need at least 4 nodes");
  for (int i = 1; i < n_; ++i)
    if (!(nodes_[i] > nodes_[i - 1])) throw std::invalid_argument("spline: nodes must increase");

  // Clamped knot vector: each end node repeated degree+1 times.
  knots_.assign(kDeg + 1, nodes_.front());
  for (int i = 1; i < n_ - 1; ++i) knots_.push_back(nodes_[i]);
  for (int i = 0; i <= kDeg; ++i) knots_.push_back(nodes_.back());
  factor();
}

void SplineBasisAxis::factor() {
  int nc = ncoef();
  const int kl = 3, ku = 3;
  lu_.assign(static_cast<std::size_t>(2 * kl + ku + 1) * nc, 0.0);
  int kv = kl + ku;
  auto put = [&](int row, int col, double v) {
    lu_[static_cast<std::size_t>(kv + row - col) * nc + col] = v;
  };

  // Row 0 and row nc-1: natural end conditions. Rows 1..n_: interpolation.
  double ders[3][kDeg + 1];
  {
    int span = find_span(knots_, nc, nodes_.front());
    basis_ders(knots_, span, nodes_.front(), ders);
    for (int k = 0; k <= kDeg; ++k) put(0, span - kDeg + k, ders[2][k]);
  }
  for (int i = 0; i < n_; ++i) {
    int span = find_span(knots_, nc, nodes_[i]);
    double w[kDeg + 1];
    basis_funs(knots_, span, nodes_[i], w);
    for (int k = 0; k <= kDeg; ++k) put(i + 1, span - kDeg + k, w[k]);
  }
  {
    int span = find_span(knots_, nc, nodes_.back());
    basis_ders(knots_, span, nodes_.back(), ders);
    for (int k = 0; k <= kDeg; ++k) put(nc - 1, span - kDeg + k, ders[2][k]);
  }
  band_factor(nc, kl, ku, lu_, lu_piv_);
}

void SplineBasisAxis::solve_collocation(std::span<double> rhs) const {
  band_solve(ncoef(), 3, 3, lu_, lu_piv_, rhs);
}

void SplineBasisAxis::fit(std::span<const double> values, std::span<double> coefs) const {
  if (static_cast<int>(values.size()) != n_) throw std::invalid_argument("spline fit: size mismatch");
  if (static_cast<int>(coefs.size()) != ncoef()) throw std::invalid_argument("spline fit: coef size");
  coefs[0] = 0.0;
  std::copy(values.begin(), values.end(), coefs.begin() + 1);
  coefs[ncoef() - 1] = 0.0;
  solve_collocation(coefs);
}

SplineBasisAxis::Basis4 SplineBasisAxis::basis(double x) const {
  x = std::clamp(x, nodes_.front(), nodes_.back());
  int span = find_span(knots_, ncoef(), x);
  Basis4 out;
  out.first = span - kDeg;
  basis_funs(knots_, span, x, out.w);
  return out;
}

SplineBasisAxis::Basis4 SplineBasisAxis::basis_d2(double x) const {
  x = std::clamp(x, nodes_.front(), nodes_.back());
  int span = find_span(knots_, ncoef(), x);
  double ders[3][kDeg + 1];
  basis_ders(knots_, span, x, ders);
  Basis4 out;
  out.first = span - kDeg;
  for (int k = 0; k <= kDeg; ++k) out.w[k] = ders[2][k];
  return out;
}

CubicSpline::CubicSpline(std::shared_ptr<const SplineBasisAxis> axis,
                         std::span<const double> values)
    : axis_(std::move(axis)), coefs_(axis_->ncoef()) {
  axis_->fit(values, coefs_);
}

CubicSpline::CubicSpline(const std::vector<double>& nodes, std::span<const double> values)
    : CubicSpline(std::make_shared<SplineBasisAxis>(nodes), values) {}

SplineSurface::SplineSurface(std::shared_ptr<const SplineBasisAxis> ax0,
                             std::shared_ptr<const SplineBasisAxis> ax1,
                             std::span<const double> values)
    : ax0_(std::move(ax0)), ax1_(std::move(ax1)) {
  int n0 = static_cast<int>(ax0_->nodes().size());
  int n1 = static_cast<int>(ax1_->nodes().size());
  if (static_cast<int>(values.size()) != n0 * n1)
    throw std::invalid_argument("surface fit: size mismatch");
  int nc0 = ax0_->ncoef(), nc1 = ax1_->ncoef();
  nc1_ = nc1;

  // Fit along axis1 per row, then along axis0 per coefficient column.
  std::vector<double> stage(static_cast<std::size_t>(n0) * nc1);
  for (int i = 0; i < n0; ++i)
    ax1_->fit(values.subspan(static_cast<std::size_t>(i) * n1, n1),
              std::span<double>(stage.data() + static_cast<std::size_t>(i) * nc1, nc1));

  coefs_.assign(static_cast<std::size_t>(nc0) * nc1, 0.0);
  std::vector<double> col(nc0);
  for (int j = 0; j < nc1; ++j) {
    col[0] = 0.0;
    for (int i = 0; i < n0; ++i) col[i + 1] = stage[static_cast<std::size_t>(i) * nc1 + j];
    col[nc0 - 1] = 0.0;
    ax0_->solve_collocation(col);
    for (int i = 0; i < nc0; ++i) coefs_[static_cast<std::size_t>(i) * nc1 + j] = col[i];
  }
}

double SplineSurface::operator()(double x0, double x1) const {
  auto b0 = ax0_->basis(x0);
  auto b1 = ax1_->basis(x1);
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double* row = coefs_.data() + static_cast<std::size_t>(b0.first + i) * nc1_ + b1.first;
    acc += b0.w[i] * (row[0] * b1.w[0] + row[1] * b1.w[1] + row[2] * b1.w[2] + row[3] * b1.w[3]);
  }
  return acc;
}

double hybrid_eval(const GridAxis& income_axis, std::span<const CubicSpline> debt_splines,
                   double b, double y) {
  double t;
  int j = income_axis.locate(y, &t);
  return (1.0 - t) * debt_splines[j](b) + t * debt_splines[j + 1](b);
}

double hybrid_eval(const GridAxis& income_axis, std::span<const SplineSurface> debt_surfaces,
                   double b, double a, double y) {
  double t;
  int j = income_axis.locate(y, &t);
  return (1.0 - t) * debt_surfaces[j](b, a) + t * debt_surfaces[j + 1](b, a);
}

}  // namespace sovdebt
