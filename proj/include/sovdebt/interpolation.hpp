#pragma once

#include <memory>
#include <span>
#include <vector>

namespace sovdebt {

struct GridAxis {
  std::vector<double> nodes;  // strictly increasing, at least 2

  void validate() const;
  int size() const { return static_cast<int>(nodes.size()); }

  // Bracketing interval for x, clamped to the grid; t is the weight on the
  // upper node, forced into [0,1] so queries never extrapolate.
  int locate(double x, double* t) const;
};

GridAxis make_axis(double lo, double hi, int n);

// Multilinear interpolation on a 1-3d tensor grid, values row-major with the
// last axis fastest. Out-of-range queries clamp to the boundary.
double linear_eval(std::span<const GridAxis> axes, std::span<const double> values,
                   std::span<const double> x);

// Cubic B-spline basis on a fixed set of nodes: clamped knots at the ends,
// natural (zero second derivative) boundary conditions, n+2 coefficients.
// The collocation matrix depends only on the nodes, so it is factored once
// (banded LU with partial pivoting) and reused across fits.
class SplineBasisAxis {
 public:
  explicit SplineBasisAxis(std::vector<double> nodes);

  int ncoef() const { return n_ + 2; }
  const std::vector<double>& nodes() const { return nodes_; }

  // Solves the collocation system; coefs must have ncoef() slots.
  void fit(std::span<const double> values, std::span<double> coefs) const;

  // The four basis functions overlapping x (clamped into the node range).
  struct Basis4 {
    int first;  // index of the first nonzero coefficient
    double w[4];
  };
  Basis4 basis(double x) const;
  Basis4 basis_d2(double x) const;  // second-derivative weights

  double eval(std::span<const double> coefs, double x) const {
    Basis4 s = basis(x);
    const double* c = coefs.data() + s.first;
    return c[0] * s.w[0] + c[1] * s.w[1] + c[2] * s.w[2] + c[3] * s.w[3];
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> knots_;
  int n_ = 0;
  std::vector<double> lu_;    // banded factor storage
  std::vector<int> lu_piv_;
  void factor();

 public:
  // Exposed for the tensor fit; rhs length ncoef(), solved in place.
  void solve_collocation(std::span<double> rhs) const;
};

class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::shared_ptr<const SplineBasisAxis> axis, std::span<const double> values);
  CubicSpline(const std::vector<double>& nodes, std::span<const double> values);

  double operator()(double x) const { return axis_->eval(coefs_, x); }
  std::span<const double> coefs() const { return coefs_; }
  const SplineBasisAxis& axis() const { return *axis_; }

 private:
  std::shared_ptr<const SplineBasisAxis> axis_;
  std::vector<double> coefs_;
};

// Tensor-product bicubic surface; natural boundary conditions per dimension.
class SplineSurface {
 public:
  SplineSurface() = default;
  SplineSurface(std::shared_ptr<const SplineBasisAxis> ax0,
                std::shared_ptr<const SplineBasisAxis> ax1,
                std::span<const double> values);  // n0*n1 row-major

  double operator()(double x0, double x1) const;
  const SplineBasisAxis& axis0() const { return *ax0_; }
  const SplineBasisAxis& axis1() const { return *ax1_; }
  std::span<const double> coefs() const { return coefs_; }  // (n0+2) x (n1+2)

 private:
  std::shared_ptr<const SplineBasisAxis> ax0_, ax1_;
  std::vector<double> coefs_;
  int nc1_ = 0;
};

// Linear blend across income of per-income-node debt approximants.
double hybrid_eval(const GridAxis& income_axis, std::span<const CubicSpline> debt_splines,
                   double b, double y);
double hybrid_eval(const GridAxis& income_axis, std::span<const SplineSurface> debt_surfaces,
                   double b, double a, double y);

}  // namespace sovdebt
