#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sovdebt/interpolation.hpp"

using namespace sovdebt;

namespace {

std::vector<double> sample_values(const std::vector<double>& nodes, double (*f)(double)) {
  std::vector<double> v(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) v[i] = f(nodes[i]);
  return v;
}

}  // namespace

TEST_CASE("axis locate brackets and clamps") {
  GridAxis ax = make_axis(0.0, 1.0, 5);
  REQUIRE(ax.size() == 5);
  CHECK(ax.nodes.front() == doctest::Approx(0.0));
  CHECK(ax.nodes.back() == doctest::Approx(1.0));

  for (double x : {-0.5, 0.0, 0.1, 0.25, 0.61, 0.99, 1.0, 3.0}) {
    double t = -1.0;
    int i = ax.locate(x, &t);
    REQUIRE(i >= 0);
    REQUIRE(i <= 3);
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
    double rebuilt = (1.0 - t) * ax.nodes[i] + t * ax.nodes[i + 1];
    double clamped = std::min(std::max(x, 0.0), 1.0);
    CHECK(rebuilt == doctest::Approx(clamped).epsilon(1e-14));
  }
}

TEST_CASE("linear eval is exact on affine data and clamps outside") {
  GridAxis ax = make_axis(-1.0, 2.0, 7);
  std::vector<double> vals(7);
  for (int i = 0; i < 7; ++i) vals[i] = 0.5 - 3.0 * ax.nodes[i];
  const GridAxis axes[] = {ax};
  for (double x : {-1.0, -0.3, 0.0, 0.7321, 1.999, 2.0}) {
    double xq[] = {x};
    CHECK(linear_eval(axes, vals, xq) == doctest::Approx(0.5 - 3.0 * x).epsilon(1e-14));
  }
  double lo[] = {-5.0}, hi[] = {9.0};
  CHECK(linear_eval(axes, vals, lo) == doctest::Approx(0.5 + 3.0).epsilon(1e-14));
  CHECK(linear_eval(axes, vals, hi) == doctest::Approx(0.5 - 6.0).epsilon(1e-14));
}

TEST_CASE("bilinear eval reproduces tensor-linear functions") {
  GridAxis ax0 = make_axis(0.0, 1.0, 4);
  GridAxis ax1 = make_axis(2.0, 3.0, 6);
  auto f = [](double x, double y) { return 1.0 + 2.0 * x - y + 0.5 * x * y; };
  std::vector<double> vals(4 * 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) vals[i * 6 + j] = f(ax0.nodes[i], ax1.nodes[j]);
  const GridAxis axes[] = {ax0, ax1};
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    double x = u(gen), y = 2.0 + u(gen);
    double xq[] = {x, y};
    CHECK(linear_eval(axes, vals, xq) == doctest::Approx(f(x, y)).epsilon(1e-13));
  }
  double out[] = {-1.0, 10.0};
  CHECK(linear_eval(axes, vals, out) == doctest::Approx(f(0.0, 3.0)).epsilon(1e-13));
}

TEST_CASE("trilinear eval reproduces tensor-linear functions") {
  GridAxis ax0 = make_axis(0.0, 1.0, 3);
  GridAxis ax1 = make_axis(0.0, 2.0, 4);
  GridAxis ax2 = make_axis(-1.0, 1.0, 5);
  auto f = [](double x, double y, double w) {
    return 2.0 - x + 3.0 * y + w + x * y - 0.25 * x * w + 0.125 * x * y * w;
  };
  std::vector<double> vals(3 * 4 * 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 5; ++k)
        vals[(i * 4 + j) * 5 + k] = f(ax0.nodes[i], ax1.nodes[j], ax2.nodes[k]);
  const GridAxis axes[] = {ax0, ax1, ax2};
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    double x = u(gen), y = 2.0 * u(gen), w = 2.0 * u(gen) - 1.0;
    double xq[] = {x, y, w};
    CHECK(linear_eval(axes, vals, xq) == doctest::Approx(f(x, y, w)).epsilon(1e-13));
  }
}

TEST_CASE("spline basis interpolates the data at the nodes") {
  GridAxis ax = make_axis(0.0, 2.0, 9);
  SplineBasisAxis basis(ax.nodes);
  CHECK(basis.ncoef() == 11);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> vals(9);
  for (double& v : vals) v = u(gen);
  std::vector<double> coefs(basis.ncoef());
  basis.fit(vals, coefs);
  for (int i = 0; i < 9; ++i)
    CHECK(basis.eval(coefs, ax.nodes[i]) == doctest::Approx(vals[i]).epsilon(1e-12));
}

TEST_CASE("spline basis weights form a partition of unity") {
  SplineBasisAxis basis(make_axis(-1.0, 4.0, 6).nodes);
  for (double x : {-1.0, -0.2, 0.0, 1.3, 2.999, 4.0, 5.0}) {
    SplineBasisAxis::Basis4 b4 = basis.basis(x);
    CHECK(b4.first >= 0);
    CHECK(b4.first + 3 < basis.ncoef());
    CHECK(b4.w[0] + b4.w[1] + b4.w[2] + b4.w[3] == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("natural boundary conditions hold for any fit") {
  GridAxis ax = make_axis(0.5, 3.5, 8);
  SplineBasisAxis basis(ax.nodes);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> vals(8), coefs(basis.ncoef());
  for (double& v : vals) v = u(gen);
  basis.fit(vals, coefs);
  for (double edge : {ax.nodes.front(), ax.nodes.back()}) {
    SplineBasisAxis::Basis4 b2 = basis.basis_d2(edge);
    double d2 = 0.0;
    for (int j = 0; j < 4; ++j) d2 += coefs[b2.first + j] * b2.w[j];
    CHECK(std::fabs(d2) < 1e-9);
  }
}

TEST_CASE("spline reproduces straight lines everywhere") {
  CubicSpline s(make_axis(0.0, 5.0, 6).nodes, sample_values(make_axis(0.0, 5.0, 6).nodes,
                                                            +[](double x) { return 2.0 - 3.0 * x; }));
  for (double x : {0.0, 0.31, 1.77, 2.5, 4.99, 5.0}) {
    CHECK(s(x) == doctest::Approx(2.0 - 3.0 * x).epsilon(1e-12));
  }
}

TEST_CASE("spline error on sin shrinks like the fourth power of the step") {
  // sin'' vanishes at 0 and pi, so the natural end conditions are exact
  auto max_err = [](int n) {
    GridAxis ax = make_axis(0.0, M_PI, n);
    CubicSpline s(ax.nodes, sample_values(ax.nodes, +[](double x) { return std::sin(x); }));
    double worst = 0.0;
    for (int k = 0; k <= 1000; ++k) {
      double x = M_PI * k / 1000.0;
      worst = std::max(worst, std::fabs(s(x) - std::sin(x)));
    }
    return worst;
  };
  double e21 = max_err(21);
  double e41 = max_err(41);
  CHECK(e21 < 1e-5);
  CHECK(e41 < e21 / 8.0);
}

TEST_CASE("surface interpolates nodal data and tensor-linear functions") {
  auto ax0 = std::make_shared<const SplineBasisAxis>(make_axis(0.0, 1.0, 6).nodes);
  auto ax1 = std::make_shared<const SplineBasisAxis>(make_axis(-1.0, 1.0, 5).nodes);

  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> vals(6 * 5);
  for (double& v : vals) v = u(gen);
  SplineSurface s(ax0, ax1, vals);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(s(ax0->nodes()[i], ax1->nodes()[j]) == doctest::Approx(vals[i * 5 + j]).epsilon(1e-11));

  auto f = [](double x, double y) { return 0.25 + x - 2.0 * y + 0.5 * x * y; };
  std::vector<double> lin(6 * 5);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) lin[i * 5 + j] = f(ax0->nodes()[i], ax1->nodes()[j]);
  SplineSurface sl(ax0, ax1, lin);
  for (double x : {0.05, 0.33, 0.92})
    for (double y : {-0.9, 0.1, 0.77})
      CHECK(sl(x, y) == doctest::Approx(f(x, y)).epsilon(1e-11));
}

TEST_CASE("hybrid blend is linear across income") {
  GridAxis income = make_axis(0.8, 1.2, 2);
  std::vector<double> b_nodes = make_axis(0.0, 1.0, 7).nodes;
  auto f0 = +[](double b) { return 1.0 + 0.5 * b; };
  auto f1 = +[](double b) { return -2.0 + 3.0 * b; };
  std::vector<CubicSpline> splines;
  splines.emplace_back(b_nodes, sample_values(b_nodes, f0));
  splines.emplace_back(b_nodes, sample_values(b_nodes, f1));

  for (double b : {0.0, 0.21, 0.68, 1.0}) {
    for (double y : {0.8, 0.95, 1.2}) {
      double t = (y - 0.8) / 0.4;
      double want = (1.0 - t) * f0(b) + t * f1(b);
      CHECK(hybrid_eval(income, splines, b, y) == doctest::Approx(want).epsilon(1e-12));
    }
    // income clamps rather than extrapolates
    CHECK(hybrid_eval(income, splines, b, 0.5) == doctest::Approx(f0(b)).epsilon(1e-12));
    CHECK(hybrid_eval(income, splines, b, 2.0) == doctest::Approx(f1(b)).epsilon(1e-12));
  }
}

TEST_CASE("hybrid blend over surfaces") {
  GridAxis income = make_axis(0.9, 1.1, 3);
  auto axb = std::make_shared<const SplineBasisAxis>(make_axis(0.0, 1.0, 5).nodes);
  auto axa = std::make_shared<const SplineBasisAxis>(make_axis(0.0, 0.2, 4).nodes);
  auto f = [](double b, double a, double y) { return y * (1.0 + b) - 2.0 * a + b * a; };

  std::vector<SplineSurface> surfaces;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> vals(5 * 4);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j)
        vals[i * 4 + j] = f(axb->nodes()[i], axa->nodes()[j], income.nodes[k]);
    surfaces.emplace_back(axb, axa, vals);
  }
  for (double b : {0.1, 0.62}) {
    for (double a : {0.05, 0.17}) {
      for (double y : {0.9, 0.97, 1.033, 1.1}) {
        CHECK(hybrid_eval(income, surfaces, b, a, y) ==
              doctest::Approx(f(b, a, y)).epsilon(1e-11));
      }
    }
  }
}
