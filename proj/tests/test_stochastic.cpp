#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "sovdebt/rng.hpp"
#include "sovdebt/stochastic.hpp"

using namespace sovdebt;

namespace {

Ar1Params calibrated_ar1() {
  Ar1Params a;
  a.rho = 0.948503;
  a.sigma_eps = 0.027092;
  a.mu = -0.5 * a.sigma_eps * a.sigma_eps;
  return a;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("inverse normal cdf matches mpmath references") {
  // mpmath: sqrt(2)*erfinv(2p-1), 50 digit working precision
  struct Ref {
    double p, x;
  };
  const Ref refs[] = {
      {0.5, 0.0},
      {0.25, -0.6744897501960817432},
      {0.75, 0.6744897501960817432},
      {0.975, 1.9599639845400542355},
      {0.001, -3.0902323061678135415},
      {1e-10, -6.3613409024040562047},
      {1e-30, -11.464024688443615727},
      {0.3, -0.52440051270804078404},
      {0.841344746068542948585232545632, 1.0},  // Phi(1)
  };
  for (const Ref& ref : refs) {
    double got = inverse_normal_cdf(ref.p);
    if (ref.x == 0.0) {
      CHECK(std::fabs(got) < 1e-15);
    } else {
      CHECK(got == doctest::Approx(ref.x).epsilon(1e-14));
    }
  }
}

TEST_CASE("inverse normal cdf round-trips through the cdf") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
    double x = inverse_normal_cdf(p);
    CHECK(normal_cdf(x) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("inverse normal cdf rejects p outside (0,1)") {
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), std::domain_error);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), std::domain_error);
  CHECK_THROWS_AS(inverse_normal_cdf(-0.1), std::domain_error);
  CHECK_THROWS_AS(inverse_normal_cdf(1.1), std::domain_error);
}

TEST_CASE("ar1 derived quantities") {
  Ar1Params a = calibrated_ar1();
  CHECK(a.unconditional_sd() == doctest::Approx(0.085526276084128822).epsilon(1e-14));
  CHECK(a.unconditional_mean_income() == doctest::Approx(1.0032958029730955).epsilon(1e-14));
}

TEST_CASE("ar1 validation") {
  Ar1Params a = calibrated_ar1();
  CHECK_NOTHROW(a.validate());
  a.sigma_eps = 0.0;  // degenerate chain is fine at this layer
  CHECK_NOTHROW(a.validate());
  a.sigma_eps = -1e-3;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = calibrated_ar1();
  a.rho = 1.0;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = calibrated_ar1();
  a.mu = std::nan("");
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
}

TEST_CASE("tauchen 5-node chain matches the frozen reference") {
  // Recomputed independently (mpmath): width 3, calibrated AR(1).
  const double want_nodes[5] = {0.77341011870940300649, 0.87927603081884016202,
                                0.99963307909994428429, 1.1364648390338269694,
                                1.2920264018504449567};
  const double want_p[5][5] = {
      {0.96994270901862558, 0.030057290962831574, 1.8542847382259173e-11,
       3.6827135125505093e-30, 0.0},
      {0.0045070711904220619, 0.97864979822830316, 0.016843130577810765,
       3.4640126928138115e-12, 2.1982384298277274e-31},
      {6.1044489291235781e-13, 0.0089504333340807041, 0.9820991333306177,
       0.0089504333340807041, 6.1044489291235781e-13},
      {2.1982384298277274e-31, 3.4640126928138115e-12, 0.016843130577810765,
       0.97864979822830316, 0.0045070711904220619},
      {0.0, 3.6827135125505093e-30, 1.8542847382259173e-11, 0.030057290962831574,
       0.96994270901862558}};

  IncomeGrid g = tauchen_discretize(calibrated_ar1(), 5, 3.0);
  REQUIRE(g.size() == 5);
  for (int j = 0; j < 5; ++j)
    CHECK(g.nodes[j] == doctest::Approx(want_nodes[j]).epsilon(1e-13));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(std::fabs(g.prob(i, j) - want_p[i][j]) < 1e-13);
}

TEST_CASE("tauchen production-size chain is a proper stochastic matrix") {
  IncomeGrid g = tauchen_discretize(calibrated_ar1(), 200, 3.0);
  REQUIRE(g.size() == 200);
  for (int i = 0; i < 200; ++i) {
    double s = 0.0;
    for (int j = 0; j < 200; ++j) {
      CHECK(g.prob(i, j) >= 0.0);
      s += g.prob(i, j);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // log-equally spaced, strictly increasing nodes
  double step = std::log(g.nodes[1]) - std::log(g.nodes[0]);
  for (int j = 1; j < 200; ++j) {
    CHECK(g.nodes[j] > g.nodes[j - 1]);
    CHECK(std::log(g.nodes[j]) - std::log(g.nodes[j - 1]) ==
          doctest::Approx(step).epsilon(1e-10));
  }
}

TEST_CASE("tauchen input checking") {
  CHECK_THROWS_AS(tauchen_discretize(calibrated_ar1(), 1, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(tauchen_discretize(calibrated_ar1(), 5, 0.0), std::invalid_argument);
}

TEST_CASE("log spaced income grid matches tauchen nodes") {
  Ar1Params a = calibrated_ar1();
  IncomeGrid dense = log_spaced_income_grid(a, 7, 3.0);
  IncomeGrid markov = tauchen_discretize(a, 7, 3.0);
  REQUIRE(dense.size() == 7);
  CHECK(dense.transition.empty());
  for (int j = 0; j < 7; ++j)
    CHECK(dense.nodes[j] == doctest::Approx(markov.nodes[j]).epsilon(1e-14));
  double su = a.unconditional_sd();
  CHECK(dense.nodes.front() == doctest::Approx(std::exp(a.mu - 3.0 * su)).epsilon(1e-14));
  CHECK(dense.nodes.back() == doctest::Approx(std::exp(a.mu + 3.0 * su)).epsilon(1e-14));
}

TEST_CASE("gauss-legendre 5-point rule uses the classical nodes") {
  Quadrature q = gauss_legendre(5, 4.0);
  REQUIRE(q.size() == 5);
  CHECK(q.nodes[0] == doctest::Approx(-4.0 * 0.9061798459386640).epsilon(1e-12));
  CHECK(q.nodes[1] == doctest::Approx(-4.0 * 0.5384693101056831).epsilon(1e-12));
  CHECK(std::fabs(q.nodes[2]) < 1e-14);
  CHECK(q.nodes[3] == doctest::Approx(4.0 * 0.5384693101056831).epsilon(1e-12));
  CHECK(q.nodes[4] == doctest::Approx(4.0 * 0.9061798459386640).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) {
    CHECK(q.weights[i] > 0.0);
    CHECK(q.weights[i] == doctest::Approx(q.weights[4 - i]).epsilon(1e-13));
  }
}

TEST_CASE("gauss-legendre weights integrate the truncated normal") {
  Quadrature q = gauss_legendre(200, 4.0);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, sexp = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    s0 += q.weights[i];
    s1 += q.weights[i] * q.nodes[i];
    s2 += q.weights[i] * q.nodes[i] * q.nodes[i];
    sexp += q.weights[i] * std::exp(0.25 * q.nodes[i]);
  }
  CHECK(s0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::fabs(s1) < 1e-14);
  // mpmath: second moment of the standard normal truncated to [-4,4]
  CHECK(s2 == doctest::Approx(0.99892929037247382).epsilon(1e-13));
  CHECK(std::fabs(s2 - 0.9989) < 5e-5);
  // mpmath: E exp(0.25 x) over the same truncation
  CHECK(sexp == doctest::Approx(1.0317065065845253).epsilon(1e-13));
}

TEST_CASE("gauss-legendre input checking") {
  CHECK_THROWS_AS(gauss_legendre(0, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(gauss_legendre(5, -1.0), std::invalid_argument);
}

TEST_CASE("conditional expectation against the lognormal reference") {
  Ar1Params a = calibrated_ar1();
  Quadrature q = gauss_legendre(200, 4.0);
  // mpmath: E[y'|y=1.05] with the +-4 sigma truncation
  double got = conditional_expectation([](double yn) { return yn; }, 1.05, a, q);
  CHECK(got == doctest::Approx(1.0477293652392252).epsilon(1e-13));

  double c = conditional_expectation([](double) { return 7.25; }, 0.9, a, q);
  CHECK(c == doctest::Approx(7.25).epsilon(1e-14));

  double inf = conditional_expectation(
      [](double) { return -std::numeric_limits<double>::infinity(); }, 1.0, a, q);
  CHECK(std::isinf(inf));
  CHECK(inf < 0.0);

  CHECK_THROWS_AS(conditional_expectation([](double yn) { return yn; }, 0.0, a, q),
                  std::domain_error);
}

TEST_CASE("income path starts at the unconditional mean") {
  Ar1Params a = calibrated_ar1();
  auto path = simulate_income_path(a, 99, 5);
  REQUIRE(path.size() == 5);
  CHECK(path[0] == doctest::Approx(a.unconditional_mean_income()).epsilon(1e-14));
  CHECK(simulate_income_path(a, 1, 0).empty());
  CHECK(simulate_income_path(a, 1, 1).size() == 1);
}

TEST_CASE("income path is the exact recursion when shocks vanish") {
  Ar1Params a = calibrated_ar1();
  a.sigma_eps = 0.0;  // mu kept from the stochastic calibration
  auto path = simulate_income_path(a, 7, 4);
  double ln_y = std::log(a.unconditional_mean_income());
  for (int t = 1; t < 4; ++t) {
    ln_y = (1.0 - a.rho) * a.mu + a.rho * ln_y;
    CHECK(path[t] == doctest::Approx(std::exp(ln_y)).epsilon(1e-14));
  }
}

TEST_CASE("income path seeding is deterministic") {
  Ar1Params a = calibrated_ar1();
  auto p1 = simulate_income_path(a, 1234, 50);
  auto p2 = simulate_income_path(a, 1234, 50);
  auto p3 = simulate_income_path(a, 1235, 50);
  CHECK(p1 == p2);
  CHECK(p1 != p3);
}

TEST_CASE("long income path tracks the stationary distribution") {
  Ar1Params a = calibrated_ar1();
  auto path = simulate_income_path(a, 20150814, 200000);
  double m = 0.0;
  for (double y : path) m += std::log(y);
  m /= static_cast<double>(path.size());
  double v = 0.0;
  for (double y : path) v += (std::log(y) - m) * (std::log(y) - m);
  v /= static_cast<double>(path.size() - 1);
  double su = a.unconditional_sd();
  CHECK(std::fabs(m - a.mu) < 0.01);
  CHECK(std::sqrt(v) == doctest::Approx(su).epsilon(0.05));
}
