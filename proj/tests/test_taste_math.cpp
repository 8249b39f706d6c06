#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sovdebt/solver_taste.hpp"

using namespace sovdebt;

TEST_CASE("logsumexp reduces to the max without smoothing") {
  CHECK(logsumexp_value(3.0, 1.0, 0.0) == 3.0);
  CHECK(logsumexp_value(-5.0, -2.0, 0.0) == -2.0);
  CHECK(logsumexp_value(1.0, 1.0, 0.0) == 1.0);
}

TEST_CASE("logsumexp matches the direct formula and stays stable") {
  CHECK(logsumexp_value(0.0, 0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  double want = 0.3 + 0.05 * std::log1p(std::exp((0.1 - 0.3) / 0.05));
  CHECK(logsumexp_value(0.3, 0.1, 0.05) == doctest::Approx(want).epsilon(1e-15));
  CHECK(logsumexp_value(0.1, 0.3, 0.05) == doctest::Approx(want).epsilon(1e-15));
  // huge gaps must not overflow or produce NaN
  CHECK(logsumexp_value(-1e300, 0.0, 0.003) == doctest::Approx(0.0));
  CHECK(std::isfinite(logsumexp_value(-1e10, -1.0, 1e-6)));
}

TEST_CASE("logsumexp is bounded by max plus sigma log 2") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (double sigma : {1e-6, 1e-3, 0.003, 0.1, 1.0}) {
    for (int k = 0; k < 200; ++k) {
      double a = u(gen), b = u(gen);
      double m = std::max(a, b);
      double lse = logsumexp_value(a, b, sigma);
      CHECK(lse >= m);
      CHECK(lse <= m + sigma * std::log(2.0) + 1e-15);
    }
  }
  // smoothing grows with sigma
  CHECK(logsumexp_value(1.0, 0.0, 0.01) < logsumexp_value(1.0, 0.0, 0.1));
}

TEST_CASE("default probability is the logistic in the value gap") {
  CHECK(default_probability(-1.0, -0.5, 0.0) == 1.0);
  CHECK(default_probability(-0.5, -1.0, 0.0) == 0.0);
  CHECK(default_probability(-1.0, -1.0, 0.0) == 0.0);  // ties repay

  double want = 1.0 / (1.0 + std::exp(((-1.0) - (-1.001)) / 0.003));
  CHECK(default_probability(-1.0, -1.001, 0.003) == doctest::Approx(want).epsilon(1e-14));
  CHECK(default_probability(-1.0, -1.0, 0.003) == doctest::Approx(0.5).epsilon(1e-14));

  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    double a = u(gen), b = u(gen);
    double p = default_probability(a, b, 0.05);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p + default_probability(b, a, 0.05) == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(default_probability(0.0, 1000.0, 0.003) == doctest::Approx(1.0));
  CHECK(default_probability(1000.0, 0.0, 0.003) == doctest::Approx(0.0));
  CHECK(default_probability(-2.0, -1.9, 0.003) >
        default_probability(-2.0, -1.95, 0.003));
}

TEST_CASE("choice densities are proper distributions") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(-2.0, -1.0);
  for (double sigma : {1e-12, 1e-4, 0.003, 0.5}) {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(12);
      for (double& x : v) x = u(gen);
      ChoiceDensityResult d = choice_density(v, sigma);
      REQUIRE(d.probs.size() == v.size());
      double s = 0.0;
      for (double pr : d.probs) {
        CHECK(pr >= 0.0);
        s += pr;
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
      CHECK_FALSE(d.degenerate);
    }
  }
}

TEST_CASE("choice density limits and ratios") {
  std::vector<double> v = {-1.5, -1.2, -1.9, -1.2};
  ChoiceDensityResult hard = choice_density(v, 0.0);
  CHECK(hard.probs[1] == 1.0);  // first argmax on ties
  CHECK(hard.probs[0] == 0.0);
  CHECK(hard.probs[3] == 0.0);

  std::vector<double> eq(4, -1.0);
  ChoiceDensityResult flat = choice_density(eq, 0.003);
  for (double pr : flat.probs) CHECK(pr == doctest::Approx(0.25).epsilon(1e-13));

  ChoiceDensityResult soft = choice_density(v, 0.1);
  double want_log_ratio = (v[0] - v[1]) / 0.1;
  CHECK(std::log(soft.probs[0] / soft.probs[1]) ==
        doctest::Approx(want_log_ratio).epsilon(1e-10));

  std::vector<double> pen(3, -1e12);
  CHECK(choice_density(pen, 0.003).degenerate);
  CHECK(choice_density(std::vector<double>{}, 0.003).probs.empty());
}

TEST_CASE("window length rule") {
  CHECK(taste_window_length(350, 0.003) == 105);   // ceil(100*350*0.003)
  CHECK(taste_window_length(350, 1e-4) == 4);      // ceil(3.5)
  CHECK(taste_window_length(350, 1.0) == 174);     // capped at n_b/2 - 1
  CHECK(taste_window_length(350, 0.0) == 1);       // floored
  CHECK(taste_window_length(350, 1e-12) == 1);
  CHECK(taste_window_length(30, 0.003) == 9);
  CHECK(taste_window_length(8, 1.0) == 3);
  CHECK(taste_window_length(4, 1e-9) == 1);
  CHECK(taste_window_length(2, 0.5) == 1);  // degenerate grids still get one point
}
