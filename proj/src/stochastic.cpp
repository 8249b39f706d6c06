#include "sovdebt/stochastic.hpp"

#include <cmath>
#include <stdexcept>

#include "sovdebt/rng.hpp"

namespace sovdebt {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double horner8(const double (&c)[8], double r) {
  double s = c[7];
  for (int i = 6; i >= 0; --i) s = s * r + c[i];
  return s;
}

}  // namespace

double inverse_normal_cdf(double p) {
  // Wichura (1988), algorithm AS241, PPND16.
  static const double a[8] = {3.3871328727963666080e0, 1.3314166789178437745e2,
                              1.9715909503065514427e3, 1.3731693765509461125e4,
                              4.5921953931549871457e4, 6.7265770927008700853e4,
                              3.3430575583588128105e4, 2.5090809287301226727e3};
  static const double b[8] = {1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
                              5.3941960214247511077e3, 2.1213794301586595867e4,
                              3.9307895800092710610e4, 2.8729085735721942674e4,
                              5.2264952788528545610e3};
  static const double c[8] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                              5.76949722146069140550e0, 3.64784832476320460504e0,
                              1.27045825245236838258e0, 2.41780725177450611770e-1,
                              2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static const double d[8] = {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
                              6.89767334985100004550e-1, 1.48103976427480074590e-1,
                              1.51986665636164571966e-2, 5.47593808499534494600e-4,
                              1.05075007164441684324e-9};
  static const double e[8] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                              1.78482653991729133580e0, 2.96560571828504891230e-1,
                              2.65321895265761230930e-2, 1.24266094738807843860e-3,
                              2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static const double f[8] = {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
                              1.48753612908506148525e-2, 7.86869131145613259100e-4,
                              1.84631831751005468180e-5, 1.42151175831644588870e-7,
                              2.04426310338993978564e-15};

  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p outside (0,1)");

  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q * horner8(a, r) / horner8(b, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = horner8(c, r) / horner8(d, r);
  } else {
    r -= 5.0;
    val = horner8(e, r) / horner8(f, r);
  }
  return q < 0.0 ? -val : val;
}

double Ar1Params::unconditional_sd() const {
  return sigma_eps / std::sqrt(1.0 - rho * rho);
}

double Ar1Params::unconditional_mean_income() const {
  double su = unconditional_sd();
  return std::exp(mu + 0.5 * su * su);
}

void Ar1Params::validate() const {
  if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("ar1: |rho| must be < 1");
  if (!(sigma_eps >= 0.0)) throw std::invalid_argument("ar1: sigma_eps must be >= 0");
  if (!std::isfinite(mu)) throw std::invalid_argument("ar1: mu must be finite");
}

IncomeGrid tauchen_discretize(const Ar1Params& p, int n, double width) {
  p.validate();
  if (n < 2) throw std::invalid_argument("tauchen: need at least 2 nodes");
  if (!(width > 0.0)) throw std::invalid_argument("tauchen: width must be positive");

  double su = p.unconditional_sd();
  double lo = p.mu - width * su;
  double hi = p.mu + width * su;
  double step = (hi - lo) / (n - 1);

  IncomeGrid g;
  g.nodes.resize(n);
  std::vector<double> x(n);
  for (int j = 0; j < n; ++j) {
    x[j] = lo + step * j;
    g.nodes[j] = std::exp(x[j]);
  }

  g.transition.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double m = (1.0 - p.rho) * p.mu + p.rho * x[i];
    double* row = g.transition.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      if (j == 0) {
        row[j] = normal_cdf((x[0] - m + 0.5 * step) / p.sigma_eps);
      } else if (j == n - 1) {
        row[j] = 1.0 - normal_cdf((x[n - 1] - m - 0.5 * step) / p.sigma_eps);
      } else {
        row[j] = normal_cdf((x[j] - m + 0.5 * step) / p.sigma_eps) -
                 normal_cdf((x[j] - m - 0.5 * step) / p.sigma_eps);
      }
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += row[j];
    for (int j = 0; j < n; ++j) row[j] /= s;
  }
  return g;
}

IncomeGrid log_spaced_income_grid(const Ar1Params& p, int n, double width) {
  p.validate();
  if (n < 2) throw std::invalid_argument("income grid: need at least 2 nodes");
  double su = p.unconditional_sd();
  double lo = p.mu - width * su;
  double step = 2.0 * width * su / (n - 1);
  IncomeGrid g;
  g.nodes.resize(n);
  for (int j = 0; j < n; ++j) g.nodes[j] = std::exp(lo + step * j);
  return g;
}

Quadrature gauss_legendre(int n, double width) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least 1 node");
  if (!(width > 0.0)) throw std::invalid_argument("gauss_legendre: width must be positive");

  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);

  // Nodes of P_n on [-1,1] by Newton iteration, then mapped to [-width, width].
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double xg = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * xg * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (xg * p1 - p2) / (xg * xg - 1.0);
      double dx = p1 / pp;
      xg -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    double wg = 2.0 * width / ((1.0 - xg * xg) * pp * pp);
    q.nodes[i] = -width * xg;
    q.nodes[n - 1 - i] = width * xg;
    q.weights[i] = wg;
    q.weights[n - 1 - i] = wg;
  }

  // Fold in the Gaussian density and renormalize so truncation keeps mass 1.
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    q.weights[i] *= normal_pdf(q.nodes[i]);
    s += q.weights[i];
  }
  for (int i = 0; i < n; ++i) q.weights[i] /= s;
  return q;
}

double conditional_expectation(const std::function<double(double)>& f, double y,
                               const Ar1Params& p, const Quadrature& quad) {
  if (!(y > 0.0)) throw std::domain_error("conditional_expectation: income must be positive");
  double m = (1.0 - p.rho) * p.mu + p.rho * std::log(y);
  double acc = 0.0;
  for (int k = 0; k < quad.size(); ++k) {
    double v = f(std::exp(m + p.sigma_eps * quad.nodes[k]));
    if (!std::isfinite(v)) return v;
    acc += quad.weights[k] * v;
  }
  return acc;
}

std::vector<double> simulate_income_path(const Ar1Params& p, std::uint64_t seed, std::size_t t) {
  p.validate();
  std::vector<double> path(t);
  if (t == 0) return path;
  Rng rng(seed);
  double ln_y = std::log(p.unconditional_mean_income());
  path[0] = std::exp(ln_y);
  for (std::size_t i = 1; i < t; ++i) {
    ln_y = (1.0 - p.rho) * p.mu + p.rho * ln_y + p.sigma_eps * rng.normal();
    path[i] = std::exp(ln_y);
  }
  return path;
}

}  // namespace sovdebt
