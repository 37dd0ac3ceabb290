#include "nigrecon/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nigrecon::dists {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454836;

[[noreturn]] void domain_fail(const std::string& what) {
  throw std::domain_error(what);
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void validate(const IG2Params& p) {
  if (!positive_finite(p.eta) || !positive_finite(p.phi)) {
    std::ostringstream os;
    os << "IG2 parameters must be positive: eta=" << p.eta << " phi=" << p.phi;
    domain_fail(os.str());
  }
}

void validate(const GIGParams& p) {
  const bool ok = std::isfinite(p.lambda) && std::isfinite(p.chi) &&
                  std::isfinite(p.psi) && p.chi >= 0.0 && p.psi >= 0.0 &&
                  (p.chi > 0.0 || p.psi > 0.0) &&
                  !(p.lambda >= 0.0 && p.psi <= 0.0) &&
                  !(p.lambda <= 0.0 && p.chi <= 0.0);
  if (!ok) {
    std::ostringstream os;
    os << "invalid GIG parameters: lambda=" << p.lambda << " chi=" << p.chi
       << " psi=" << p.psi;
    domain_fail(os.str());
  }
}

void validate(const NIGParams& p) {
  if (!std::isfinite(p.mu) || !std::isfinite(p.beta)) {
    domain_fail("NIG location and skew must be finite");
  }
  validate(IG2Params{p.eta, p.phi});
}

void validate(const ZIPParams& p) {
  if (!(p.p_zero >= 0.0 && p.p_zero <= 1.0) || !(p.rate >= 0.0) ||
      !std::isfinite(p.rate)) {
    domain_fail("ZIP requires 0 <= p_zero <= 1 and rate >= 0");
  }
}

void validate(const GammaParams& p) {
  if (!positive_finite(p.shape) || !positive_finite(p.rate)) {
    std::ostringstream os;
    os << "Gamma parameters must be positive: shape=" << p.shape
       << " rate=" << p.rate;
    domain_fail(os.str());
  }
}

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * z * z;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ig_logpdf(double x, double mean, double shape) {
  if (!(x > 0.0)) return kNegInf;
  const double d = x - mean;
  return 0.5 * (std::log(shape) - kLogTwoPi - 3.0 * std::log(x)) -
         shape * d * d / (2.0 * mean * mean * x);
}

double ig_cdf(double x, double mean, double shape) {
  if (!(x > 0.0)) return 0.0;
  const double r = std::sqrt(shape / x);
  const double a = normal_cdf(r * (x / mean - 1.0));
  // exp(2 shape / mean) overflows quickly; combine in log space.
  const double lb = 2.0 * shape / mean;
  const double tail = 0.5 * std::erfc(r * (x / mean + 1.0) / std::numbers::sqrt2);
  const double b = tail > 0.0 ? std::exp(lb + std::log(tail)) : 0.0;
  return std::min(1.0, a + b);
}

double ig_sample(Rng& rng, double mean, double shape) {
  const double z = rng.normal();
  const double y = z * z;
  const double my = mean * y;
  // Roots of the chi-square transform have product mean^2; take the large
  // one in a cancellation-free form and recover the small one from it.
  const double large =
      mean + mean * my / (2.0 * shape) +
      mean / (2.0 * shape) * std::sqrt(4.0 * shape * my + my * my);
  const double small = mean * mean / large;
  return rng.uniform() <= mean / (mean + small) ? small : large;
}

double ig2_logpdf(double v, const IG2Params& p) {
  validate(p);
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << "IG2 density evaluated outside support: v=" << v;
    domain_fail(os.str());
  }
  return ig2_log_kernel(v, p);
}

double ig2_log_kernel(double v, const IG2Params& p) {
  if (!(v > 0.0) || !std::isfinite(v)) return kNegInf;
  const double d = v - p.eta;
  return 0.5 * (std::log(p.phi * p.eta) - kLogTwoPi - 3.0 * std::log(v)) -
         p.phi * d * d / (2.0 * p.eta * v);
}

double ig2_sample(Rng& rng, const IG2Params& p) {
  validate(p);
  return ig_sample(rng, p.eta, p.phi * p.eta);
}

double gamma_logpdf(double x, const GammaParams& p) {
  if (!(x > 0.0)) return kNegInf;
  return p.shape * std::log(p.rate) - std::lgamma(p.shape) +
         (p.shape - 1.0) * std::log(x) - p.rate * x;
}

double gamma_sample(Rng& rng, const GammaParams& p) {
  validate(p);
  return rng.gamma(p.shape, p.rate);
}

double nig_logpdf(double x, const NIGParams& p) {
  validate(p);
  const double delta = std::sqrt(p.phi * p.eta);
  const double gamma = std::sqrt(p.phi / p.eta);
  const double alpha = std::sqrt(gamma * gamma + p.beta * p.beta);
  const double dx = x - p.mu;
  const double q = std::hypot(delta, dx);
  return std::log(alpha * delta / std::numbers::pi) - std::log(q) +
         log_bessel_k(1.0, alpha * q) + p.phi + p.beta * dx;
}

double nig_sample(Rng& rng, const NIGParams& p) {
  const double v = ig2_sample(rng, IG2Params{p.eta, p.phi});
  return p.mu + p.beta * v + std::sqrt(v) * rng.normal();
}

NIGParams nig_at_horizon(const NIGParams& unit, double d) {
  return NIGParams{unit.mu * d, unit.beta, unit.eta * d, unit.phi * d};
}

double zip_logpmf(std::uint64_t y, const ZIPParams& p) {
  validate(p);
  if (y == 0) return std::log(p.p_zero + (1.0 - p.p_zero) * std::exp(-p.rate));
  if (p.rate == 0.0 || p.p_zero == 1.0) return kNegInf;
  const double k = static_cast<double>(y);
  return std::log1p(-p.p_zero) + k * std::log(p.rate) - p.rate -
         std::lgamma(k + 1.0);
}

std::uint64_t zip_sample(Rng& rng, const ZIPParams& p) {
  validate(p);
  if (rng.uniform() < p.p_zero) return 0;
  return rng.poisson(p.rate);
}

BivariateNormal BivariateNormal::from_canonical(
    const std::array<double, 3>& q, const std::array<double, 2>& h) {
  const double det = q[0] * q[2] - q[1] * q[1];
  if (!(q[0] > 0.0) || !(det > 0.0)) {
    domain_fail("bivariate precision is not positive definite");
  }
  BivariateNormal out;
  out.cov = {q[2] / det, -q[1] / det, q[0] / det};
  out.mean = {out.cov[0] * h[0] + out.cov[1] * h[1],
              out.cov[1] * h[0] + out.cov[2] * h[1]};
  return out;
}

std::array<double, 2> BivariateNormal::sample(Rng& rng) const {
  const double l11 = std::sqrt(cov[0]);
  const double l21 = cov[1] / l11;
  const double l22 = std::sqrt(std::max(0.0, cov[2] - l21 * l21));
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  return {mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2};
}

double BivariateNormal::logpdf(const std::array<double, 2>& x) const {
  const double det = cov[0] * cov[2] - cov[1] * cov[1];
  const double d0 = x[0] - mean[0];
  const double d1 = x[1] - mean[1];
  const double quad = (cov[2] * d0 * d0 - 2.0 * cov[1] * d0 * d1 + cov[0] * d1 * d1) / det;
  return -kLogTwoPi - 0.5 * std::log(det) - 0.5 * quad;
}

}  // namespace nigrecon::dists
