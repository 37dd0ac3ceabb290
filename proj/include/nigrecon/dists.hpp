#ifndef NIGRECON_DISTS_HPP_
#define NIGRECON_DISTS_HPP_

#include <array>
#include <cstdint>

#include "nigrecon/rng.hpp"

namespace nigrecon::dists {

// Inverse Gaussian in the (eta, phi) form: mean eta, shape phi * eta, so
// the variance is eta^2 / phi.  Over a horizon d the increment law is
// IG2(eta * d, phi * d); the family is closed under addition.
struct IG2Params {
  double eta;
  double phi;
};

// Generalised Inverse Gaussian, density proportional to
//   x^(lambda - 1) exp(-(chi / x + psi * x) / 2).
struct GIGParams {
  double lambda;
  double chi;
  double psi;
};

// Normal-Inverse-Gaussian as the mixture x | v ~ N(mu + beta v, v),
// v ~ IG2(eta, phi).
struct NIGParams {
  double mu;
  double beta;
  double eta;
  double phi;
};

struct ZIPParams {
  double p_zero;
  double rate;
};

struct GammaParams {
  double shape;
  double rate;
};

// Each throws std::domain_error when the invariants of the type fail.
void validate(const IG2Params& p);
void validate(const GIGParams& p);
void validate(const NIGParams& p);
void validate(const ZIPParams& p);
void validate(const GammaParams& p);

// log K_nu(x) for x > 0, valid far outside the range where K_nu itself is
// representable.
double log_bessel_k(double nu, double x);

double normal_logpdf(double x, double mean, double sd);
double normal_cdf(double x);

// Standard Inverse Gaussian IG(mean, shape).
double ig_logpdf(double x, double mean, double shape);
double ig_cdf(double x, double mean, double shape);
// Michael-Schucany-Haas transformation with root selection.
double ig_sample(Rng& rng, double mean, double shape);

// Throws std::domain_error for v <= 0 or invalid parameters.
double ig2_logpdf(double v, const IG2Params& p);
// Same density without argument checks; -inf outside the support.  Intended
// for Metropolis-Hastings ratios where proposals may leave the support.
double ig2_log_kernel(double v, const IG2Params& p);
double ig2_sample(Rng& rng, const IG2Params& p);

double gig_logpdf(double x, const GIGParams& p);
double gig_sample(Rng& rng, const GIGParams& p);
// E[X] = sqrt(chi/psi) K_{lambda+1}(w) / K_lambda(w), w = sqrt(chi psi).
double gig_mean(const GIGParams& p);
double gig_variance(const GIGParams& p);

double gamma_logpdf(double x, const GammaParams& p);
double gamma_sample(Rng& rng, const GammaParams& p);

double nig_logpdf(double x, const NIGParams& p);
double nig_sample(Rng& rng, const NIGParams& p);
// Parameters of the increment over a horizon of length d.
NIGParams nig_at_horizon(const NIGParams& unit, double d);

double zip_logpmf(std::uint64_t y, const ZIPParams& p);
std::uint64_t zip_sample(Rng& rng, const ZIPParams& p);

// Bivariate normal given its precision matrix Q and the linear term h, so
// mean = Q^{-1} h and covariance = Q^{-1}.
struct BivariateNormal {
  std::array<double, 2> mean;
  std::array<double, 3> cov;  // (c11, c12, c22)

  static BivariateNormal from_canonical(const std::array<double, 3>& precision,
                                        const std::array<double, 2>& linear);
  std::array<double, 2> sample(Rng& rng) const;
  double logpdf(const std::array<double, 2>& x) const;
};

}  // namespace nigrecon::dists

#endif  // NIGRECON_DISTS_HPP_
