#ifndef NIGRECON_ICECORE_HPP_
#define NIGRECON_ICECORE_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nigrecon/dists.hpp"
#include "nigrecon/rng.hpp"

namespace nigrecon::icecore {

// A precisely dated series; t strictly increasing.
struct SeriesData {
  std::vector<double> t;
  std::vector<double> o;

  std::size_t size() const { return t.size(); }
  std::vector<double> increments() const;  // x_i = o_i - o_{i-1}
  std::vector<double> deltas() const;      // t_i - t_{i-1}
};

// Which psi weight the v_i conditional uses.  `derived` follows from the
// increment likelihood (beta multiplies v_i); `printed` uses (beta Delta_i)^2.
enum class PsiVariant { derived, printed };

struct IceHyper {
  double a_eta = 0.01;
  double b_eta = 0.01;
  double a_phi = 0.01;
  double b_phi = 0.01;
  double tau_mu = 0.01;
  double tau_beta = 0.01;
  PsiVariant psi = PsiVariant::derived;
};

struct IceState {
  double mu = 0.0;
  double beta = 0.0;
  double eta = 1.0;
  double phi = 1.0;
  std::vector<double> v;
};

// Complete conditionals.  The eta and phi ones depend on the data only
// through v and Delta and are shared with the marginalised engine.
dists::GIGParams eta_conditional(double phi, std::span<const double> v,
                                 std::span<const double> delta, double a_eta, double b_eta);
// Throws std::runtime_error if the rate falls below b_phi, which the AM-GM
// bound rules out in exact arithmetic.
dists::GammaParams phi_conditional(double eta, std::span<const double> v,
                                   std::span<const double> delta, double a_phi, double b_phi);
dists::GIGParams v_conditional(double x, double delta, double mu, double beta, double eta,
                               double phi, PsiVariant psi = PsiVariant::derived);
dists::BivariateNormal mu_beta_conditional(std::span<const double> x,
                                           std::span<const double> delta,
                                           std::span<const double> v, double tau_mu,
                                           double tau_beta);

enum class UpdateOrder { standard, reversed };

// One sweep: eta, phi, every v_i, then (mu, beta).  `reversed` runs the
// blocks backwards; it leaves the target unchanged and exists for checks.
IceState gibbs_step(const IceState& state, const SeriesData& data, const IceHyper& hyper,
                    Rng& rng, UpdateOrder order = UpdateOrder::standard);

struct McmcSettings {
  std::size_t iters = 100000;
  std::size_t burnin = 20000;
  std::size_t thin = 80;
};

// mu = beta = 0, eta from the mean squared increment per unit time, phi = 1,
// v at its prior mean.
IceState initial_state(const SeriesData& data);

// Returns the retained states (iterations burnin+thin, burnin+2 thin, ...).
// `sink`, if given, receives each retained state as it is produced instead of
// the returned vector.
std::vector<IceState> run_icecore(const SeriesData& data, const IceHyper& hyper,
                                  const McmcSettings& mcmc, Rng& rng,
                                  const std::function<void(std::size_t, const IceState&)>& sink = {});

// CSV `time_ka,value`, sorted by time on load; duplicate times are an error.
// With `standardize` the values are shifted and scaled to mean 0, sd 1.
SeriesData read_series(std::istream& in, const std::string& source, bool standardize);
SeriesData read_series_file(const std::string& path, bool standardize);

}  // namespace nigrecon::icecore

#endif  // NIGRECON_ICECORE_HPP_
