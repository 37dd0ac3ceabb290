#ifndef NIGRECON_VALIDATE_HPP_
#define NIGRECON_VALIDATE_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nigrecon/engine.hpp"
#include "nigrecon/matrix.hpp"
#include "nigrecon/mixtures.hpp"
#include "nigrecon/rng.hpp"

namespace nigrecon::validate {

enum class Scenario { s1, s2, s3, s4a, s4b };

// "1", "2", "3", "4a", "4b"; parse throws std::invalid_argument.
std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);
std::string scenario_detail(Scenario s);
// Components fitted to the importance samples: 5, or 2 for scenario 3.
std::size_t scenario_components(Scenario s);

struct SimOptions {
  std::size_t n = 100;
  std::size_t m = 3;
  // Scenario 1: y ~ N(c, sd = delta^{-1/2}).  With variance_reading the
  // variance is delta^{-1/2} instead.
  bool variance_reading = false;
  // Scenario 1: use this precision for every layer instead of U(0.02, 2).
  double fixed_precision = 0.0;
};

struct Simulation {
  Scenario scenario = Scenario::s1;
  std::vector<double> eta;  // truth
  std::vector<double> phi;
  std::vector<double> engine_eta;  // handed to the engine (biased in 4a/4b)
  std::vector<double> engine_phi;
  Matrix v;  // (n-1) x m
  Matrix c;  // n x m, c_1 = 0
  Matrix y;  // n x m (counts for the ZIP scenarios)
  std::vector<double> precision;  // scenario 1: per-layer Gaussian precision of y
  std::array<double, 3> p_zero{};  // ZIP scenarios
  std::array<double, 3> a{};
};

// ZIP rates sqrt(a1 c1^2 + a2 c2^2), sqrt(a1 c1^2 + a3 c3^2),
// sqrt(a1 c1^2 + a2 c2^2 + a3 c3^2).
std::array<double, 3> zip_rates(const std::array<double, 3>& a, std::span<const double> c);

// Unit time steps throughout.  The ZIP scenarios require m = 3.
Simulation simulate_scenario(Scenario s, Rng& rng, const SimOptions& options = {});

// Log-likelihood of the layer's pseudo data as a function of c.
using LayerLikelihood = std::function<double(std::span<const double>)>;
LayerLikelihood layer_likelihood(const Simulation& sim, std::size_t i);

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

// Box around layer i's true climate: half_width times the sd of a unit
// increment, sqrt(eta_j), in each dimension.  A box spanning the whole
// climate range would admit the mirror images created by the even ZIP
// rates, which the chain cannot cross.
Box truth_box(const Simulation& sim, std::size_t i, double half_width = 5.0);

struct ImportanceResult {
  Matrix samples;  // S x m
  double ess = 0.0;
  bool flagged = false;  // ESS below 50
};

// Sampling-importance-resampling: S uniform proposals on the box, then
// `keep` systematic-resampled draws (S when zero).  Throws
// std::invalid_argument if S < 2000.
ImportanceResult importance_mdp(const LayerLikelihood& loglik, const Box& box, std::size_t S,
                                Rng& rng, std::size_t keep = 0);

struct PipelineConfig {
  std::size_t sir_proposals = 20000;
  std::size_t sir_keep = 2000;  // resampled draws handed to EM
  double box_half_width = 5.0;
  mixtures::EMConfig em{3, 1e-6};
  std::size_t iters = 10000;
  std::size_t burnin = 2000;
  std::size_t thin = 10;
  SimOptions sim;
};

struct ReplicateResult {
  std::size_t inside90 = 0;
  std::size_t inside50 = 0;
  std::size_t total = 0;
  std::size_t flagged_layers = 0;
  bool failed = false;
  std::string error;
};

// One replicate from its own stream Rng::substream(seed', index), where seed'
// mixes the master seed with the scenario.
ReplicateResult run_replicate(Scenario s, std::size_t index, std::uint64_t seed,
                              const PipelineConfig& config);

struct CoverageReport {
  Scenario scenario = Scenario::s1;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  std::size_t inside90 = 0;
  std::size_t inside50 = 0;
  std::size_t total = 0;
  std::size_t flagged_layers = 0;

  double cov90() const { return total ? static_cast<double>(inside90) / total : 0.0; }
  double cov50() const { return total ? static_cast<double>(inside50) / total : 0.0; }
};

// Failed replicates are counted and skipped; the others are pooled over
// every (layer, dimension, replicate).
CoverageReport coverage_report(Scenario s, std::size_t replicates, const PipelineConfig& config,
                               std::uint64_t seed, unsigned threads = 1);

// `scenario,detail,cov90,cov50,replicates`
void write_report(std::ostream& out, const std::vector<CoverageReport>& reports);

}  // namespace nigrecon::validate

#endif  // NIGRECON_VALIDATE_HPP_
