#ifndef NIGRECON_MIXTURES_HPP_
#define NIGRECON_MIXTURES_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nigrecon/matrix.hpp"
#include "nigrecon/rng.hpp"

namespace nigrecon::mixtures {

// Monte Carlo draws of c_i | y_i for every layer; layers[i] is S_i x m.
struct MDPSampleSet {
  std::size_t m = 0;
  std::vector<Matrix> layers;

  std::size_t n_layers() const { return layers.size(); }
};

struct MixtureComponent {
  double weight = 0.0;
  std::vector<double> mean;
  std::vector<double> precision;  // diagonal of the precision matrix
  // Row-major m x m precision for full-covariance fits; empty otherwise.
  std::vector<double> full_precision;

  bool diagonal() const { return full_precision.empty(); }
};

struct LayerMDP {
  std::size_t layer_index = 0;  // 1-based
  std::vector<MixtureComponent> components;

  std::size_t dim() const { return components.empty() ? 0 : components[0].mean.size(); }
  std::size_t size() const { return components.size(); }
};

struct EMConfig {
  std::size_t restarts = 10;
  double tol = 1e-8;  // relative change in log-likelihood
  std::size_t max_iter = 2000;
  double var_floor_rel = 1e-6;  // times the per-dimension sample variance
  double min_weight = 1e-3;
  bool full_covariance = false;  // diagnostics only
};

struct EMDiagnostics {
  double loglik = 0.0;
  std::size_t components = 0;  // G actually used after any reduction
  std::size_t iterations = 0;
  std::size_t discarded_restarts = 0;
  std::vector<double> trace;  // log-likelihood per iteration of the winning run
};

// Maximum-likelihood Gaussian mixture by EM with k-means++ seeding and
// `restarts` independent starts.  Components are ordered by weight
// (descending), ties by first mean coordinate.  A start that ends with a
// component below min_weight or a variance below the floor is discarded; if
// every start degenerates G is reduced by one.  Throws std::invalid_argument
// when there are fewer than 10 G samples.
LayerMDP fit_mixture_em(const Matrix& samples, std::size_t G, const EMConfig& config,
                        Rng& rng, EMDiagnostics* diagnostics = nullptr);

// Fits every layer; layer i uses Rng::substream(seed, i), so the result does
// not depend on `threads`.
std::vector<LayerMDP> fit_all(const MDPSampleSet& set, std::size_t G, const EMConfig& config,
                              std::uint64_t seed, unsigned threads,
                              std::vector<EMDiagnostics>* diagnostics = nullptr);

double mixture_logpdf(const LayerMDP& mdp, const std::vector<double>& c);
double component_logpdf(const MixtureComponent& comp, const std::vector<double>& c);
double sample_loglik(const LayerMDP& mdp, const Matrix& samples);

struct SliceComponent {
  double mean;
  double precision;
  double weight;
};

// Coordinate j of every component.  Throws std::invalid_argument for
// full-covariance components, which the marginalised sampler cannot use.
std::vector<SliceComponent> marginal_slices(const LayerMDP& mdp, std::size_t j);

// CSV `layer,sample,c1,...,cm` with contiguous 1-based layers.
MDPSampleSet read_mdp_samples(std::istream& in, const std::string& source);
MDPSampleSet read_mdp_samples_file(const std::string& path);
void write_mdp_samples(std::ostream& out, const MDPSampleSet& set);

// JSON array of {"layer", "components": [{"weight","mean","precision_diag"}]}.
void write_mixtures_json(std::ostream& out, const std::vector<LayerMDP>& layers);
std::vector<LayerMDP> read_mixtures_json(std::istream& in, const std::string& source);
std::vector<LayerMDP> read_mixtures_json_file(const std::string& path);

// Throws std::invalid_argument unless weights sum to one, precisions are
// positive, dimensions agree and layer indices run 1..n.
void validate_layers(const std::vector<LayerMDP>& layers);

}  // namespace nigrecon::mixtures

#endif  // NIGRECON_MIXTURES_HPP_
