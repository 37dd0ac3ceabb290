#ifndef NIGRECON_ENGINE_HPP_
#define NIGRECON_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nigrecon/icecore.hpp"
#include "nigrecon/lincore.hpp"
#include "nigrecon/matrix.hpp"
#include "nigrecon/mixtures.hpp"
#include "nigrecon/rng.hpp"

namespace nigrecon::engine {

// R draws of the n layer ages (ka BP); every row strictly increasing.
struct ChronologySet {
  Matrix draws;

  std::size_t rows() const { return draws.rows(); }
  std::size_t layers() const { return draws.cols(); }
};

// Throws std::invalid_argument naming the first non-monotone row.
void validate(const ChronologySet& set);
// CSV with header t1,...,tn and one draw per row.
ChronologySet read_chronologies(std::istream& in, const std::string& source);
ChronologySet read_chronologies_file(const std::string& path);
void write_chronologies(std::ostream& out, const ChronologySet& set);

struct EngineConfig {
  std::size_t iters = 100000;
  std::size_t burnin = 20000;
  std::size_t thin = 40;
  std::vector<double> eta;  // one per dimension; empty means 2.66 each
  std::vector<double> phi;  // one per dimension; empty means 15.33 each
  bool fix_hyper = true;
  icecore::IceHyper hyper;  // Gamma priors used when fix_hyper is false
  double proposal_sd = 0.5;  // log-scale random walk
  bool adapt = true;         // Robbins-Monro during burn-in only
  double target_accept = 0.44;
  bool update_indicators = true;
  bool resample_chronology = true;
  bool random_scan = false;  // diagnostics only
  std::uint64_t seed = 1;
  unsigned threads = 1;  // concurrent dimensions within a sweep
};

struct ChainRecord {
  std::size_t iter = 0;
  std::size_t chron_idx = 0;  // 0-based row of the chronology file
  Matrix v;                   // (n-1) x m
  std::vector<std::size_t> k;  // 0-based component per layer
  std::vector<double> eta;
  std::vector<double> phi;
};

// Per-layer component parameters in engine layout.
struct LayerTable {
  std::vector<double> log_weight;  // G_i
  std::vector<double> weight;
  Matrix mean;       // G_i x m
  Matrix precision;  // G_i x m
};

struct AcceptStats {
  Matrix proposed;  // (n-1) x m, counted after burn-in
  Matrix accepted;
  std::size_t indicator_proposed = 0;
  std::size_t indicator_accepted = 0;
};

struct EngineState {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<LayerTable> layers;
  std::vector<std::size_t> k;
  std::size_t chron_idx = 0;
  std::vector<double> delta;  // n-1
  std::vector<double> eta;
  std::vector<double> phi;
  std::vector<lincore::MarginalCache> cache;  // one per dimension
  Matrix log_sd;                              // (n-1) x m proposal scales
  std::vector<Rng> dim_rng;                   // volatility streams, one per dimension
  AcceptStats stats;
  bool counting = false;

  double v(std::size_t i, std::size_t j) const { return cache[j].v()[i]; }
};

// K at each layer's heaviest component, chronology row 0, v at its prior
// mean eta_j Delta_i.  Throws std::invalid_argument naming the offending
// layer on any dimension mismatch.
EngineState init_state(const std::vector<mixtures::LayerMDP>& mixtures,
                       const ChronologySet& chronologies, const EngineConfig& config);

// Metropolis-Hastings on log v_ij with the rank-one marginal ratio.
bool update_volatility(EngineState& state, std::size_t i, std::size_t j, Rng& rng);
// Independence proposal from the layer weights; the weights cancel.
bool update_indicator(EngineState& state, std::size_t i, Rng& rng);
// Uniform redraw of the chronology row; v and K are left alone.
void resample_chronology(EngineState& state, const ChronologySet& chronologies, Rng& rng);
// Gibbs draws of eta_j then phi_j given column j of v and the current Delta.
void update_hyper(EngineState& state, const icecore::IceHyper& hyper, Rng& rng);

// Log target (up to a constant) for the current state.
double log_target(const EngineState& state);

ChainRecord snapshot(const EngineState& state, std::size_t iter);

using RecordSink = std::function<void(const ChainRecord&)>;

// Runs the sampler.  Retained records go to `sink` when given, otherwise
// into the returned vector.  `final_state` receives the end state.
std::vector<ChainRecord> run(const std::vector<mixtures::LayerMDP>& mixtures,
                             const ChronologySet& chronologies, const EngineConfig& config,
                             const RecordSink& sink = {}, EngineState* final_state = nullptr);

// CSV `iter,chron_idx,k_1..k_n,v_1_1..v_{n-1}_m,eta_1..eta_m,phi_1..phi_m`
// with 1-based k.
std::string chain_header(std::size_t n, std::size_t m);
std::string chain_row(const ChainRecord& r);
std::vector<ChainRecord> read_chain(std::istream& in, const std::string& source);
std::vector<ChainRecord> read_chain_file(const std::string& path);

}  // namespace nigrecon::engine

#endif  // NIGRECON_ENGINE_HPP_
