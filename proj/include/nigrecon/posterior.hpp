#ifndef NIGRECON_POSTERIOR_HPP_
#define NIGRECON_POSTERIOR_HPP_

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "nigrecon/engine.hpp"
#include "nigrecon/matrix.hpp"
#include "nigrecon/mixtures.hpp"
#include "nigrecon/rng.hpp"

namespace nigrecon::posterior {

struct ClimateDraw {
  std::size_t iter = 0;
  Matrix c;  // n x m
};

// Exact draw of the latent path for every dimension given the record's
// K and v: mean by a tridiagonal solve, noise by back-substitution.
ClimateDraw draw_climate(const engine::ChainRecord& record,
                         const std::vector<mixtures::LayerMDP>& mixtures, Rng& rng);

// Splits an IG2(eta, phi) increment over d1 + d2 with total v_total at the
// interior point.  Given the total, Q = phi eta (d1 v - (d1 + d2) v1)^2 /
// (v v1 (v - v1)) is chi-square(1); each Q has two roots, chosen with
// probability proportional to 1 / (d1 (v - v1) + d2 v1).  The pair sums to
// v_total exactly.
std::pair<double, double> ig_bridge_split(double v_total, double d1, double d2, double eta,
                                          double phi, Rng& rng);

// Brownian bridge between two knots separated by variance v1 + v2.
double brownian_bridge_point(double c_left, double c_right, double v1, double v2, Rng& rng);

struct GridSpec {
  double start = 0.0;
  double end = 14.0;
  double step = 0.1;

  std::vector<double> points() const;
};

// Throws std::invalid_argument unless start < end and step > 0.
void validate(const GridSpec& grid);

// Missing (masked) entries are NaN.
struct GridPosterior {
  std::vector<double> grid;         // P points; cell p spans [grid[p], grid[p+1]]
  std::vector<std::size_t> iters;   // R retained iterations
  std::vector<Matrix> c;            // per dimension, R x P
  std::vector<Matrix> vol;          // per dimension, R x (P - 1), sqrt of cell v mass
  double conservation_error = 0.0;  // max relative |sum of allocated v - sum of v|

  std::size_t dims() const { return c.size(); }
};

struct InterpOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Interpolates given climate draws (one per record).  Record r uses the
// stream Rng::substream(seed, r), so the result is independent of the
// thread count.  Throws std::invalid_argument if no grid point falls inside
// any record's chronology.
GridPosterior interpolate(const std::vector<engine::ChainRecord>& records,
                          const std::vector<ClimateDraw>& draws,
                          const engine::ChronologySet& chronologies, const GridSpec& grid,
                          const InterpOptions& options = {});

// Draws the climate for each record and interpolates it, both from the
// record's own stream.
GridPosterior reconstruct(const std::vector<engine::ChainRecord>& records,
                          const std::vector<mixtures::LayerMDP>& mixtures,
                          const engine::ChronologySet& chronologies, const GridSpec& grid,
                          const InterpOptions& options = {});

// `grid_ka,dim,iter,c,vol`; vol belongs to the cell starting at grid_ka and
// missing values are empty fields.
void write_grid(std::ostream& out, const GridPosterior& post);
// `grid_ka,dim,c_mean,c_lo95,c_hi95,vol_lo95,vol_hi95,n_present` with
// type-7 quantiles over the present values.
void write_summary(std::ostream& out, const GridPosterior& post);

}  // namespace nigrecon::posterior

#endif  // NIGRECON_POSTERIOR_HPP_
