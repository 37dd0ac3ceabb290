#include "nigrecon/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nigrecon/io.hpp"
#include "nigrecon/lincore.hpp"
#include "nigrecon/parallel.hpp"

namespace nigrecon::posterior {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool near(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

ClimateDraw draw_climate(const engine::ChainRecord& record,
                         const std::vector<mixtures::LayerMDP>& mixtures, Rng& rng) {
  const std::size_t n = mixtures.size();
  if (record.k.size() != n || record.v.rows() + 1 != n) {
    throw std::invalid_argument("draw_climate: record has " + std::to_string(record.k.size()) +
                                " layers, mixtures have " + std::to_string(n));
  }
  const std::size_t m = record.v.cols();
  ClimateDraw out;
  out.iter = record.iter;
  out.c = Matrix(n, m);
  std::vector<double> tau(n);
  std::vector<double> rhs(n);
  std::vector<double> v(n - 1);
  std::vector<double> z(n);
  std::vector<double> noise(n);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (record.k[i] >= mixtures[i].size()) {
        throw std::invalid_argument("draw_climate: component index out of range at layer " +
                                    std::to_string(i + 1));
      }
      const auto& comp = mixtures[i].components[record.k[i]];
      tau[i] = comp.precision[j];
      rhs[i] = comp.precision[j] * comp.mean[j];
    }
    for (std::size_t i = 0; i + 1 < n; ++i) v[i] = record.v(i, j);
    const auto P = lincore::TriDiagPrecision::assemble(tau, v);
    P.solve_into(rhs, rhs);
    for (auto& x : z) x = rng.normal();
    P.noise_into(z, noise);
    for (std::size_t i = 0; i < n; ++i) out.c(i, j) = rhs[i] + noise[i];
  }
  return out;
}

std::pair<double, double> ig_bridge_split(double v_total, double d1, double d2, double eta,
                                          double phi, Rng& rng) {
  if (!(v_total > 0.0) || !(d1 > 0.0) || !(d2 > 0.0) || !(eta > 0.0) || !(phi > 0.0)) {
    throw std::invalid_argument("ig_bridge_split requires positive arguments");
  }
  const double kappa = phi * eta;
  const double v = v_total;
  const double D = d1 + d2;
  const double a = d1 * v;
  const double z = rng.normal();
  const double q = z * z;
  // kappa (a - D w)^2 = q v w (v - w), a quadratic in w.
  const double A = kappa * D * D + q * v;
  const double B = 2.0 * a * kappa * D + q * v * v;
  const double C = kappa * a * a;
  const double disc = q * v * v * (4.0 * kappa * d1 * d2 * v + q * v * v);
  const double small = 2.0 * C / (B + std::sqrt(disc));
  const double large = std::min(C / (A * small), v);
  const double l_small = d1 * (v - small) + d2 * small;
  const double l_large = d1 * (v - large) + d2 * large;
  double v1 = rng.uniform() * (l_small + l_large) <= l_large ? small : large;
  v1 = std::clamp(v1, std::numeric_limits<double>::min(), std::nextafter(v, 0.0));
  double v2 = v - v1;
  // For v1 < v/2 the subtraction may round; v - v2 is then exact, so the
  // pair adds back to v without error.
  if (v1 < 0.5 * v) v1 = v - v2;
  if (!(v2 > 0.0)) v2 = std::numeric_limits<double>::denorm_min();
  return {v1, v2};
}

double brownian_bridge_point(double c_left, double c_right, double v1, double v2, Rng& rng) {
  const double total = v1 + v2;
  const double w = v1 / total;
  const double var = v1 * v2 / total;
  return c_left + w * (c_right - c_left) + std::sqrt(var) * rng.normal();
}

std::vector<double> GridSpec::points() const {
  validate(*this);
  const auto count = static_cast<std::size_t>(std::floor((end - start) / step + 1e-9));
  std::vector<double> out(count + 1);
  for (std::size_t k = 0; k <= count; ++k) out[k] = start + static_cast<double>(k) * step;
  return out;
}

void validate(const GridSpec& g) {
  if (!std::isfinite(g.start) || !std::isfinite(g.end) || !(g.start < g.end)) {
    throw std::invalid_argument("grid start must be below grid end");
  }
  if (!(g.step > 0.0) || !std::isfinite(g.step)) throw std::invalid_argument("grid step must be positive");
}

namespace {

// One record, one dimension.  Writes P climate values and P - 1 cell
// volatilities and returns the relative conservation error.
double interpolate_path(std::span<const double> t, const std::vector<double>& c,
                        const std::vector<double>& v, double eta, double phi,
                        const std::vector<double>& grid, std::span<double> c_out,
                        std::span<double> vol_out, Rng& rng) {
  const std::size_t n = t.size();
  const std::size_t P = grid.size();
  std::vector<double> mass(P - 1, 0.0);
  double outside = 0.0;
  auto allocate = [&](double lo, double hi, double piece) {
    const double mid = 0.5 * (lo + hi);
    const auto it = std::upper_bound(grid.begin(), grid.end(), mid);
    if (it == grid.begin() || it == grid.end()) {
      outside += piece;
      return;
    }
    mass[static_cast<std::size_t>(it - grid.begin()) - 1] += piece;
  };

  std::fill(c_out.begin(), c_out.end(), kMissing);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      if (near(grid[p], t[i])) c_out[p] = c[i];
    }
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = t[i];
    const double b = t[i + 1];
    double prev = a;
    double c_prev = c[i];
    double rest = v[i];
    auto first = std::upper_bound(grid.begin(), grid.end(), a);
    for (auto it = first; it != grid.end() && *it < b; ++it) {
      const double g = *it;
      if (near(g, a) || near(g, b)) continue;
      const auto [left, right] = ig_bridge_split(rest, g - prev, b - g, eta, phi, rng);
      const double cg = brownian_bridge_point(c_prev, c[i + 1], left, right, rng);
      c_out[static_cast<std::size_t>(it - grid.begin())] = cg;
      allocate(prev, g, left);
      prev = g;
      c_prev = cg;
      rest = right;
    }
    allocate(prev, b, rest);
  }

  double total = outside;
  for (double x : mass) total += x;
  double expected = 0.0;
  for (double x : v) expected += x;

  for (std::size_t p = 0; p + 1 < P; ++p) {
    const bool inside = (grid[p] > t.front() || near(grid[p], t.front())) &&
                        (grid[p + 1] < t.back() || near(grid[p + 1], t.back()));
    vol_out[p] = inside ? std::sqrt(mass[p]) : kMissing;
  }
  return expected > 0.0 ? std::abs(total - expected) / expected : 0.0;
}

GridPosterior interpolate_impl(const std::vector<engine::ChainRecord>& records,
                               const std::vector<ClimateDraw>* given,
                               const std::vector<mixtures::LayerMDP>* mixtures,
                               const engine::ChronologySet& chronologies, const GridSpec& grid,
                               const InterpOptions& options) {
  GridPosterior out;
  out.grid = grid.points();
  if (out.grid.size() < 2) throw std::invalid_argument("grid needs at least two points");
  const std::size_t R = records.size();
  const std::size_t P = out.grid.size();
  const std::size_t m = R ? records.front().v.cols() : 0;
  if (given && given->size() != R) {
    throw std::invalid_argument("interpolate: one climate draw per record is required");
  }
  for (const auto& r : records) {
    if (r.chron_idx >= chronologies.rows()) {
      throw std::invalid_argument("interpolate: record " + std::to_string(r.iter) +
                                  " refers to chronology row " + std::to_string(r.chron_idx) +
                                  " of " + std::to_string(chronologies.rows()));
    }
    if (r.v.rows() + 1 != chronologies.layers() || r.v.cols() != m) {
      throw std::invalid_argument("interpolate: record " + std::to_string(r.iter) +
                                  " does not match the chronology layer count");
    }
    out.iters.push_back(r.iter);
  }
  out.c.assign(m, Matrix(R, P));
  out.vol.assign(m, Matrix(R, P - 1));
  std::vector<double> errors(R, 0.0);
  parallel_for(R, options.threads, [&](std::size_t r) {
    const auto& rec = records[r];
    Rng rng = Rng::substream(options.seed, r);
    const ClimateDraw draw = given ? (*given)[r] : draw_climate(rec, *mixtures, rng);
    const std::size_t n = chronologies.layers();
    if (draw.c.rows() != n || draw.c.cols() != m) {
      throw std::invalid_argument("interpolate: climate draw shape mismatch for record " +
                                  std::to_string(rec.iter));
    }
    const auto t = chronologies.draws.row(rec.chron_idx);
    std::vector<double> c(n);
    std::vector<double> v(n - 1);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) c[i] = draw.c(i, j);
      for (std::size_t i = 0; i + 1 < n; ++i) v[i] = rec.v(i, j);
      const double err = interpolate_path(t, c, v, rec.eta[j], rec.phi[j], out.grid,
                                          out.c[j].row(r), out.vol[j].row(r), rng);
      errors[r] = std::max(errors[r], err);
    }
  });
  for (double e : errors) out.conservation_error = std::max(out.conservation_error, e);
  bool any = false;
  for (const auto& mat : out.c) {
    for (double x : mat.data()) any = any || !std::isnan(x);
  }
  if (!any) throw std::invalid_argument("interpolate: the grid does not overlap any chronology");
  return out;
}

}  // namespace

GridPosterior interpolate(const std::vector<engine::ChainRecord>& records,
                          const std::vector<ClimateDraw>& draws,
                          const engine::ChronologySet& chronologies, const GridSpec& grid,
                          const InterpOptions& options) {
  return interpolate_impl(records, &draws, nullptr, chronologies, grid, options);
}

GridPosterior reconstruct(const std::vector<engine::ChainRecord>& records,
                          const std::vector<mixtures::LayerMDP>& mixtures,
                          const engine::ChronologySet& chronologies, const GridSpec& grid,
                          const InterpOptions& options) {
  return interpolate_impl(records, nullptr, &mixtures, chronologies, grid, options);
}

namespace {

std::string field(double x) { return std::isnan(x) ? std::string() : format_double(x); }

// Type-7 quantile of sorted values.
double quantile(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void write_grid(std::ostream& out, const GridPosterior& post) {
  out << "grid_ka,dim,iter,c,vol\n";
  const std::size_t P = post.grid.size();
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t j = 0; j < post.dims(); ++j) {
      for (std::size_t r = 0; r < post.iters.size(); ++r) {
        const double vol = p + 1 < P ? post.vol[j](r, p) : kMissing;
        out << format_double(post.grid[p]) << ',' << j + 1 << ',' << post.iters[r] << ','
            << field(post.c[j](r, p)) << ',' << field(vol) << '\n';
      }
    }
  }
}

void write_summary(std::ostream& out, const GridPosterior& post) {
  out << "grid_ka,dim,c_mean,c_lo95,c_hi95,vol_lo95,vol_hi95,n_present\n";
  const std::size_t P = post.grid.size();
  std::vector<double> cs;
  std::vector<double> vs;
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t j = 0; j < post.dims(); ++j) {
      cs.clear();
      vs.clear();
      for (std::size_t r = 0; r < post.iters.size(); ++r) {
        if (!std::isnan(post.c[j](r, p))) cs.push_back(post.c[j](r, p));
        if (p + 1 < P && !std::isnan(post.vol[j](r, p))) vs.push_back(post.vol[j](r, p));
      }
      std::sort(cs.begin(), cs.end());
      std::sort(vs.begin(), vs.end());
      double mean = kMissing;
      if (!cs.empty()) {
        mean = 0.0;
        for (double x : cs) mean += x;
        mean /= static_cast<double>(cs.size());
      }
      out << format_double(post.grid[p]) << ',' << j + 1 << ',' << field(mean) << ','
          << field(cs.empty() ? kMissing : quantile(cs, 0.025)) << ','
          << field(cs.empty() ? kMissing : quantile(cs, 0.975)) << ','
          << field(vs.empty() ? kMissing : quantile(vs, 0.025)) << ','
          << field(vs.empty() ? kMissing : quantile(vs, 0.975)) << ',' << cs.size() << '\n';
    }
  }
}

}  // namespace nigrecon::posterior
