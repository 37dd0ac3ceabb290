#include "nigrecon/icecore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nigrecon/io.hpp"

namespace nigrecon::icecore {

std::vector<double> SeriesData::increments() const {
  std::vector<double> x(o.size() > 0 ? o.size() - 1 : 0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = o[i + 1] - o[i];
  return x;
}

std::vector<double> SeriesData::deltas() const {
  std::vector<double> d(t.size() > 0 ? t.size() - 1 : 0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = t[i + 1] - t[i];
  return d;
}

dists::GIGParams eta_conditional(double phi, std::span<const double> v,
                                 std::span<const double> delta, double a_eta, double b_eta) {
  double u1 = 0.0;
  double u3 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    u1 += v[i];
    u3 += delta[i] * delta[i] / v[i];
  }
  return {0.5 * static_cast<double>(v.size()) + a_eta, phi * u1, phi * u3 + 2.0 * b_eta};
}

dists::GammaParams phi_conditional(double eta, std::span<const double> v,
                                   std::span<const double> delta, double a_phi, double b_phi) {
  double u1 = 0.0;
  double u3 = 0.0;
  double sum_delta = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    u1 += v[i];
    u3 += delta[i] * delta[i] / v[i];
    sum_delta += delta[i];
  }
  const double u2 = sum_delta - b_phi;
  const double rate = u1 / (2.0 * eta) - u2 + 0.5 * u3 * eta;
  // Each term v/(2 eta) + eta Delta^2/(2 v) >= Delta, so rate >= b_phi up to
  // rounding in the sums.
  const double slack = 1e-9 * (u1 / (2.0 * eta) + 0.5 * u3 * eta + b_phi);
  if (!(rate >= b_phi - slack) || !(rate > 0.0)) {
    std::ostringstream os;
    os << "phi conditional has rate " << rate << " below b_phi=" << b_phi << " (u1=" << u1
       << " u2=" << u2 << " u3=" << u3 << " eta=" << eta << ')';
    throw std::runtime_error(os.str());
  }
  return {0.5 * static_cast<double>(v.size()) + a_phi, rate};
}

dists::GIGParams v_conditional(double x, double delta, double mu, double beta, double eta,
                               double phi, PsiVariant psi) {
  const double r = x - mu * delta;
  const double skew = psi == PsiVariant::derived ? beta * beta : beta * beta * delta * delta;
  return {-1.0, r * r + phi * eta * delta * delta, skew + phi / eta};
}

dists::BivariateNormal mu_beta_conditional(std::span<const double> x,
                                           std::span<const double> delta,
                                           std::span<const double> v, double tau_mu,
                                           double tau_beta) {
  double q11 = tau_mu;
  double q12 = 0.0;
  double q22 = tau_beta;
  double h1 = 0.0;
  double h2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    q11 += delta[i] * delta[i] / v[i];
    q12 += delta[i];
    q22 += v[i];
    h1 += delta[i] * x[i] / v[i];
    h2 += x[i];
  }
  return dists::BivariateNormal::from_canonical({q11, q12, q22}, {h1, h2});
}

namespace {

struct Prepared {
  std::vector<double> x;
  std::vector<double> delta;
};

void step_eta(IceState& s, const Prepared& p, const IceHyper& h, Rng& rng) {
  s.eta = dists::gig_sample(rng, eta_conditional(s.phi, s.v, p.delta, h.a_eta, h.b_eta));
}

void step_phi(IceState& s, const Prepared& p, const IceHyper& h, Rng& rng) {
  s.phi = dists::gamma_sample(rng, phi_conditional(s.eta, s.v, p.delta, h.a_phi, h.b_phi));
}

void step_v(IceState& s, const Prepared& p, const IceHyper& h, Rng& rng) {
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    s.v[i] = dists::gig_sample(
        rng, v_conditional(p.x[i], p.delta[i], s.mu, s.beta, s.eta, s.phi, h.psi));
  }
}

void step_mu_beta(IceState& s, const Prepared& p, const IceHyper& h, Rng& rng) {
  const auto mb = mu_beta_conditional(p.x, p.delta, s.v, h.tau_mu, h.tau_beta).sample(rng);
  s.mu = mb[0];
  s.beta = mb[1];
}

IceState sweep(const IceState& state, const Prepared& p, const IceHyper& h, Rng& rng,
               UpdateOrder order) {
  IceState s = state;
  if (order == UpdateOrder::standard) {
    step_eta(s, p, h, rng);
    step_phi(s, p, h, rng);
    step_v(s, p, h, rng);
    step_mu_beta(s, p, h, rng);
  } else {
    step_mu_beta(s, p, h, rng);
    step_v(s, p, h, rng);
    step_phi(s, p, h, rng);
    step_eta(s, p, h, rng);
  }
  return s;
}

void check_data(const SeriesData& data) {
  if (data.t.size() != data.o.size()) throw std::invalid_argument("series: t and o differ in length");
  if (data.size() < 3) throw std::invalid_argument("series: need at least 3 observations");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data.o[i]) || !std::isfinite(data.t[i])) {
      throw std::invalid_argument("series: non-finite value");
    }
    if (i > 0 && !(data.t[i] > data.t[i - 1])) {
      throw std::invalid_argument("series: times must be strictly increasing");
    }
  }
}

}  // namespace

IceState gibbs_step(const IceState& state, const SeriesData& data, const IceHyper& hyper,
                    Rng& rng, UpdateOrder order) {
  const Prepared p{data.increments(), data.deltas()};
  if (state.v.size() != p.x.size()) throw std::invalid_argument("gibbs_step: v has wrong length");
  return sweep(state, p, hyper, rng, order);
}

IceState initial_state(const SeriesData& data) {
  check_data(data);
  const auto x = data.increments();
  const auto d = data.deltas();
  double ss = 0.0;
  double span = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss += x[i] * x[i];
    span += d[i];
  }
  IceState s;
  s.eta = std::max(ss / span, 1e-6);
  s.phi = 1.0;
  s.v.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s.v[i] = s.eta * d[i];
  return s;
}

std::vector<IceState> run_icecore(const SeriesData& data, const IceHyper& hyper,
                                  const McmcSettings& mcmc, Rng& rng,
                                  const std::function<void(std::size_t, const IceState&)>& sink) {
  check_data(data);
  if (mcmc.thin == 0) throw std::invalid_argument("run_icecore: thin must be positive");
  if (mcmc.iters < mcmc.burnin) throw std::invalid_argument("run_icecore: iters < burnin");
  const Prepared p{data.increments(), data.deltas()};
  IceState s = initial_state(data);
  std::vector<IceState> out;
  for (std::size_t it = 1; it <= mcmc.iters; ++it) {
    s = sweep(s, p, hyper, rng, UpdateOrder::standard);
    if (it > mcmc.burnin && (it - mcmc.burnin) % mcmc.thin == 0) {
      if (sink) {
        sink(it, s);
      } else {
        out.push_back(s);
      }
    }
  }
  return out;
}

SeriesData read_series(std::istream& in, const std::string& source, bool standardize) {
  const CsvTable t = read_csv(in, source);
  const std::size_t ct = t.column("time_ka");
  const std::size_t cv = t.column("value");
  std::vector<std::pair<double, double>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double time = t.number(r, ct);
    const double value = t.number(r, cv);
    if (!std::isfinite(time) || !std::isfinite(value)) t.fail(r, "non-finite value");
    rows.emplace_back(time, value);
  }
  std::sort(rows.begin(), rows.end());
  SeriesData data;
  for (const auto& [time, value] : rows) {
    if (!data.t.empty() && time == data.t.back()) {
      throw InputError(source + ": duplicate time " + format_double(time));
    }
    data.t.push_back(time);
    data.o.push_back(value);
  }
  if (data.size() < 3) throw InputError(source + ": need at least 3 observations");
  if (standardize) {
    const double n = static_cast<double>(data.size());
    const double mean = std::accumulate(data.o.begin(), data.o.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : data.o) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0)) throw InputError(source + ": constant series cannot be standardised");
    for (double& v : data.o) v = (v - mean) / sd;
  }
  return data;
}

SeriesData read_series_file(const std::string& path, bool standardize) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_series(in, path, standardize);
}

}  // namespace nigrecon::icecore
