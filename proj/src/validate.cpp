#include "nigrecon/validate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "nigrecon/dists.hpp"
#include "nigrecon/io.hpp"
#include "nigrecon/parallel.hpp"
#include "nigrecon/posterior.hpp"

namespace nigrecon::validate {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::s1: return "1";
    case Scenario::s2: return "2";
    case Scenario::s3: return "3";
    case Scenario::s4a: return "4a";
    case Scenario::s4b: return "4b";
  }
  return "?";
}

Scenario parse_scenario(const std::string& name) {
  for (Scenario s : {Scenario::s1, Scenario::s2, Scenario::s3, Scenario::s4a, Scenario::s4b}) {
    if (scenario_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown scenario '" + name + "' (expected 1, 2, 3, 4a or 4b)");
}

std::string scenario_detail(Scenario s) {
  switch (s) {
    case Scenario::s1: return "Gaussian likelihood";
    case Scenario::s2: return "ZIP likelihood";
    case Scenario::s3: return "ZIP likelihood (too few mixture components)";
    case Scenario::s4a: return "ZIP likelihood (under-estimated IG parameters)";
    case Scenario::s4b: return "ZIP likelihood (over-estimated IG parameters)";
  }
  return "";
}

std::size_t scenario_components(Scenario s) { return s == Scenario::s3 ? 2 : 5; }

std::array<double, 3> zip_rates(const std::array<double, 3>& a, std::span<const double> c) {
  const double t1 = a[0] * c[0] * c[0];
  const double t2 = a[1] * c[1] * c[1];
  const double t3 = a[2] * c[2] * c[2];
  return {std::sqrt(t1 + t2), std::sqrt(t1 + t3), std::sqrt(t1 + t2 + t3)};
}

Simulation simulate_scenario(Scenario s, Rng& rng, const SimOptions& opt) {
  const std::size_t n = opt.n;
  const std::size_t m = opt.m;
  if (n < 2 || m == 0) throw std::invalid_argument("simulate_scenario needs n >= 2 and m >= 1");
  if (s != Scenario::s1 && m != 3) {
    throw std::invalid_argument("the ZIP scenarios have three climate dimensions");
  }
  Simulation sim;
  sim.scenario = s;
  for (std::size_t j = 0; j < m; ++j) {
    sim.eta.push_back(0.1 + 9.9 * rng.uniform());
    sim.phi.push_back(0.1 + 9.9 * rng.uniform());
  }
  sim.v = Matrix(n - 1, m);
  sim.c = Matrix(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      sim.v(i, j) = dists::ig2_sample(rng, {sim.eta[j], sim.phi[j]});
      sim.c(i + 1, j) = sim.c(i, j) + std::sqrt(sim.v(i, j)) * rng.normal();
    }
  }
  sim.y = Matrix(n, m);
  if (s == Scenario::s1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = opt.fixed_precision > 0.0 ? opt.fixed_precision : 0.02 + 1.98 * rng.uniform();
      const double sd = opt.variance_reading ? std::pow(delta, -0.25) : 1.0 / std::sqrt(delta);
      sim.precision.push_back(1.0 / (sd * sd));
      for (std::size_t j = 0; j < m; ++j) sim.y(i, j) = sim.c(i, j) + sd * rng.normal();
    }
  } else {
    for (std::size_t k = 0; k < 3; ++k) {
      sim.p_zero[k] = 0.2 * rng.uniform();
      sim.a[k] = std::abs(rng.normal());
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto rates = zip_rates(sim.a, sim.c.row(i));
      for (std::size_t k = 0; k < 3; ++k) {
        sim.y(i, k) = static_cast<double>(dists::zip_sample(rng, {sim.p_zero[k], rates[k]}));
      }
    }
  }
  sim.engine_eta = sim.eta;
  sim.engine_phi = sim.phi;
  if (s == Scenario::s4a || s == Scenario::s4b) {
    const double lo = s == Scenario::s4a ? 0.5 : 1.0;
    const double hi = s == Scenario::s4a ? 1.0 : 5.0;
    for (std::size_t j = 0; j < m; ++j) {
      sim.engine_eta[j] *= lo + (hi - lo) * rng.uniform();
      sim.engine_phi[j] *= lo + (hi - lo) * rng.uniform();
    }
  }
  return sim;
}

LayerLikelihood layer_likelihood(const Simulation& sim, std::size_t i) {
  const std::vector<double> y(sim.y.row(i).begin(), sim.y.row(i).end());
  if (sim.scenario == Scenario::s1) {
    const double prec = sim.precision[i];
    return [y, prec](std::span<const double> c) {
      double ll = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) ll -= 0.5 * prec * (y[j] - c[j]) * (y[j] - c[j]);
      return ll;
    };
  }
  const auto a = sim.a;
  const auto p = sim.p_zero;
  return [y, a, p](std::span<const double> c) {
    const auto rates = zip_rates(a, c);
    double ll = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      ll += dists::zip_logpmf(static_cast<std::uint64_t>(y[k]), {p[k], rates[k]});
    }
    return ll;
  };
}

Box truth_box(const Simulation& sim, std::size_t i, double half_width) {
  Box box;
  for (std::size_t j = 0; j < sim.c.cols(); ++j) {
    const double h = half_width * std::sqrt(sim.eta[j]);
    box.lo.push_back(sim.c(i, j) - h);
    box.hi.push_back(sim.c(i, j) + h);
  }
  return box;
}

ImportanceResult importance_mdp(const LayerLikelihood& loglik, const Box& box, std::size_t S,
                                Rng& rng, std::size_t keep) {
  if (S < 2000) throw std::invalid_argument("importance_mdp needs at least 2000 samples");
  const std::size_t m = box.lo.size();
  Matrix proposals(S, m);
  std::vector<double> logw(S);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < S; ++s) {
    auto row = proposals.row(s);
    for (std::size_t j = 0; j < m; ++j) row[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * rng.uniform();
    logw[s] = loglik(row);
    top = std::max(top, logw[s]);
  }
  if (!std::isfinite(top)) throw std::runtime_error("importance_mdp: every proposal has zero likelihood");
  std::vector<double> cum(S);
  double sum = 0.0;
  double sum2 = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const double w = std::exp(logw[s] - top);
    sum += w;
    sum2 += w * w;
    cum[s] = sum;
  }
  ImportanceResult out;
  out.ess = sum * sum / sum2;
  out.flagged = out.ess < 50.0;
  if (keep == 0) keep = S;
  out.samples = Matrix(keep, m);
  // Systematic resampling.
  const double u0 = rng.uniform();
  std::size_t idx = 0;
  for (std::size_t s = 0; s < keep; ++s) {
    const double target = (static_cast<double>(s) + u0) / static_cast<double>(keep) * sum;
    while (idx + 1 < S && cum[idx] < target) ++idx;
    const auto src = proposals.row(idx);
    std::copy(src.begin(), src.end(), out.samples.row(s).begin());
  }
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& xs, double p) {
  const double h = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace

ReplicateResult run_replicate(Scenario s, std::size_t index, std::uint64_t seed,
                              const PipelineConfig& config) {
  ReplicateResult res;
  try {
    Rng rng = Rng::substream(mix_seed(seed) + static_cast<std::uint64_t>(s), index);
    const Simulation sim = simulate_scenario(s, rng, config.sim);
    const std::size_t n = sim.c.rows();
    const std::size_t m = sim.c.cols();

    std::vector<mixtures::LayerMDP> mdps(n);
    if (s == Scenario::s1) {
      for (std::size_t i = 0; i < n; ++i) {
        mixtures::MixtureComponent comp;
        comp.weight = 1.0;
        comp.mean.assign(sim.y.row(i).begin(), sim.y.row(i).end());
        comp.precision.assign(m, sim.precision[i]);
        mdps[i].layer_index = i + 1;
        mdps[i].components.push_back(comp);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const Box box = truth_box(sim, i, config.box_half_width);
        const auto imp = importance_mdp(layer_likelihood(sim, i), box, config.sir_proposals, rng,
                                         config.sir_keep);
        if (imp.flagged) ++res.flagged_layers;
        mdps[i] = mixtures::fit_mixture_em(imp.samples, scenario_components(s), config.em, rng);
        mdps[i].layer_index = i + 1;
      }
    }

    engine::ChronologySet chron;
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
    chron.draws.append_row(t);
    engine::EngineConfig ec;
    ec.iters = config.iters;
    ec.burnin = config.burnin;
    ec.thin = config.thin;
    ec.eta = sim.engine_eta;
    ec.phi = sim.engine_phi;
    ec.seed = rng.engine()();

    std::vector<std::vector<double>> draws(n * m);
    Rng climate_rng(rng.engine()());
    engine::run(mdps, chron, ec, [&](const engine::ChainRecord& r) {
      const auto d = posterior::draw_climate(r, mdps, climate_rng);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) draws[i * m + j].push_back(d.c(i, j));
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        auto& xs = draws[i * m + j];
        if (xs.empty()) throw std::runtime_error("no retained draws");
        std::sort(xs.begin(), xs.end());
        const double truth = sim.c(i, j);
        res.inside90 += quantile_sorted(xs, 0.05) <= truth && truth <= quantile_sorted(xs, 0.95);
        res.inside50 += quantile_sorted(xs, 0.25) <= truth && truth <= quantile_sorted(xs, 0.75);
        ++res.total;
      }
    }
  } catch (const std::exception& e) {
    res = ReplicateResult{};
    res.failed = true;
    res.error = e.what();
  }
  return res;
}

CoverageReport coverage_report(Scenario s, std::size_t replicates, const PipelineConfig& config,
                               std::uint64_t seed, unsigned threads) {
  if (replicates == 0) throw std::invalid_argument("coverage_report needs at least one replicate");
  std::vector<ReplicateResult> results(replicates);
  parallel_for(replicates, threads,
               [&](std::size_t r) { results[r] = run_replicate(s, r, seed, config); });
  CoverageReport rep;
  rep.scenario = s;
  rep.replicates = replicates;
  for (const auto& r : results) {
    if (r.failed) {
      ++rep.failures;
      continue;
    }
    rep.inside90 += r.inside90;
    rep.inside50 += r.inside50;
    rep.total += r.total;
    rep.flagged_layers += r.flagged_layers;
  }
  return rep;
}

void write_report(std::ostream& out, const std::vector<CoverageReport>& reports) {
  out << "scenario,detail,cov90,cov50,replicates\n";
  for (const auto& r : reports) {
    out << scenario_name(r.scenario) << ",\"" << scenario_detail(r.scenario) << "\","
        << format_double(r.cov90()) << ',' << format_double(r.cov50()) << ','
        << r.replicates - r.failures << '\n';
  }
}

}  // namespace nigrecon::validate
