#include "nigrecon/engine.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nigrecon/dists.hpp"
#include "nigrecon/io.hpp"
#include "nigrecon/parallel.hpp"

namespace nigrecon::engine {

void validate(const ChronologySet& set) {
  if (set.rows() == 0 || set.layers() == 0) throw std::invalid_argument("chronology set is empty");
  for (std::size_t r = 0; r < set.rows(); ++r) {
    for (std::size_t i = 0; i < set.layers(); ++i) {
      const double t = set.draws(r, i);
      if (!std::isfinite(t)) {
        throw std::invalid_argument("chronology row " + std::to_string(r + 1) + ": non-finite age");
      }
      if (i > 0 && !(t > set.draws(r, i - 1))) {
        throw std::invalid_argument("chronology row " + std::to_string(r + 1) +
                                    ": ages not strictly increasing at t" + std::to_string(i + 1));
      }
    }
  }
}

ChronologySet read_chronologies(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] != "t" + std::to_string(c + 1)) {
      throw InputError(source + ": header must be t1,...,tn (column " + std::to_string(c + 1) +
                       " is '" + t.header[c] + "')");
    }
  }
  ChronologySet set;
  std::vector<double> row(t.header.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = t.number(r, c);
      if (!std::isfinite(row[c])) t.fail(r, "non-finite age");
      if (c > 0 && !(row[c] > row[c - 1])) {
        t.fail(r, "ages not strictly increasing at t" + std::to_string(c + 1));
      }
    }
    set.draws.append_row(row);
  }
  if (set.rows() == 0) throw InputError(source + ": no chronology draws");
  return set;
}

ChronologySet read_chronologies_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_chronologies(in, path);
}

void write_chronologies(std::ostream& out, const ChronologySet& set) {
  for (std::size_t c = 0; c < set.layers(); ++c) out << (c ? ",t" : "t") << c + 1;
  out << '\n';
  for (std::size_t r = 0; r < set.rows(); ++r) {
    for (std::size_t c = 0; c < set.layers(); ++c) {
      out << (c ? "," : "") << format_double(set.draws(r, c));
    }
    out << '\n';
  }
}

namespace {

std::vector<double> column_mu(const EngineState& s, std::size_t j) {
  std::vector<double> out(s.n);
  for (std::size_t i = 0; i < s.n; ++i) out[i] = s.layers[i].mean(s.k[i], j);
  return out;
}

std::vector<double> column_tau(const EngineState& s, std::size_t j) {
  std::vector<double> out(s.n);
  for (std::size_t i = 0; i < s.n; ++i) out[i] = s.layers[i].precision(s.k[i], j);
  return out;
}

void set_delta(EngineState& s, const ChronologySet& chron, std::size_t row) {
  s.chron_idx = row;
  for (std::size_t i = 0; i + 1 < s.n; ++i) {
    s.delta[i] = chron.draws(row, i + 1) - chron.draws(row, i);
  }
}

std::vector<double> filled(const std::vector<double>& given, std::size_t m, double fallback,
                           const char* name) {
  if (given.empty()) return std::vector<double>(m, fallback);
  if (given.size() == 1) return std::vector<double>(m, given[0]);
  if (given.size() != m) {
    throw std::invalid_argument(std::string(name) + " has " + std::to_string(given.size()) +
                                " entries for " + std::to_string(m) + " dimensions");
  }
  return given;
}

}  // namespace

EngineState init_state(const std::vector<mixtures::LayerMDP>& mixtures,
                       const ChronologySet& chronologies, const EngineConfig& config) {
  if (mixtures.empty()) throw std::invalid_argument("init_state: no layers");
  EngineState s;
  s.n = mixtures.size();
  s.m = mixtures[0].dim();
  if (s.m == 0) throw std::invalid_argument("init_state: layer 1 has no dimensions");
  if (chronologies.layers() != s.n) {
    throw std::invalid_argument("init_state: chronologies have " +
                                std::to_string(chronologies.layers()) + " ages but there are " +
                                std::to_string(s.n) + " layers");
  }
  validate(chronologies);
  s.layers.resize(s.n);
  s.k.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto& layer = mixtures[i];
    const std::string where = "init_state: layer " + std::to_string(i + 1);
    if (layer.size() == 0) throw std::invalid_argument(where + " has no components");
    if (layer.dim() != s.m) {
      throw std::invalid_argument(where + " has dimension " + std::to_string(layer.dim()) +
                                  ", expected " + std::to_string(s.m));
    }
    LayerTable& t = s.layers[i];
    const std::size_t G = layer.size();
    t.mean = Matrix(G, s.m);
    t.precision = Matrix(G, s.m);
    std::size_t best = 0;
    for (std::size_t g = 0; g < G; ++g) {
      const auto& c = layer.components[g];
      if (!c.diagonal()) throw std::invalid_argument(where + " has a full-covariance component");
      if (c.mean.size() != s.m || c.precision.size() != s.m) {
        throw std::invalid_argument(where + ": component " + std::to_string(g + 1) +
                                    " has the wrong dimension");
      }
      if (!(c.weight > 0.0)) throw std::invalid_argument(where + ": non-positive weight");
      t.weight.push_back(c.weight);
      t.log_weight.push_back(std::log(c.weight));
      for (std::size_t j = 0; j < s.m; ++j) {
        if (!(c.precision[j] > 0.0)) throw std::invalid_argument(where + ": non-positive precision");
        t.mean(g, j) = c.mean[j];
        t.precision(g, j) = c.precision[j];
      }
      if (c.weight > layer.components[best].weight) best = g;
    }
    s.k[i] = best;
  }
  s.eta = filled(config.eta, s.m, 2.66, "eta");
  s.phi = filled(config.phi, s.m, 15.33, "phi");
  for (std::size_t j = 0; j < s.m; ++j) {
    if (!(s.eta[j] > 0.0) || !(s.phi[j] > 0.0)) throw std::invalid_argument("eta and phi must be positive");
  }
  if (!(config.proposal_sd > 0.0)) throw std::invalid_argument("proposal_sd must be positive");
  s.delta.resize(s.n - 1);
  set_delta(s, chronologies, 0);
  s.cache.reserve(s.m);
  for (std::size_t j = 0; j < s.m; ++j) {
    std::vector<double> v(s.n - 1);
    for (std::size_t i = 0; i + 1 < s.n; ++i) v[i] = s.eta[j] * s.delta[i];
    s.cache.emplace_back(column_mu(s, j), column_tau(s, j), std::move(v));
  }
  s.log_sd = Matrix(s.n - 1, s.m, std::log(config.proposal_sd));
  for (std::size_t j = 0; j < s.m; ++j) s.dim_rng.push_back(Rng::substream(config.seed, j + 1));
  s.stats.proposed = Matrix(s.n - 1, s.m);
  s.stats.accepted = Matrix(s.n - 1, s.m);
  return s;
}

bool update_volatility(EngineState& s, std::size_t i, std::size_t j, Rng& rng) {
  const double v = s.v(i, j);
  const double v_new = v * std::exp(std::exp(s.log_sd(i, j)) * rng.normal());
  const double u = rng.uniform();
  const auto prop = s.cache[j].propose(i, v_new);
  bool accept = false;
  if (prop.valid) {
    const dists::IG2Params prior{s.eta[j] * s.delta[i], s.phi[j] * s.delta[i]};
    const double log_v = std::log(v);
    const double log_new = std::log(v_new);
    const double log_r = prop.log_ratio + dists::ig2_log_kernel(v_new, prior) -
                         dists::ig2_log_kernel(v, prior) - 0.5 * (log_new - log_v) +
                         (log_new - log_v);
    accept = std::log(u) < log_r;
  }
  if (accept) s.cache[j].commit(prop);
  if (s.counting) {
    s.stats.proposed(i, j) += 1.0;
    if (accept) s.stats.accepted(i, j) += 1.0;
  }
  return accept;
}

bool update_indicator(EngineState& s, std::size_t i, Rng& rng) {
  const LayerTable& t = s.layers[i];
  const std::size_t G = t.weight.size();
  if (G < 2) return false;
  double u = rng.uniform();
  std::size_t pick = G - 1;
  for (std::size_t g = 0; g < G; ++g) {
    u -= t.weight[g];
    if (u <= 0.0) {
      pick = g;
      break;
    }
  }
  const double accept_u = rng.uniform();
  if (s.counting) ++s.stats.indicator_proposed;
  if (pick == s.k[i]) {
    if (s.counting) ++s.stats.indicator_accepted;
    return true;
  }
  double log_r = 0.0;
  for (std::size_t j = 0; j < s.m; ++j) {
    log_r += s.cache[j].layer_log_ratio(i, t.mean(pick, j), t.precision(pick, j));
  }
  if (!(std::log(accept_u) < log_r)) return false;
  s.k[i] = pick;
  for (std::size_t j = 0; j < s.m; ++j) s.cache[j].set_layer(i, t.mean(pick, j), t.precision(pick, j));
  if (s.counting) ++s.stats.indicator_accepted;
  return true;
}

void resample_chronology(EngineState& s, const ChronologySet& chronologies, Rng& rng) {
  if (chronologies.rows() <= 1) return;
  set_delta(s, chronologies, static_cast<std::size_t>(rng.below(chronologies.rows())));
}

void update_hyper(EngineState& s, const icecore::IceHyper& hyper, Rng& rng) {
  if (s.n < 2) return;
  for (std::size_t j = 0; j < s.m; ++j) {
    const auto& v = s.cache[j].v();
    s.eta[j] = dists::gig_sample(
        rng, icecore::eta_conditional(s.phi[j], v, s.delta, hyper.a_eta, hyper.b_eta));
    s.phi[j] = dists::gamma_sample(
        rng, icecore::phi_conditional(s.eta[j], v, s.delta, hyper.a_phi, hyper.b_phi));
  }
}

double log_target(const EngineState& s) {
  double lp = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) lp += s.layers[i].log_weight[s.k[i]];
  for (std::size_t j = 0; j < s.m; ++j) {
    lp += s.cache[j].logterm();
    for (std::size_t i = 0; i + 1 < s.n; ++i) {
      const double v = s.v(i, j);
      lp += dists::ig2_log_kernel(v, {s.eta[j] * s.delta[i], s.phi[j] * s.delta[i]}) -
            0.5 * std::log(v);
    }
  }
  return lp;
}

ChainRecord snapshot(const EngineState& s, std::size_t iter) {
  ChainRecord r;
  r.iter = iter;
  r.chron_idx = s.chron_idx;
  r.v = Matrix(s.n - 1, s.m);
  for (std::size_t j = 0; j < s.m; ++j) {
    const auto& v = s.cache[j].v();
    for (std::size_t i = 0; i + 1 < s.n; ++i) r.v(i, j) = v[i];
  }
  r.k = s.k;
  r.eta = s.eta;
  r.phi = s.phi;
  return r;
}

std::vector<ChainRecord> run(const std::vector<mixtures::LayerMDP>& mixtures,
                             const ChronologySet& chronologies, const EngineConfig& config,
                             const RecordSink& sink, EngineState* final_state) {
  if (config.thin == 0) throw std::invalid_argument("thin must be at least 1");
  if (config.iters > 0 && config.burnin >= config.iters) {
    throw std::invalid_argument("burnin must be smaller than iters");
  }
  EngineState s = init_state(mixtures, chronologies, config);
  Rng rng(config.seed);
  std::vector<ChainRecord> out;
  const std::size_t inc = s.n - 1;

  auto sweep_dimension = [&](std::size_t j, std::size_t it, bool adapting) {
    const double gain = adapting ? std::pow(static_cast<double>(it), -0.6) : 0.0;
    for (std::size_t i = 0; i < inc; ++i) {
      const bool acc = update_volatility(s, i, j, s.dim_rng[j]);
      if (adapting) s.log_sd(i, j) += gain * ((acc ? 1.0 : 0.0) - config.target_accept);
    }
  };

  for (std::size_t it = 1; it <= config.iters; ++it) {
    const bool adapting = config.adapt && it <= config.burnin;
    s.counting = it > config.burnin;
    if (config.resample_chronology) resample_chronology(s, chronologies, rng);
    if (config.random_scan) {
      for (std::size_t t = 0; t < inc * s.m; ++t) {
        const std::size_t i = rng.below(inc);
        const std::size_t j = rng.below(s.m);
        const bool acc = update_volatility(s, i, j, rng);
        if (adapting) {
          s.log_sd(i, j) += std::pow(static_cast<double>(it), -0.6) *
                            ((acc ? 1.0 : 0.0) - config.target_accept);
        }
      }
      if (config.update_indicators) {
        for (std::size_t t = 0; t < s.n; ++t) update_indicator(s, rng.below(s.n), rng);
      }
    } else {
      if (inc > 0) {
        parallel_for(s.m, config.threads, [&](std::size_t j) { sweep_dimension(j, it, adapting); });
      }
      if (config.update_indicators) {
        for (std::size_t i = 0; i < s.n; ++i) update_indicator(s, i, rng);
      }
    }
    if (!config.fix_hyper) update_hyper(s, config.hyper, rng);
    if (it > config.burnin && (it - config.burnin) % config.thin == 0) {
      if (sink) {
        sink(snapshot(s, it));
      } else {
        out.push_back(snapshot(s, it));
      }
    }
  }
  if (final_state) *final_state = std::move(s);
  return out;
}

std::string chain_header(std::size_t n, std::size_t m) {
  std::string h = "iter,chron_idx";
  for (std::size_t i = 0; i < n; ++i) h += ",k_" + std::to_string(i + 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) h += ",v_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
  }
  for (std::size_t j = 0; j < m; ++j) h += ",eta_" + std::to_string(j + 1);
  for (std::size_t j = 0; j < m; ++j) h += ",phi_" + std::to_string(j + 1);
  return h;
}

std::string chain_row(const ChainRecord& r) {
  std::string line = std::to_string(r.iter) + "," + std::to_string(r.chron_idx);
  for (std::size_t k : r.k) line += "," + std::to_string(k + 1);
  for (std::size_t i = 0; i < r.v.rows(); ++i) {
    for (std::size_t j = 0; j < r.v.cols(); ++j) line += "," + format_double(r.v(i, j));
  }
  for (double e : r.eta) line += "," + format_double(e);
  for (double p : r.phi) line += "," + format_double(p);
  return line;
}

std::vector<ChainRecord> read_chain(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  std::size_t n = 0;
  std::size_t m = 0;
  for (const auto& h : t.header) {
    if (h.rfind("k_", 0) == 0) ++n;
    if (h.rfind("eta_", 0) == 0) ++m;
  }
  if (n == 0 || m == 0 || t.header != [&] {
        std::vector<std::string> cols;
        std::stringstream ss(chain_header(n, m));
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        return cols;
      }()) {
    throw InputError(source + ": not a chain file (unexpected header)");
  }
  std::vector<ChainRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ChainRecord rec;
    std::size_t c = 0;
    rec.iter = static_cast<std::size_t>(t.integer(r, c++));
    rec.chron_idx = static_cast<std::size_t>(t.integer(r, c++));
    for (std::size_t i = 0; i < n; ++i) {
      const long long k = t.integer(r, c++);
      if (k < 1) t.fail(r, "component index must be >= 1");
      rec.k.push_back(static_cast<std::size_t>(k - 1));
    }
    rec.v = Matrix(n - 1, m);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        rec.v(i, j) = t.number(r, c++);
        if (!(rec.v(i, j) > 0.0)) t.fail(r, "volatility must be positive");
      }
    }
    for (std::size_t j = 0; j < m; ++j) rec.eta.push_back(t.number(r, c++));
    for (std::size_t j = 0; j < m; ++j) rec.phi.push_back(t.number(r, c++));
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ChainRecord> read_chain_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_chain(in, path);
}

}  // namespace nigrecon::engine
