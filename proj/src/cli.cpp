#include "nigrecon/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nigrecon/dists.hpp"
#include "nigrecon/icecore.hpp"
#include "nigrecon/io.hpp"

namespace nigrecon::cli {

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = {
      {"seed", "", "master seed (required)"},
      {"threads", "1", "worker threads for layers, dimensions, records and replicates"},
      {"output_dir", ".", "directory for outputs, relative to the working directory"},
      {"mdp_samples", "mdp_samples.csv", "input: MDP samples, layer,sample,c1..cm"},
      {"chronologies", "chronologies.csv", "input: chronology draws, t1..tn"},
      {"series", "series.csv", "input: time_ka,value series for icecore"},
      {"mixtures", "mixtures.json", "output of fit-mix, input of run and interp"},
      {"chain", "chain.csv", "output of run, input of interp"},
      {"grid_out", "grid.csv", "output: per-iteration grid values"},
      {"summary_out", "grid_summary.csv", "output: per-cell posterior summaries"},
      {"icecore_out", "icecore_chain.csv", "output of icecore"},
      {"report_out", "coverage.csv", "output of validate"},
      {"G", "5", "mixture components per layer"},
      {"em_restarts", "10", "EM restarts"},
      {"em_tol", "1e-8", "EM relative log-likelihood tolerance"},
      {"em_max_iter", "2000", "EM iteration cap"},
      {"em_min_weight", "1e-3", "smallest component weight before a restart is discarded"},
      {"iters", "100000", "engine iterations"},
      {"burnin", "20000", "engine burn-in"},
      {"thin", "40", "engine thinning stride"},
      {"eta", "2.66", "IG2 mean per unit time, one value or one per dimension"},
      {"phi", "15.33", "IG2 concentration, one value or one per dimension"},
      {"fix_hyper", "true", "hold eta and phi fixed"},
      {"proposal_sd", "0.5", "initial log-scale random-walk sd for v"},
      {"adapt", "true", "adapt proposal sds during burn-in"},
      {"target_accept", "0.44", "adaptation target"},
      {"update_indicators", "true", "update mixture indicators"},
      {"resample_chronology", "true", "redraw the chronology every iteration"},
      {"random_scan", "false", "random-scan sweeps (diagnostics)"},
      {"a_eta", "0.01", "Gamma prior shape for eta"},
      {"b_eta", "0.01", "Gamma prior rate for eta"},
      {"a_phi", "0.01", "Gamma prior shape for phi"},
      {"b_phi", "0.01", "Gamma prior rate for phi"},
      {"tau_mu", "0.01", "prior precision of mu (icecore)"},
      {"tau_beta", "0.01", "prior precision of beta (icecore)"},
      {"psi_variant", "derived", "icecore v conditional: derived or printed"},
      {"grid_start", "0", "grid start (ka BP)"},
      {"grid_end", "14", "grid end (ka BP)"},
      {"grid_step", "0.1", "grid step (ka)"},
      {"ice_iters", "100000", "icecore iterations"},
      {"ice_burnin", "20000", "icecore burn-in"},
      {"ice_thin", "80", "icecore thinning stride"},
      {"ice_standardize", "true", "standardize the series before fitting"},
      {"scenarios", "1", "validation scenarios, comma separated (1,2,3,4a,4b)"},
      {"replicates", "200", "validation replicates per scenario"},
      {"val_n", "100", "layers per validation replicate"},
      {"val_iters", "10000", "engine iterations per replicate"},
      {"val_burnin", "2000", "engine burn-in per replicate"},
      {"val_thin", "10", "engine thinning per replicate"},
      {"val_em_restarts", "3", "EM restarts per validation layer"},
      {"val_em_tol", "1e-6", "EM tolerance per validation layer"},
      {"sir_proposals", "20000", "importance proposals per layer"},
      {"sir_keep", "2000", "resampled draws per layer"},
      {"box_half_width", "5", "importance box half-width in unit-increment sds"},
      {"y_noise", "sd", "scenario 1 noise reading: sd or variance"},
  };
  return keys;
}

namespace {

const KeyInfo* find_key(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (key == k.name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.fallback;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  base_dir_ = std::filesystem::path(path).parent_path().string();
  if (base_dir_.empty()) base_dir_ = ".";
  load_text(ss.str(), path);
}

void RunConfig::load_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!find_key(key)) {
      throw InputError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    values_[key] = trim(line.substr(eq + 1));
  }
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  values_[key] = value;
}

std::string RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string s = str(key);
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(x)) {
    throw std::invalid_argument("config key " + key + ": expected a number, got '" + s + "'");
  }
  return x;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string s = str(key);
  std::uint64_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("config key " + key + ": expected a non-negative integer, got '" + s + "'");
  }
  return x;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config key " + key + ": expected true or false, got '" + s + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(str(key));
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    double x = 0.0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), x);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw std::invalid_argument("config key " + key + ": bad number '" + part + "'");
    }
    out.push_back(x);
  }
  if (out.empty()) throw std::invalid_argument("config key " + key + " is empty");
  return out;
}

std::string RunConfig::input_path(const std::string& key) const {
  const std::filesystem::path p(str(key));
  return p.is_absolute() ? p.string() : (std::filesystem::path(base_dir_) / p).string();
}

std::string RunConfig::output_path(const std::string& key) const {
  const std::filesystem::path dir(str("output_dir"));
  const std::filesystem::path p(str(key));
  return p.is_absolute() ? p.string() : (dir / p).string();
}

std::uint64_t RunConfig::seed() const {
  if (str("seed").empty()) throw std::invalid_argument("a seed is required (config key seed or --seed)");
  return u64("seed");
}

unsigned RunConfig::threads() const {
  const auto t = count("threads");
  return static_cast<unsigned>(std::max<std::size_t>(1, t));
}

std::uint64_t RunConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : values_) {
    if (k == "threads" || k == "output_dir") continue;
    text += k + "=" + v + "\n";
  }
  return fnv1a64(text);
}

engine::EngineConfig RunConfig::engine() const {
  engine::EngineConfig c;
  c.iters = count("iters");
  c.burnin = count("burnin");
  c.thin = count("thin");
  c.eta = reals("eta");
  c.phi = reals("phi");
  c.fix_hyper = flag("fix_hyper");
  c.hyper = hyper();
  c.proposal_sd = real("proposal_sd");
  c.adapt = flag("adapt");
  c.target_accept = real("target_accept");
  c.update_indicators = flag("update_indicators");
  c.resample_chronology = flag("resample_chronology");
  c.random_scan = flag("random_scan");
  c.seed = seed();
  c.threads = threads();
  return c;
}

mixtures::EMConfig RunConfig::em() const {
  mixtures::EMConfig c;
  c.restarts = count("em_restarts");
  c.tol = real("em_tol");
  c.max_iter = count("em_max_iter");
  c.min_weight = real("em_min_weight");
  return c;
}

posterior::GridSpec RunConfig::grid() const {
  posterior::GridSpec g{real("grid_start"), real("grid_end"), real("grid_step")};
  posterior::validate(g);
  return g;
}

icecore::IceHyper RunConfig::hyper() const {
  icecore::IceHyper h;
  h.a_eta = real("a_eta");
  h.b_eta = real("b_eta");
  h.a_phi = real("a_phi");
  h.b_phi = real("b_phi");
  h.tau_mu = real("tau_mu");
  h.tau_beta = real("tau_beta");
  const std::string psi = str("psi_variant");
  if (psi == "derived") {
    h.psi = icecore::PsiVariant::derived;
  } else if (psi == "printed") {
    h.psi = icecore::PsiVariant::printed;
  } else {
    throw std::invalid_argument("psi_variant must be derived or printed");
  }
  return h;
}

validate::PipelineConfig RunConfig::pipeline() const {
  validate::PipelineConfig p;
  p.sim.n = count("val_n");
  p.iters = count("val_iters");
  p.burnin = count("val_burnin");
  p.thin = count("val_thin");
  p.em.restarts = count("val_em_restarts");
  p.em.tol = real("val_em_tol");
  p.sir_proposals = count("sir_proposals");
  p.sir_keep = count("sir_keep");
  p.box_half_width = real("box_half_width");
  const std::string noise = str("y_noise");
  if (noise != "sd" && noise != "variance") throw std::invalid_argument("y_noise must be sd or variance");
  p.sim.variance_reading = noise == "variance";
  return p;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_output_dir(const RunConfig& cfg) {
  std::filesystem::create_directories(std::filesystem::path(cfg.str("output_dir")));
}

std::string header(const RunConfig& cfg) { return provenance_comment(cfg.hash(), cfg.seed()); }

}  // namespace

void cmd_fit_mix(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto seed = cfg.seed();
  const auto samples = mixtures::read_mdp_samples_file(cfg.input_path("mdp_samples"));
  std::vector<mixtures::EMDiagnostics> diags;
  const auto layers = mixtures::fit_all(samples, cfg.count("G"), cfg.em(), seed, cfg.threads(), &diags);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    log << "fit-mix: layer " << i + 1 << " samples=" << samples.layers[i].rows()
        << " G=" << diags[i].components << " loglik=" << format_double(diags[i].loglik)
        << " iterations=" << diags[i].iterations << " discarded=" << diags[i].discarded_restarts
        << '\n';
  }
  ensure_output_dir(cfg);
  const std::string out = cfg.output_path("mixtures");
  write_file_atomically(out, [&](std::ostream& os) { mixtures::write_mixtures_json(os, layers); });
  log << "fit-mix: wrote " << out << " (" << layers.size() << " layers, "
      << format_double(seconds_since(t0)) << " s)\n";
}

void cmd_run(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto ec = cfg.engine();
  const auto layers = mixtures::read_mixtures_json_file(cfg.output_path("mixtures"));
  const auto chron = engine::read_chronologies_file(cfg.input_path("chronologies"));
  const std::size_t n = layers.size();
  const std::size_t m = n ? layers[0].dim() : 0;
  // Checks inputs and settings before the chain file is opened.
  (void)engine::init_state(layers, chron, ec);
  if (ec.thin == 0 || (ec.iters > 0 && ec.burnin >= ec.iters)) {
    throw std::invalid_argument("run: need thin > 0 and burnin < iters");
  }
  ensure_output_dir(cfg);
  const std::string out = cfg.output_path("chain");
  engine::EngineState state;
  std::size_t kept = 0;
  write_file_atomically(out, [&](std::ostream& os) {
    os << header(cfg) << '\n' << engine::chain_header(n, m) << '\n';
    engine::run(layers, chron, ec, [&](const engine::ChainRecord& r) {
      os << engine::chain_row(r) << '\n';
      ++kept;
    }, &state);
  });
  double prop = 0.0;
  double acc = 0.0;
  for (double x : state.stats.proposed.data()) prop += x;
  for (double x : state.stats.accepted.data()) acc += x;
  log << "run: wrote " << out << " (" << kept << " records, v acceptance "
      << format_double(prop > 0 ? acc / prop : 0.0) << ", indicator acceptance "
      << format_double(state.stats.indicator_proposed
                           ? static_cast<double>(state.stats.indicator_accepted) /
                                 static_cast<double>(state.stats.indicator_proposed)
                           : 0.0)
      << ", " << format_double(seconds_since(t0)) << " s)\n";
}

void cmd_interp(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto seed = cfg.seed();
  const auto grid = cfg.grid();
  const auto layers = mixtures::read_mixtures_json_file(cfg.output_path("mixtures"));
  const auto chron = engine::read_chronologies_file(cfg.input_path("chronologies"));
  const std::string chain_path = cfg.output_path("chain");
  const auto records = engine::read_chain_file(chain_path);
  if (records.empty()) throw std::runtime_error("interp: " + chain_path + " has no records");
  const auto post = posterior::reconstruct(records, layers, chron, grid,
                                           {mix_seed(seed ^ 0x696e74657270ULL), cfg.threads()});
  if (!(post.conservation_error < 1e-10)) {
    throw std::logic_error("interp: volatility conservation violated (relative error " +
                           format_double(post.conservation_error) + ")");
  }
  ensure_output_dir(cfg);
  const std::string grid_out = cfg.output_path("grid_out");
  const std::string summary_out = cfg.output_path("summary_out");
  write_file_atomically(grid_out, [&](std::ostream& os) {
    os << header(cfg) << '\n';
    posterior::write_grid(os, post);
  });
  write_file_atomically(summary_out, [&](std::ostream& os) {
    os << header(cfg) << '\n';
    posterior::write_summary(os, post);
  });
  log << "interp: wrote " << grid_out << " and " << summary_out << " (" << post.grid.size()
      << " grid points, " << records.size() << " records, conservation error "
      << format_double(post.conservation_error) << ", " << format_double(seconds_since(t0))
      << " s)\n";
}

void cmd_icecore(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto seed = cfg.seed();
  const auto data = icecore::read_series_file(cfg.input_path("series"), cfg.flag("ice_standardize"));
  const icecore::McmcSettings mcmc{cfg.count("ice_iters"), cfg.count("ice_burnin"), cfg.count("ice_thin")};
  const auto hyper = cfg.hyper();
  ensure_output_dir(cfg);
  const std::string out = cfg.output_path("icecore_out");
  const std::size_t inc = data.t.size() - 1;
  double sum_eta = 0.0;
  double sum_phi = 0.0;
  std::size_t kept = 0;
  Rng rng(seed);
  write_file_atomically(out, [&](std::ostream& os) {
    os << header(cfg) << '\n' << "iter,mu,beta,eta,phi";
    for (std::size_t i = 0; i < inc; ++i) os << ",v_" << i + 1;
    os << '\n';
    icecore::run_icecore(data, hyper, mcmc, rng, [&](std::size_t it, const icecore::IceState& s) {
      os << it << ',' << format_double(s.mu) << ',' << format_double(s.beta) << ','
         << format_double(s.eta) << ',' << format_double(s.phi);
      for (double v : s.v) os << ',' << format_double(v);
      os << '\n';
      sum_eta += s.eta;
      sum_phi += s.phi;
      ++kept;
    });
  });
  log << "icecore: wrote " << out << " (" << kept << " records from " << data.t.size()
      << " observations, " << format_double(seconds_since(t0)) << " s)\n";
  if (kept) {
    log << "icecore: posterior mean eta=" << format_double(sum_eta / kept)
        << " phi=" << format_double(sum_phi / kept) << '\n';
  }
}

void cmd_validate(const RunConfig& cfg, std::ostream& log) {
  const auto seed = cfg.seed();
  const auto pipeline = cfg.pipeline();
  const std::size_t reps = cfg.count("replicates");
  std::vector<validate::CoverageReport> reports;
  std::stringstream ss(cfg.str("scenarios"));
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto scenario = validate::parse_scenario(trim(name));
    const auto t0 = Clock::now();
    reports.push_back(validate::coverage_report(scenario, reps, pipeline, seed, cfg.threads()));
    const auto& r = reports.back();
    log << "validate: scenario " << validate::scenario_name(scenario) << " cov90="
        << format_double(r.cov90()) << " cov50=" << format_double(r.cov50())
        << " replicates=" << r.replicates << " failures=" << r.failures
        << " flagged_layers=" << r.flagged_layers << " (" << format_double(seconds_since(t0))
        << " s)\n";
  }
  ensure_output_dir(cfg);
  const std::string out = cfg.output_path("report_out");
  write_file_atomically(out, [&](std::ostream& os) {
    os << header(cfg) << '\n';
    validate::write_report(os, reports);
  });
  log << "validate: wrote " << out << '\n';
}

void cmd_all(const RunConfig& cfg, std::ostream& log) {
  cmd_fit_mix(cfg, log);
  cmd_run(cfg, log);
  cmd_interp(cfg, log);
}

void make_fixture(const std::string& dir, const FixtureSpec& spec, std::uint64_t seed) {
  if (spec.layers < 3 || spec.dims == 0 || spec.samples < 50 || spec.rows == 0) {
    throw std::invalid_argument("make_fixture: need at least 3 layers, 1 dimension, 50 samples, 1 row");
  }
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  const std::size_t n = spec.layers;
  const std::size_t m = spec.dims;
  const double gap = spec.span_ka / static_cast<double>(n);

  // Chronologies: gamma-distributed gaps around the nominal spacing.
  engine::ChronologySet chron;
  std::vector<double> t(n);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    double acc = 0.2 * gap * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = acc;
      acc += rng.gamma(25.0, 25.0 / gap);
    }
    chron.draws.append_row(t);
  }

  // Truth on the first chronology row.
  Matrix c(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double d = chron.draws(0, i + 1) - chron.draws(0, i);
      const double v = dists::ig2_sample(rng, {spec.eta * d, spec.phi * d});
      c(i + 1, j) = c(i, j) + std::sqrt(v) * rng.normal();
    }
  }

  // MDP clouds: a main mode near the truth and, for some layers, a
  // secondary mode offset in every dimension.
  mixtures::MDPSampleSet set;
  set.m = m;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix s(spec.samples, m);
    const double sd = 0.2 + 0.4 * rng.uniform();
    const bool bimodal = rng.uniform() < 0.4;
    const double second_weight = bimodal ? 0.2 + 0.2 * rng.uniform() : 0.0;
    std::vector<double> centre(m);
    std::vector<double> offset(m);
    for (std::size_t j = 0; j < m; ++j) {
      centre[j] = c(i, j) + sd * rng.normal();
      offset[j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (1.0 + rng.uniform());
    }
    for (std::size_t k = 0; k < spec.samples; ++k) {
      const bool second = rng.uniform() < second_weight;
      for (std::size_t j = 0; j < m; ++j) {
        s(k, j) = centre[j] + (second ? offset[j] : 0.0) + sd * rng.normal();
      }
    }
    set.layers.push_back(std::move(s));
  }

  const std::filesystem::path base(dir);
  write_file_atomically((base / "mdp_samples.csv").string(),
                        [&](std::ostream& os) { mixtures::write_mdp_samples(os, set); });
  write_file_atomically((base / "chronologies.csv").string(),
                        [&](std::ostream& os) { engine::write_chronologies(os, chron); });
  write_file_atomically((base / "truth.csv").string(), [&](std::ostream& os) {
    os << "layer,age_ka";
    for (std::size_t j = 0; j < m; ++j) os << ",c" << j + 1;
    os << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      os << i + 1 << ',' << format_double(chron.draws(0, i));
      for (std::size_t j = 0; j < m; ++j) os << ',' << format_double(c(i, j));
      os << '\n';
    }
  });
}

}  // namespace nigrecon::cli
