#include "nigrecon/mixtures.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "nigrecon/io.hpp"
#include "nigrecon/parallel.hpp"

namespace nigrecon::mixtures {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

double log_sum_exp(const std::vector<double>& xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> var;
};

Moments sample_moments(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  Moments out{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < m; ++d) out.mean[d] += x(r, d);
  }
  for (auto& v : out.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < m; ++d) {
      const double e = x(r, d) - out.mean[d];
      out.var[d] += e * e;
    }
  }
  for (auto& v : out.var) v /= static_cast<double>(n);
  return out;
}

// k-means++ seeding on coordinates scaled by the sample sd.
std::vector<std::size_t> seed_centres(const Matrix& x, const std::vector<double>& var,
                                      std::size_t G, Rng& rng) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  std::vector<std::size_t> centres{static_cast<std::size_t>(rng.below(n))};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centres.size() < G) {
    const std::size_t last = centres.back();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t d = 0; d < m; ++d) {
        const double e = x(r, d) - x(last, d);
        s += e * e / var[d];
      }
      d2[r] = std::min(d2[r], s);
      total += d2[r];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t r = 0; r < n; ++r) {
        u -= d2[r];
        if (u <= 0.0) {
          pick = r;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    centres.push_back(pick);
  }
  return centres;
}

struct Fit {
  std::vector<MixtureComponent> comps;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  bool degenerate = false;
};

// Per-component log normalising constant and evaluation, diagonal or full.
struct Evaluator {
  std::vector<double> log_weight;
  std::vector<double> log_norm;
  std::vector<Eigen::MatrixXd> prec;  // full mode only

  void prepare(const std::vector<MixtureComponent>& comps, bool full) {
    const std::size_t G = comps.size();
    log_weight.assign(G, 0.0);
    log_norm.assign(G, 0.0);
    prec.clear();
    for (std::size_t g = 0; g < G; ++g) {
      const auto& c = comps[g];
      log_weight[g] = std::log(c.weight);
      const double m = static_cast<double>(c.mean.size());
      if (full) {
        const std::size_t k = c.mean.size();
        Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(c.full_precision.data(), k, k);
        Eigen::LLT<Eigen::MatrixXd> llt(p);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        log_norm[g] = -0.5 * m * kLogTwoPi + 0.5 * logdet;
        prec.push_back(std::move(p));
      } else {
        double s = 0.0;
        for (double t : c.precision) s += std::log(t);
        log_norm[g] = -0.5 * m * kLogTwoPi + 0.5 * s;
      }
    }
  }

  double eval(const std::vector<MixtureComponent>& comps, std::size_t g,
              std::span<const double> x) const {
    const auto& c = comps[g];
    const std::size_t m = c.mean.size();
    double q = 0.0;
    if (prec.empty()) {
      for (std::size_t d = 0; d < m; ++d) {
        const double e = x[d] - c.mean[d];
        q += c.precision[d] * e * e;
      }
    } else {
      Eigen::VectorXd e(m);
      for (std::size_t d = 0; d < m; ++d) e[d] = x[d] - c.mean[d];
      q = e.dot(prec[g] * e);
    }
    return log_weight[g] + log_norm[g] - 0.5 * q;
  }
};

Fit run_em(const Matrix& x, std::size_t G, const EMConfig& cfg, const Moments& mom,
           Rng& rng) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  const bool full = cfg.full_covariance;
  std::vector<double> floor(m);
  for (std::size_t d = 0; d < m; ++d) floor[d] = cfg.var_floor_rel * mom.var[d];

  Fit fit;
  fit.comps.resize(G);
  const auto centres = seed_centres(x, mom.var, G, rng);
  for (std::size_t g = 0; g < G; ++g) {
    auto& c = fit.comps[g];
    c.weight = 1.0 / static_cast<double>(G);
    const auto row = x.row(centres[g]);
    c.mean.assign(row.begin(), row.end());
    c.precision.resize(m);
    for (std::size_t d = 0; d < m; ++d) c.precision[d] = 1.0 / mom.var[d];
    if (full) {
      c.full_precision.assign(m * m, 0.0);
      for (std::size_t d = 0; d < m; ++d) c.full_precision[d * m + d] = c.precision[d];
    }
  }

  Evaluator ev;
  Matrix resp(n, G);
  std::vector<double> lp(G);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    ev.prepare(fit.comps, full);
    double ll = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = x.row(r);
      for (std::size_t g = 0; g < G; ++g) lp[g] = ev.eval(fit.comps, g, row);
      const double lse = log_sum_exp(lp);
      ll += lse;
      for (std::size_t g = 0; g < G; ++g) resp(r, g) = std::exp(lp[g] - lse);
    }
    fit.trace.push_back(ll);
    fit.loglik = ll;
    if (it > 0 && std::abs(ll - prev) < cfg.tol * std::abs(ll)) break;
    prev = ll;

    for (std::size_t g = 0; g < G; ++g) {
      auto& c = fit.comps[g];
      double ng = 0.0;
      std::vector<double> mean(m, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double w = resp(r, g);
        ng += w;
        for (std::size_t d = 0; d < m; ++d) mean[d] += w * x(r, d);
      }
      c.weight = ng / static_cast<double>(n);
      if (!(c.weight >= cfg.min_weight)) {
        fit.degenerate = true;
        return fit;
      }
      for (auto& v : mean) v /= ng;
      if (full) {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
        Eigen::VectorXd e(m);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t d = 0; d < m; ++d) e[d] = x(r, d) - mean[d];
          cov.noalias() += resp(r, g) * e * e.transpose();
        }
        cov /= ng;
        for (std::size_t d = 0; d < m; ++d) {
          if (!(cov(d, d) >= floor[d])) {
            fit.degenerate = true;
            return fit;
          }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
          fit.degenerate = true;
          return fit;
        }
        const Eigen::MatrixXd p = llt.solve(Eigen::MatrixXd::Identity(m, m));
        c.full_precision.assign(p.data(), p.data() + m * m);
        for (std::size_t d = 0; d < m; ++d) c.precision[d] = p(d, d);
      } else {
        for (std::size_t d = 0; d < m; ++d) {
          double s = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            const double e = x(r, d) - mean[d];
            s += resp(r, g) * e * e;
          }
          const double var = s / ng;
          if (!(var >= floor[d])) {
            fit.degenerate = true;
            return fit;
          }
          c.precision[d] = 1.0 / var;
        }
      }
      c.mean = std::move(mean);
    }
    // Weights are sums of responsibilities; renormalise away rounding.
    double total = 0.0;
    for (const auto& c : fit.comps) total += c.weight;
    for (auto& c : fit.comps) c.weight /= total;
  }
  return fit;
}

void sort_components(std::vector<MixtureComponent>& comps) {
  std::stable_sort(comps.begin(), comps.end(),
                   [](const MixtureComponent& a, const MixtureComponent& b) {
                     if (a.weight != b.weight) return a.weight > b.weight;
                     return a.mean[0] < b.mean[0];
                   });
}

}  // namespace

LayerMDP fit_mixture_em(const Matrix& samples, std::size_t G, const EMConfig& config,
                        Rng& rng, EMDiagnostics* diagnostics) {
  if (samples.rows() == 0 || samples.cols() == 0) {
    throw std::invalid_argument("fit_mixture_em: no samples");
  }
  if (G == 0) throw std::invalid_argument("fit_mixture_em: G must be at least 1");
  if (samples.rows() < 10 * G) {
    throw std::invalid_argument("fit_mixture_em: need at least 10 G samples, have " +
                                std::to_string(samples.rows()) + " for G=" + std::to_string(G));
  }
  for (double v : samples.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_mixture_em: non-finite sample");
  }
  const Moments mom = sample_moments(samples);
  for (std::size_t d = 0; d < mom.var.size(); ++d) {
    if (!(mom.var[d] > 0.0)) {
      throw std::invalid_argument("fit_mixture_em: zero sample variance in dimension " +
                                  std::to_string(d + 1));
    }
  }

  std::size_t discarded = 0;
  for (std::size_t g = G; g >= 1; --g) {
    Fit best;
    bool found = false;
    const std::size_t starts = g == 1 ? 1 : std::max<std::size_t>(config.restarts, 1);
    for (std::size_t r = 0; r < starts; ++r) {
      Fit f = run_em(samples, g, config, mom, rng);
      if (f.degenerate) {
        ++discarded;
        continue;
      }
      if (!found || f.loglik > best.loglik) {
        best = std::move(f);
        found = true;
      }
    }
    if (!found) continue;
    sort_components(best.comps);
    if (diagnostics) {
      diagnostics->loglik = best.loglik;
      diagnostics->components = g;
      diagnostics->iterations = best.trace.size();
      diagnostics->discarded_restarts = discarded;
      diagnostics->trace = best.trace;
    }
    LayerMDP out;
    out.components = std::move(best.comps);
    return out;
  }
  throw std::runtime_error("fit_mixture_em: every start degenerated");
}

std::vector<LayerMDP> fit_all(const MDPSampleSet& set, std::size_t G, const EMConfig& config,
                              std::uint64_t seed, unsigned threads,
                              std::vector<EMDiagnostics>* diagnostics) {
  const std::size_t n = set.n_layers();
  std::vector<LayerMDP> out(n);
  std::vector<EMDiagnostics> diag(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = Rng::substream(seed, i);
    try {
      out[i] = fit_mixture_em(set.layers[i], G, config, rng, &diag[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("layer " + std::to_string(i + 1) + ": " + e.what());
    }
    out[i].layer_index = i + 1;
  });
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

double component_logpdf(const MixtureComponent& comp, const std::vector<double>& c) {
  Evaluator ev;
  std::vector<MixtureComponent> one{comp};
  one[0].weight = 1.0;
  ev.prepare(one, !comp.diagonal());
  return ev.eval(one, 0, c);
}

double mixture_logpdf(const LayerMDP& mdp, const std::vector<double>& c) {
  if (c.size() != mdp.dim()) throw std::invalid_argument("mixture_logpdf: dimension mismatch");
  const bool full = !mdp.components.empty() && !mdp.components[0].diagonal();
  Evaluator ev;
  ev.prepare(mdp.components, full);
  std::vector<double> lp(mdp.size());
  for (std::size_t g = 0; g < mdp.size(); ++g) lp[g] = ev.eval(mdp.components, g, c);
  return log_sum_exp(lp);
}

double sample_loglik(const LayerMDP& mdp, const Matrix& samples) {
  const bool full = !mdp.components[0].diagonal();
  Evaluator ev;
  ev.prepare(mdp.components, full);
  std::vector<double> lp(mdp.size());
  double ll = 0.0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t g = 0; g < mdp.size(); ++g) lp[g] = ev.eval(mdp.components, g, samples.row(r));
    ll += log_sum_exp(lp);
  }
  return ll;
}

std::vector<SliceComponent> marginal_slices(const LayerMDP& mdp, std::size_t j) {
  std::vector<SliceComponent> out;
  out.reserve(mdp.size());
  for (const auto& c : mdp.components) {
    if (!c.diagonal()) {
      throw std::invalid_argument("marginal_slices: layer " + std::to_string(mdp.layer_index) +
                                  " has a full-covariance component");
    }
    if (j >= c.mean.size()) throw std::out_of_range("marginal_slices: dimension out of range");
    out.push_back({c.mean[j], c.precision[j], c.weight});
  }
  return out;
}

MDPSampleSet read_mdp_samples(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  if (t.header.size() < 3 || t.header[0] != "layer" || t.header[1] != "sample") {
    throw InputError(source + ": header must be layer,sample,c1,...,cm");
  }
  const std::size_t m = t.header.size() - 2;
  for (std::size_t d = 0; d < m; ++d) {
    if (t.header[d + 2] != "c" + std::to_string(d + 1)) {
      throw InputError(source + ": column " + std::to_string(d + 3) + " must be named c" +
                       std::to_string(d + 1));
    }
  }
  std::map<long long, Matrix> by_layer;
  std::vector<double> row(m);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long long layer = t.integer(r, 0);
    if (layer < 1) t.fail(r, "layer index must be >= 1");
    for (std::size_t d = 0; d < m; ++d) {
      row[d] = t.number(r, d + 2);
      if (!std::isfinite(row[d])) t.fail(r, "non-finite sample value");
    }
    by_layer[layer].append_row(row);
  }
  MDPSampleSet set;
  set.m = m;
  long long expect = 1;
  for (auto& [layer, samples] : by_layer) {
    if (layer != expect) {
      throw InputError(source + ": layer indices are not contiguous (missing layer " +
                       std::to_string(expect) + ")");
    }
    ++expect;
    set.layers.push_back(std::move(samples));
  }
  if (set.layers.empty()) throw InputError(source + ": no samples");
  return set;
}

MDPSampleSet read_mdp_samples_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_mdp_samples(in, path);
}

void write_mdp_samples(std::ostream& out, const MDPSampleSet& set) {
  out << "layer,sample";
  for (std::size_t d = 0; d < set.m; ++d) out << ",c" << d + 1;
  out << '\n';
  for (std::size_t i = 0; i < set.layers.size(); ++i) {
    const Matrix& s = set.layers[i];
    for (std::size_t r = 0; r < s.rows(); ++r) {
      out << i + 1 << ',' << r + 1;
      for (std::size_t d = 0; d < s.cols(); ++d) out << ',' << format_double(s(r, d));
      out << '\n';
    }
  }
}

namespace {

void write_array(std::ostream& out, const std::vector<double>& xs) {
  out << '[';
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out << ", ";
    out << format_double(xs[k]);
  }
  out << ']';
}

}  // namespace

void write_mixtures_json(std::ostream& out, const std::vector<LayerMDP>& layers) {
  out << "[\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    out << "  {\"layer\": " << layer.layer_index << ", \"components\": [\n";
    for (std::size_t g = 0; g < layer.size(); ++g) {
      const auto& c = layer.components[g];
      out << "    {\"weight\": " << format_double(c.weight) << ", \"mean\": ";
      write_array(out, c.mean);
      out << ", \"precision_diag\": ";
      write_array(out, c.precision);
      if (!c.diagonal()) {
        out << ", \"precision_full\": ";
        write_array(out, c.full_precision);
      }
      out << '}' << (g + 1 < layer.size() ? "," : "") << '\n';
    }
    out << "  ]}" << (i + 1 < layers.size() ? "," : "") << '\n';
  }
  out << "]\n";
}

std::vector<LayerMDP> read_mixtures_json(std::istream& in, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": " + e.what());
  }
  if (!doc.is_array()) throw InputError(source + ": top level must be an array of layers");
  std::vector<LayerMDP> layers;
  try {
    for (const auto& jl : doc) {
      LayerMDP layer;
      layer.layer_index = jl.at("layer").get<std::size_t>();
      for (const auto& jc : jl.at("components")) {
        MixtureComponent c;
        c.weight = jc.at("weight").get<double>();
        c.mean = jc.at("mean").get<std::vector<double>>();
        c.precision = jc.at("precision_diag").get<std::vector<double>>();
        if (jc.contains("precision_full")) {
          c.full_precision = jc.at("precision_full").get<std::vector<double>>();
        }
        layer.components.push_back(std::move(c));
      }
      layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": " + e.what());
  }
  try {
    validate_layers(layers);
  } catch (const std::invalid_argument& e) {
    throw InputError(source + ": " + e.what());
  }
  return layers;
}

std::vector<LayerMDP> read_mixtures_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_mixtures_json(in, path);
}

void validate_layers(const std::vector<LayerMDP>& layers) {
  if (layers.empty()) throw std::invalid_argument("no layers");
  const std::size_t m = layers[0].dim();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    const std::string where = "layer " + std::to_string(i + 1);
    if (layer.layer_index != i + 1) {
      throw std::invalid_argument(where + ": layer indices must run 1..n in order");
    }
    if (layer.components.empty()) throw std::invalid_argument(where + ": no components");
    double total = 0.0;
    for (const auto& c : layer.components) {
      if (c.mean.size() != m || c.precision.size() != m) {
        throw std::invalid_argument(where + ": dimension mismatch");
      }
      if (!(c.weight > 0.0 && c.weight <= 1.0)) {
        throw std::invalid_argument(where + ": weight outside (0, 1]");
      }
      total += c.weight;
      for (double mu : c.mean) {
        if (!std::isfinite(mu)) throw std::invalid_argument(where + ": non-finite mean");
      }
      for (double t : c.precision) {
        if (!(t > 0.0) || !std::isfinite(t)) {
          throw std::invalid_argument(where + ": precisions must be positive");
        }
      }
      if (!c.full_precision.empty() && c.full_precision.size() != m * m) {
        throw std::invalid_argument(where + ": full precision has the wrong size");
      }
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument(where + ": weights do not sum to one");
    }
  }
}

}  // namespace nigrecon::mixtures
