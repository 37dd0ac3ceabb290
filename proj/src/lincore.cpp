#include "nigrecon/lincore.hpp"

#include <cmath>
#include <string>

namespace nigrecon::lincore {

TriDiagPrecision::TriDiagPrecision(std::vector<double> diag, std::vector<double> offdiag)
    : diag_(std::move(diag)), off_(std::move(offdiag)) {
  if (diag_.empty() || off_.size() + 1 != diag_.size()) {
    throw std::invalid_argument("TriDiagPrecision: need n diagonal and n-1 off-diagonal entries");
  }
  factor();
}

TriDiagPrecision TriDiagPrecision::assemble(std::span<const double> tau,
                                            std::span<const double> v) {
  TriDiagPrecision p;
  p.assign(tau, v);
  return p;
}

void TriDiagPrecision::assign(std::span<const double> tau, std::span<const double> v) {
  const std::size_t n = tau.size();
  if (n == 0 || v.size() + 1 != n) {
    throw std::domain_error("assemble: need n precisions and n-1 volatilities");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(tau[i] > 0.0) || !std::isfinite(tau[i])) {
      throw std::domain_error("assemble: precision " + std::to_string(i + 1) + " is not positive");
    }
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
      throw std::domain_error("assemble: volatility " + std::to_string(i + 1) + " is not positive");
    }
  }
  diag_.assign(tau.begin(), tau.end());
  off_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double w = 1.0 / v[i];
    diag_[i] += w;
    diag_[i + 1] += w;
    off_[i] = -w;
  }
  factor();
}

void TriDiagPrecision::factor() {
  const std::size_t n = diag_.size();
  pivot_.resize(n);
  lower_.resize(n - 1);
  double d = diag_[0];
  logdet_ = 0.0;
  for (std::size_t i = 0;; ++i) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NotPositiveDefinite("tridiagonal factorisation: pivot " + std::to_string(i + 1) +
                                " is not positive");
    }
    pivot_[i] = d;
    logdet_ += std::log(d);
    if (i + 1 == n) break;
    const double l = off_[i] / d;
    lower_[i] = l;
    d = diag_[i + 1] - l * off_[i];
  }
}

void TriDiagPrecision::rank_one_increment(std::size_t i, double delta) {
  diag_[i] += delta;
  diag_[i + 1] += delta;
  off_[i] -= delta;
  factor();
}

void TriDiagPrecision::set_diag(std::size_t i, double value) {
  diag_[i] = value;
  factor();
}

void TriDiagPrecision::set_increment(std::size_t i, double diag_i, double diag_next,
                                     double off_i) {
  diag_[i] = diag_i;
  diag_[i + 1] = diag_next;
  off_[i] = off_i;
  factor();
}

void TriDiagPrecision::solve_into(std::span<const double> rhs, std::span<double> out) const {
  const std::size_t n = diag_.size();
  double y = rhs[0];
  out[0] = y;
  for (std::size_t i = 1; i < n; ++i) {
    y = rhs[i] - lower_[i - 1] * y;
    out[i] = y;
  }
  out[n - 1] /= pivot_[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) out[i] = out[i] / pivot_[i] - lower_[i] * out[i + 1];
}

std::vector<double> TriDiagPrecision::solve(std::span<const double> rhs) const {
  if (rhs.size() != diag_.size()) throw std::invalid_argument("solve: size mismatch");
  std::vector<double> out(rhs.size());
  solve_into(rhs, out);
  return out;
}

void TriDiagPrecision::solve_increment(std::size_t i, std::span<double> out) const {
  const std::size_t n = diag_.size();
  // Forward substitution is zero before i.
  for (std::size_t k = 0; k < i; ++k) out[k] = 0.0;
  double y = 1.0;
  out[i] = y;
  y = -1.0 - lower_[i] * y;
  out[i + 1] = y;
  for (std::size_t k = i + 2; k < n; ++k) {
    y = -lower_[k - 1] * y;
    out[k] = y;
  }
  out[n - 1] /= pivot_[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) out[k] = out[k] / pivot_[k] - lower_[k] * out[k + 1];
}

void TriDiagPrecision::noise_into(std::span<const double> z, std::span<double> out) const {
  const std::size_t n = diag_.size();
  out[n - 1] = z[n - 1] / std::sqrt(pivot_[n - 1]);
  for (std::size_t k = n - 1; k-- > 0;) {
    out[k] = z[k] / std::sqrt(pivot_[k]) - lower_[k] * out[k + 1];
  }
}

std::vector<double> TriDiagPrecision::multiply(std::span<const double> x) const {
  const std::size_t n = diag_.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = diag_[i] * x[i];
    if (i > 0) s += off_[i - 1] * x[i - 1];
    if (i + 1 < n) s += off_[i] * x[i + 1];
    out[i] = s;
  }
  return out;
}

namespace {

double quadratic(std::span<const double> mu, std::span<const double> tau,
                 std::span<const double> v, std::span<const double> mean) {
  double q = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double e = mu[i] - mean[i];
    q += tau[i] * e * e;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = mean[i + 1] - mean[i];
    q += d * d / v[i];
  }
  return q;
}

double logterm_from(std::span<const double> mu, std::span<const double> tau,
                    std::span<const double> v, const TriDiagPrecision& p,
                    std::span<const double> mean) {
  double logdet_d = 0.0;
  for (double t : tau) logdet_d += std::log(t);
  return 0.5 * logdet_d - 0.5 * p.logdet() - 0.5 * quadratic(mu, tau, v, mean);
}

void weighted(std::span<const double> mu, std::span<const double> tau, std::span<double> out) {
  for (std::size_t i = 0; i < mu.size(); ++i) out[i] = tau[i] * mu[i];
}

}  // namespace

double marginal_logterm(std::span<const double> mu, std::span<const double> tau,
                        std::span<const double> v) {
  if (mu.size() != tau.size()) throw std::invalid_argument("marginal_logterm: size mismatch");
  const TriDiagPrecision p = TriDiagPrecision::assemble(tau, v);
  std::vector<double> b(mu.size());
  weighted(mu, tau, b);
  std::vector<double> mean(mu.size());
  p.solve_into(b, mean);
  return logterm_from(mu, tau, v, p, mean);
}

MarginalCache::MarginalCache(std::vector<double> mu, std::vector<double> tau,
                             std::vector<double> v, std::size_t refresh_interval)
    : mu_(std::move(mu)),
      tau_(std::move(tau)),
      v_(std::move(v)),
      refresh_interval_(refresh_interval == 0 ? mu_.size() : refresh_interval) {
  if (mu_.size() != tau_.size()) throw std::invalid_argument("MarginalCache: size mismatch");
  vz_.resize(mu_.size());
  scratch_.resize(mu_.size());
  refresh();
}

void MarginalCache::refresh() {
  prec_.assign(tau_, v_);
  mean_.resize(mu_.size());
  weighted(mu_, tau_, scratch_);
  prec_.solve_into(scratch_, mean_);
  logterm_ = logterm_from(mu_, tau_, v_, prec_, mean_);
  commits_ = 0;
  vz_index_ = static_cast<std::size_t>(-1);
}

MarginalCache::Proposal MarginalCache::propose(std::size_t i, double v_new) const {
  Proposal p;
  p.i = i;
  p.v_new = v_new;
  if (i + 1 >= mu_.size()) throw std::out_of_range("propose: increment index out of range");
  if (!(v_new > 0.0) || !std::isfinite(v_new)) return p;
  p.delta = 1.0 / v_new - 1.0 / v_[i];
  if (vz_index_ != i) {
    prec_.solve_increment(i, vz_);
    vz_index_ = i;
  }
  p.s = vz_[i] - vz_[i + 1];
  p.zm = mean_[i] - mean_[i + 1];
  const double det = 1.0 + p.delta * p.s;
  if (!(det > 0.0)) return p;
  p.log_ratio = -0.5 * std::log(det) - 0.5 * p.delta * p.zm * p.zm / det;
  p.valid = true;
  return p;
}

void MarginalCache::commit(const Proposal& p) {
  if (!p.valid) throw std::logic_error("commit: proposal was rejected");
  if (vz_index_ != p.i) throw std::logic_error("commit: proposal is stale");
  v_[p.i] = p.v_new;
  if (++commits_ >= refresh_interval_) {
    refresh();
    return;
  }
  const double det = 1.0 + p.delta * p.s;
  const double scale = p.delta * p.zm / det;
  for (std::size_t k = 0; k < mean_.size(); ++k) mean_[k] -= scale * vz_[k];
  logterm_ += p.log_ratio;
  // Rebuilding the three touched entries from v keeps P exactly equal to a
  // fresh assembly; refactoring is O(n) like the solve itself.
  double d[2];
  for (std::size_t k : {p.i, p.i + 1}) {
    double e = tau_[k];
    if (k > 0) e += 1.0 / v_[k - 1];
    if (k < v_.size()) e += 1.0 / v_[k];
    d[k - p.i] = e;
  }
  prec_.set_increment(p.i, d[0], d[1], -(1.0 / p.v_new));
  vz_index_ = static_cast<std::size_t>(-1);
}

double MarginalCache::logterm_with_layer(std::size_t i, double mu, double tau) const {
  std::vector<double> m2 = mu_;
  std::vector<double> t2 = tau_;
  m2[i] = mu;
  t2[i] = tau;
  return marginal_logterm(m2, t2, v_);
}

double MarginalCache::layer_log_ratio(std::size_t i, double mu, double tau) const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::domain_error("layer_log_ratio: bad precision");
  std::fill(scratch_.begin(), scratch_.end(), 0.0);
  scratch_[i] = 1.0;
  prec_.solve_into(scratch_, scratch_);
  vz_index_ = static_cast<std::size_t>(-1);
  const double s = scratch_[i];  // V_ii
  const double delta = tau - tau_[i];
  const double eps = tau * mu - tau_[i] * mu_[i];
  const double det = 1.0 + delta * s;
  const double mi = mean_[i];
  return 0.5 * (std::log(tau) - std::log(tau_[i])) - 0.5 * std::log(det) -
         0.5 * (tau * mu * mu - tau_[i] * mu_[i] * mu_[i]) +
         0.5 * (2.0 * eps * mi + eps * eps * s - delta * mi * mi) / det;
}

void MarginalCache::set_layer(std::size_t i, double mu, double tau) {
  mu_[i] = mu;
  tau_[i] = tau;
  refresh();
}

}  // namespace nigrecon::lincore
