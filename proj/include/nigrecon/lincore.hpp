#ifndef NIGRECON_LINCORE_HPP_
#define NIGRECON_LINCORE_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "nigrecon/matrix.hpp"

namespace nigrecon::lincore {

// Raised when an LDL pivot is not positive.
class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Symmetric tridiagonal positive definite matrix with its LDL^T factor.
class TriDiagPrecision {
 public:
  TriDiagPrecision() = default;
  TriDiagPrecision(std::vector<double> diag, std::vector<double> offdiag);

  // D + sum_i v_i^{-1} z_i z_i^T with z_i = e_i - e_{i+1}, i.e.
  //   diag[i] = tau_i + 1/v_{i-1} + 1/v_i,  offdiag[i] = -1/v_i.
  // Throws std::domain_error unless tau > 0, v > 0 and |v| = |tau| - 1.
  static TriDiagPrecision assemble(std::span<const double> tau, std::span<const double> v);
  // assemble() into this object, reusing its storage.
  void assign(std::span<const double> tau, std::span<const double> v);

  std::size_t size() const { return diag_.size(); }
  const std::vector<double>& diag() const { return diag_; }
  const std::vector<double>& offdiag() const { return off_; }

  // Adds delta * z_i z_i^T and refactors.
  void rank_one_increment(std::size_t i, double delta);
  // Replaces diagonal entry i and refactors.
  void set_diag(std::size_t i, double value);
  // Replaces diag[i], diag[i+1] and offdiag[i] and refactors.
  void set_increment(std::size_t i, double diag_i, double diag_next, double off_i);

  std::vector<double> solve(std::span<const double> rhs) const;
  // rhs and out may be the same buffer.
  void solve_into(std::span<const double> rhs, std::span<double> out) const;
  // Solve against the unit vector pair e_i - e_{i+1}.
  void solve_increment(std::size_t i, std::span<double> out) const;
  double logdet() const { return logdet_; }
  // out = L^{-T} D^{-1/2} z: maps iid standard normals to N(0, P^{-1}).
  void noise_into(std::span<const double> z, std::span<double> out) const;
  std::vector<double> multiply(std::span<const double> x) const;

 private:
  void factor();

  std::vector<double> diag_;
  std::vector<double> off_;
  std::vector<double> pivot_;  // D of LDL^T
  std::vector<double> lower_;  // subdiagonal of unit L
  double logdet_ = 0.0;
};

// log N(0; mu, D^{-1}) - log N(0; V D mu, V) with V = (D + W)^{-1}: the
// marginal likelihood of one climate dimension with the path integrated
// out, less the random-walk normalising factors.  Evaluated as
//   1/2 log|D| - 1/2 log|P| - 1/2 [(mu - m)^T D (mu - m) + sum (m_{i+1} - m_i)^2 / v_i]
// with m = V D mu, which avoids the cancellation in mu^T D mu - m^T D mu.
double marginal_logterm(std::span<const double> mu, std::span<const double> tau,
                        std::span<const double> v);

// Per-dimension state for the volatility and indicator moves: the current
// precision P, the posterior mean m = P^{-1} D mu and the log term.
class MarginalCache {
 public:
  struct Proposal {
    std::size_t i = 0;
    double v_new = 0.0;
    double delta = 0.0;  // 1/v_new - 1/v_old
    double s = 0.0;      // z^T V z
    double zm = 0.0;     // z^T m
    double log_ratio = 0.0;
    bool valid = false;  // false when 1 + delta s <= 0 (reject)
  };

  MarginalCache() = default;
  MarginalCache(std::vector<double> mu, std::vector<double> tau, std::vector<double> v,
                std::size_t refresh_interval = 0);

  std::size_t size() const { return mu_.size(); }
  double logterm() const { return logterm_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& mu() const { return mu_; }
  const std::vector<double>& tau() const { return tau_; }
  const std::vector<double>& v() const { return v_; }
  const TriDiagPrecision& precision() const { return prec_; }

  // Log ratio of the marginal terms for v_i -> v_new, by the rank-one
  // identities; one tridiagonal solve.  The solve result is kept until the
  // next call, so commit() must follow the matching propose().
  Proposal propose(std::size_t i, double v_new) const;
  void commit(const Proposal& p);

  // Marginal term with layer i's (mu, tau) replaced, without changing state.
  // Rebuilds from scratch; reference for layer_log_ratio.
  double logterm_with_layer(std::size_t i, double mu, double tau) const;
  // Change in the marginal term when layer i's (mu, tau) is replaced, from
  // one solve against e_i (a rank-one change of D and of D mu).
  double layer_log_ratio(std::size_t i, double mu, double tau) const;
  void set_layer(std::size_t i, double mu, double tau);

  // Recomputes everything from scratch.
  void refresh();

 private:
  std::vector<double> mu_;
  std::vector<double> tau_;
  std::vector<double> v_;
  TriDiagPrecision prec_;
  std::vector<double> mean_;
  double logterm_ = 0.0;
  std::size_t refresh_interval_ = 0;
  std::size_t commits_ = 0;
  mutable std::vector<double> vz_;
  mutable std::vector<double> scratch_;
  mutable std::size_t vz_index_ = static_cast<std::size_t>(-1);
};

struct DenseResult {
  Matrix covariance;  // V
  double logdet_precision = 0.0;
  double logterm = 0.0;
};

// Full-matrix reference for tests: builds D + B^T diag(1/v) B densely,
// inverts it and evaluates both Gaussian densities directly.  n <= 200.
DenseResult dense_oracle(std::span<const double> mu, std::span<const double> tau,
                         std::span<const double> v);

}  // namespace nigrecon::lincore

#endif  // NIGRECON_LINCORE_HPP_
