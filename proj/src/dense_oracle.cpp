#include <Eigen/Dense>
#include <cmath>

#include "nigrecon/lincore.hpp"

namespace nigrecon::lincore {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// log N(0; mean, cov) from a Cholesky factor of cov.
double gaussian_at_zero(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("dense_oracle: covariance not SPD");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::VectorXd w = llt.solve(mean);
  return -0.5 * static_cast<double>(mean.size()) * kLogTwoPi - 0.5 * logdet - 0.5 * mean.dot(w);
}

}  // namespace

DenseResult dense_oracle(std::span<const double> mu, std::span<const double> tau,
                         std::span<const double> v) {
  const Eigen::Index n = static_cast<Eigen::Index>(mu.size());
  if (n == 0 || n > 200) throw std::invalid_argument("dense_oracle: need 1 <= n <= 200");
  if (tau.size() != mu.size() || v.size() + 1 != mu.size()) {
    throw std::invalid_argument("dense_oracle: size mismatch");
  }
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) D(i, i) = tau[i];
  // B is the (n-1) x n differencing matrix; W = B^T diag(1/v) B.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n - 1, n);
  Eigen::VectorXd inv_v(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    B(i, i) = -1.0;
    B(i, i + 1) = 1.0;
    inv_v[i] = 1.0 / v[i];
  }
  const Eigen::MatrixXd P = D + B.transpose() * inv_v.asDiagonal() * B;
  const Eigen::MatrixXd V = P.inverse();
  const Eigen::Map<const Eigen::VectorXd> m(mu.data(), n);

  DenseResult out;
  out.covariance = Matrix(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) out.covariance(r, c) = V(r, c);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(P);
  out.logdet_precision = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd Dinv = D.inverse();
  out.logterm = gaussian_at_zero(m, Dinv) - gaussian_at_zero(V * D * m, V);
  return out;
}

}  // namespace nigrecon::lincore
