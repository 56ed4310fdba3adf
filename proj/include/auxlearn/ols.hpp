#pragma once

#include <Eigen/Dense>
#include <string>

#include "auxlearn/errors.hpp"
#include "auxlearn/types.hpp"

namespace auxlearn {

struct OlsFit {
  CoefficientMatrix b_hat;
  NoiseCovariance sigma_eps_hat;
  GramStatistics gram;
};

namespace detail {

// A'A / n with the result forced exactly symmetric.
inline Eigen::MatrixXd scaled_gram(const Eigen::MatrixXd& a, double n) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.cols(), a.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / n);
  g.triangularView<Eigen::StrictlyUpper>() =
      g.transpose().triangularView<Eigen::StrictlyUpper>();
  return g;
}

inline void require_invertible_gram(const Eigen::MatrixXd& sigma_xx,
                                    const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_xx,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": eigenvalue check failed");
  }
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi) || !(hi > 0.0)) {
    throw NumericalError(std::string(what) +
                         ": covariate Gram matrix is numerically singular "
                         "(eigenvalue range " +
                         std::to_string(lo) + " .. " + std::to_string(hi) +
                         ")");
  }
}

}  // namespace detail

inline GramStatistics gram_statistics(const MultiTaskDataset& data) {
  const double n = static_cast<double>(data.n());
  Eigen::MatrixXd sigma_xx = detail::scaled_gram(data.covariates(), n);
  Eigen::MatrixXd sigma_xy =
      data.covariates().transpose() * data.responses() / n;
  return GramStatistics(std::move(sigma_xx), std::move(sigma_xy));
}

// Per-task sample covariance of OLS residuals, denominator N.
inline NoiseCovariance residual_covariance(const MultiTaskDataset& data,
                                           const CoefficientMatrix& b_hat) {
  if (b_hat.rows() != data.p() ||
      b_hat.cols() != data.responses().cols()) {
    throw DimensionError("coefficient matrix shape does not match dataset");
  }
  const Eigen::MatrixXd residuals =
      data.responses() - data.covariates() * b_hat.entries();
  return NoiseCovariance(
      detail::scaled_gram(residuals, static_cast<double>(data.n())));
}

// Column-wise least squares for all tasks against the shared design.
// Requires N > p; the Gram matrix must be invertible within a 1e-12
// relative eigenvalue floor.
inline OlsFit fit_multitask_ols(const MultiTaskDataset& data) {
  if (data.n() <= data.p()) {
    throw NumericalError("least squares needs more observations than "
                         "covariates, got N = " +
                         std::to_string(data.n()) + ", p = " +
                         std::to_string(data.p()));
  }
  GramStatistics gram = gram_statistics(data);
  detail::require_invertible_gram(gram.sigma_xx_hat(), "least squares");
  Eigen::LLT<Eigen::MatrixXd> llt(gram.sigma_xx_hat());
  if (llt.info() != Eigen::Success) {
    throw NumericalError("least squares: Cholesky factorization failed");
  }
  CoefficientMatrix b_hat(llt.solve(gram.sigma_xy_hat()));
  NoiseCovariance sigma_eps = residual_covariance(data, b_hat);
  return OlsFit{std::move(b_hat), std::move(sigma_eps), std::move(gram)};
}

}  // namespace auxlearn
