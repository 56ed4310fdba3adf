#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "auxlearn/errors.hpp"
#include "auxlearn/types.hpp"
#include "auxlearn/weighting.hpp"

namespace auxlearn {

namespace detail {

// Overflow-safe logistic function, split by sign of the argument.
inline double sigmoid(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  if (eta > 0.0) {
    return eta + std::log1p(std::exp(-eta));
  }
  return std::log1p(std::exp(eta));
}

inline double bernoulli_loglik(const Eigen::VectorXd& y,
                               const Eigen::VectorXd& eta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    ll += y(i) * eta(i) - softplus(eta(i));
  }
  return ll;
}

}  // namespace detail

struct LogisticMle {
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
  // Log-likelihood after each accepted update, starting at beta = 0.
  std::vector<double> loglik_path;
};

// Per-task logistic fits stacked column-wise, with a diagonal noise scale
// sigma_k^2 = mean of p_hat (1 - p_hat) per task.
struct LogisticFit {
  CoefficientMatrix b_hat;
  NoiseCovariance sigma_eps_hat;
  std::vector<bool> converged;
  std::vector<int> iterations;

  bool all_converged() const {
    for (bool c : converged) {
      if (!c) return false;
    }
    return true;
  }
};

struct WeightedLogisticFit {
  WeightedEstimate estimate;
  LogisticFit fit;
};

// Newton iterations with step halving on the Bernoulli log-likelihood.
// Starts at beta = 0 and stops when the accepted step has infinity norm at
// most `tol`.  Divergence toward separation (large coefficients while the
// score stays away from zero) raises ConvergenceError.
inline LogisticMle fit_logistic_mle(const MultiTaskDataset& data, int task,
                                    int max_iter = 100, double tol = 1e-8) {
  if (task < 0 || task > data.k_aux()) {
    throw DomainError("task index " + std::to_string(task) + " outside 0.." +
                      std::to_string(data.k_aux()));
  }
  if (data.kind(task) != TaskKind::binary) {
    throw DomainError("task " + std::to_string(task) +
                      " is not a binary task");
  }
  if (data.n() <= data.p()) {
    throw NumericalError("logistic fit needs more observations than "
                         "covariates, got N = " +
                         std::to_string(data.n()) + ", p = " +
                         std::to_string(data.p()));
  }
  if (max_iter < 1) {
    throw DomainError("max_iter must be at least 1");
  }

  const Eigen::MatrixXd& x = data.covariates();
  const Eigen::VectorXd y = data.responses().col(task);
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();

  LogisticMle result;
  result.beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = detail::bernoulli_loglik(y, eta);
  result.loglik_path.push_back(ll);

  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd mu(n);
    Eigen::VectorXd root_w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = detail::sigmoid(eta(i));
      mu(i) = m;
      root_w(i) = std::sqrt(m * (1.0 - m));
    }
    const Eigen::VectorXd score = x.transpose() * (y - mu);

    if (result.beta.norm() > 1e4 &&
        score.lpNorm<Eigen::Infinity>() > 1e-6 * static_cast<double>(n)) {
      throw ConvergenceError("logistic fit for task " + std::to_string(task) +
                             " is diverging; the classes may be separable");
    }

    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(p, p);
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(
        (x.array().colwise() * root_w.array()).matrix().transpose());
    hessian.triangularView<Eigen::StrictlyUpper>() =
        hessian.transpose().triangularView<Eigen::StrictlyUpper>();
    detail::require_invertible_gram(hessian, "logistic fit");

    const Eigen::VectorXd step =
        Eigen::LLT<Eigen::MatrixXd>(hessian).solve(score);

    // Halve the step until the log-likelihood stops decreasing.  The slack
    // absorbs rounding near the optimum.
    double t = 1.0;
    Eigen::VectorXd eta_step = x * step;
    double ll_new = detail::bernoulli_loglik(y, eta + eta_step);
    int halvings = 0;
    const double slack = 1e-10 * (1.0 + std::abs(ll));
    while (ll_new < ll - slack && halvings < 30) {
      t *= 0.5;
      ll_new = detail::bernoulli_loglik(y, eta + t * eta_step);
      ++halvings;
    }
    if (ll_new < ll - slack) {
      // No usable step remains; report the current point as non-converged.
      result.iterations = iter;
      return result;
    }

    result.beta += t * step;
    eta += t * eta_step;
    ll = ll_new;
    result.loglik_path.push_back(ll);
    result.iterations = iter;
    if ((t * step).lpNorm<Eigen::Infinity>() <= tol) {
      result.converged = true;
      return result;
    }
  }

  // Iteration cap reached.  Perfectly fitted labels mean the likelihood has
  // no finite maximizer, which is separation rather than slow convergence.
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(y(i) - detail::sigmoid(eta(i))));
  }
  if (worst < 1e-6) {
    throw ConvergenceError("logistic fit for task " + std::to_string(task) +
                           ": classes are separable, no finite maximizer "
                           "exists");
  }
  return result;
}

// Diagonal noise scale from fitted class probabilities.  Entry k holds the
// sample mean of p_hat_ik (1 - p_hat_ik) for task k; off-diagonals are zero.
inline NoiseCovariance logistic_noise_variance(const MultiTaskDataset& data,
                                               const CoefficientMatrix& b_hat) {
  if (b_hat.rows() != data.p() || b_hat.cols() != data.responses().cols()) {
    throw DimensionError("coefficient matrix shape does not match dataset");
  }
  const Eigen::MatrixXd eta = data.covariates() * b_hat.entries();
  Eigen::MatrixXd sigma =
      Eigen::MatrixXd::Zero(b_hat.cols(), b_hat.cols());
  for (Eigen::Index k = 0; k < b_hat.cols(); ++k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const double m = detail::sigmoid(eta(i, k));
      acc += m * (1.0 - m);
    }
    sigma(k, k) = acc / static_cast<double>(data.n());
    if (!(sigma(k, k) > 0.0) || sigma(k, k) > 0.25) {
      throw NumericalError("fitted variance for task " + std::to_string(k) +
                           " fell outside (0, 0.25]");
    }
  }
  return NoiseCovariance(std::move(sigma));
}

// Fits every task by logistic MLE.  All tasks must be binary.
inline LogisticFit fit_multitask_logistic(const MultiTaskDataset& data,
                                          int max_iter = 100,
                                          double tol = 1e-8) {
  for (int k = 0; k <= data.k_aux(); ++k) {
    if (data.kind(k) != TaskKind::binary) {
      throw DomainError("task " + std::to_string(k) +
                        " is not binary; logistic fitting requires 0/1 "
                        "responses for every task");
    }
  }
  const Eigen::Index k1 = data.responses().cols();
  Eigen::MatrixXd b(data.p(), k1);
  std::vector<bool> converged;
  std::vector<int> iterations;
  converged.reserve(static_cast<std::size_t>(k1));
  iterations.reserve(static_cast<std::size_t>(k1));
  for (Eigen::Index k = 0; k < k1; ++k) {
    LogisticMle mle = fit_logistic_mle(data, static_cast<int>(k), max_iter,
                                       tol);
    b.col(k) = mle.beta;
    converged.push_back(mle.converged);
    iterations.push_back(mle.iterations);
  }
  CoefficientMatrix b_hat(std::move(b));
  NoiseCovariance sigma = logistic_noise_variance(data, b_hat);
  return LogisticFit{std::move(b_hat), std::move(sigma), std::move(converged),
                     std::move(iterations)};
}

inline WeightedEstimate weight_logistic_fit(const LogisticFit& fit, int d) {
  const WeightVector w = feasible_weight(fit.b_hat, fit.sigma_eps_hat, d);
  return weighted_estimate(fit.b_hat, fit.sigma_eps_hat, w);
}

// Full pipeline: per-task MLEs, diagonal noise scale, combination weight,
// weighted coefficient estimate.  Convergence flags ride along so the
// caller can decide how to treat tasks that hit the iteration cap.
inline WeightedLogisticFit fit_weighted_logistic(const MultiTaskDataset& data,
                                                 int d, int max_iter = 100,
                                                 double tol = 1e-8) {
  LogisticFit fit = fit_multitask_logistic(data, max_iter, tol);
  WeightedEstimate estimate = weight_logistic_fit(fit, d);
  return WeightedLogisticFit{std::move(estimate), std::move(fit)};
}

}  // namespace auxlearn
