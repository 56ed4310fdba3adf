#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "auxlearn/csv.hpp"
#include "auxlearn/errors.hpp"
#include "auxlearn/ols.hpp"
#include "auxlearn/rng.hpp"
#include "auxlearn/logistic.hpp"
#include "auxlearn/types.hpp"
#include "auxlearn/weighting.hpp"

namespace auxlearn {

enum class Scenario { varying_np, varying_k, varying_d, low_quality, logistic };

inline std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::varying_np: return "varying_np";
    case Scenario::varying_k: return "varying_k";
    case Scenario::varying_d: return "varying_d";
    case Scenario::low_quality: return "low_quality";
    case Scenario::logistic: return "logistic";
  }
  throw DomainError("unknown scenario value");
}

inline Scenario parse_scenario(const std::string& name) {
  if (name == "varying_np") return Scenario::varying_np;
  if (name == "varying_k") return Scenario::varying_k;
  if (name == "varying_d") return Scenario::varying_d;
  if (name == "low_quality") return Scenario::low_quality;
  if (name == "logistic") return Scenario::logistic;
  throw UsageError("unknown scenario '" + name + "'");
}

struct SimConfig {
  Eigen::Index n = 1000;
  Eigen::Index p = 32;
  int k_aux = 10;
  int d = 5;
  int m_reps = 100;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::varying_np;
  // Count of appended uninformative tasks (low_quality scenario only).
  int k_useless = 0;
  double ar_rho = 0.5;
  double noise_scale = 1.0;
  // Prefix sizes at which the combined estimator is re-fit in the
  // low_quality scenario.
  std::vector<int> prefix_grid = {2, 6, 10, 20, 40, 60};

  void validate() const {
    if (p < 1) throw DomainError("p must be at least 1");
    if (n <= p) {
      throw DomainError("need n > p, got n = " + std::to_string(n) +
                        ", p = " + std::to_string(p));
    }
    if (k_aux < 0) throw DomainError("k_aux must be non-negative");
    if (d < 1 || d > k_aux + 1) {
      throw DomainError("d must lie in 1..k_aux+1, got " + std::to_string(d));
    }
    if (m_reps < 1) throw DomainError("m_reps must be at least 1");
    if (!(ar_rho >= 0.0 && ar_rho < 1.0)) {
      throw DomainError("ar_rho must lie in [0, 1)");
    }
    if (!(noise_scale >= 0.0)) {
      throw DomainError("noise_scale must be non-negative");
    }
    if (k_useless < 0) throw DomainError("k_useless must be non-negative");
    if (scenario == Scenario::low_quality) {
      if (k_useless < 1) {
        throw DomainError("low_quality scenario needs k_useless >= 1");
      }
      for (int k : prefix_grid) {
        if (k < 1 || k > k_aux + k_useless) {
          throw DomainError("prefix size " + std::to_string(k) +
                            " outside 1.." + std::to_string(k_aux + k_useless));
        }
      }
    }
  }
};

// Population covariate covariance: entries rho^|i-j|.
inline Eigen::MatrixXd ar1_covariance(Eigen::Index p, double rho) {
  Eigen::MatrixXd s(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      s(i, j) = std::pow(rho, std::abs(static_cast<double>(i - j)));
    }
  }
  return s;
}

// Rows are independent; within a row, coordinates follow the stationary
// AR(1) recursion x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j with unit
// marginal variance, giving correlation rho^|j1-j2|.
inline Eigen::MatrixXd gen_design(Eigen::Index n, Eigen::Index p, double rho,
                                  Rng& rng) {
  if (n < 1 || p < 1) throw DomainError("design dimensions must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw DomainError("AR coefficient must lie in [0, 1)");
  }
  const double innovation = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    for (Eigen::Index j = 1; j < p; ++j) {
      x(i, j) = rho * x(i, j - 1) + innovation * rng.normal();
    }
  }
  return x;
}

namespace detail {

inline int count_above(const Eigen::VectorXd& eigenvalues, double threshold) {
  int count = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > threshold) ++count;
  }
  return count;
}

}  // namespace detail

// Random p x (K + 1) coefficient matrix with rank exactly d and unit
// operator norm.  Built as a Gaussian factor times a banded 0/1 factor whose
// zero pattern (row i kills columns i .. i + K - d + 1, 1-based) leaves rank
// d.  A draw whose numerical rank misses d is retried once, then rejected;
// d = 1 makes the banded factor vanish identically and always rejects.
inline CoefficientMatrix gen_coefficients(Eigen::Index p, int k_aux, int d,
                                          Rng& rng) {
  if (p < 1) throw DomainError("p must be at least 1");
  if (d < 1 || d > k_aux + 1) {
    throw DomainError("d must lie in 1..k_aux+1, got " + std::to_string(d));
  }
  const Eigen::Index k1 = k_aux + 1;
  const double sd = std::pow(static_cast<double>(p), -0.25);

  const auto attempt = [&]() -> std::optional<CoefficientMatrix> {
    Eigen::MatrixXd phi1(p, d);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        phi1(i, j) = rng.normal(sd);
      }
    }
    Eigen::MatrixXd phi2(d, k1);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < k1; ++j) {
        const bool zeroed = i <= j && j <= i + (k_aux - d + 1);
        phi2(i, j) = zeroed ? 0.0 : 1.0;
      }
    }
    const Eigen::MatrixXd prod = phi1 * phi2;
    const Eigen::VectorXd eigs = coefficient_gram_eigenvalues(prod);
    const double top = eigs.maxCoeff();
    if (!(top > 0.0)) return std::nullopt;
    Eigen::MatrixXd b = prod / std::sqrt(top);
    const Eigen::VectorXd scaled = coefficient_gram_eigenvalues(b);
    if (detail::count_above(scaled, 1e-10) != d) return std::nullopt;
    return CoefficientMatrix(std::move(b), d);
  };

  if (auto first = attempt()) return std::move(*first);
  if (auto second = attempt()) return std::move(*second);
  throw NumericalError("coefficient draw degenerate twice: rank != " +
                       std::to_string(d) + " for K = " +
                       std::to_string(k_aux));
}

// Random (K + 1) x (K + 1) covariance with unit operator norm: S S' scaled
// by its largest eigenvalue, S having iid Gaussian entries.  K = 0 returns
// the 1 x 1 identity exactly.
inline NoiseCovariance gen_noise_cov(int k_aux, Rng& rng) {
  if (k_aux < 0) throw DomainError("k_aux must be non-negative");
  const Eigen::Index k1 = k_aux + 1;
  const double sd = std::pow(static_cast<double>(k1), -0.25);
  Eigen::MatrixXd raw(k1, k1);
  for (Eigen::Index i = 0; i < k1; ++i) {
    for (Eigen::Index j = 0; j < k1; ++j) {
      raw(i, j) = rng.normal(sd);
    }
  }
  if (k1 == 1) {
    return NoiseCovariance(Eigen::MatrixXd::Ones(1, 1));
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k1, k1);
  s.selfadjointView<Eigen::Lower>().rankUpdate(raw);
  s.triangularView<Eigen::StrictlyUpper>() =
      s.transpose().triangularView<Eigen::StrictlyUpper>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !(es.eigenvalues().maxCoeff() > 0.0)) {
    throw NumericalError("noise covariance draw is degenerate");
  }
  return NoiseCovariance(s / es.eigenvalues().maxCoeff());
}

// Residual of b2 after removing the column span of b1.  Only the span
// matters, so b1 may be rank-deficient; directions below the relative
// eigenvalue cutoff are ignored.
inline Eigen::MatrixXd project_out_columns(const Eigen::MatrixXd& b1,
                                           const Eigen::MatrixXd& b2) {
  if (b1.rows() != b2.rows()) {
    throw DimensionError("blocks disagree on row count");
  }
  if (b1.cols() == 0) return b2;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(b1.cols(), b1.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(b1.transpose());
  g.triangularView<Eigen::StrictlyUpper>() =
      g.transpose().triangularView<Eigen::StrictlyUpper>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success) {
    throw NumericalError("projection eigendecomposition failed");
  }
  const double cutoff = 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
  Eigen::MatrixXd residual = b2;
  for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
    if (es.eigenvalues()(j) <= cutoff) continue;
    const Eigen::VectorXd u =
        b1 * es.eigenvectors().col(j) / std::sqrt(es.eigenvalues()(j));
    residual.noalias() -= u * (u.transpose() * residual);
  }
  return residual;
}

// Appends k_prime uninformative tasks: a fresh full-rank block drawn by the
// same recipe, projected orthogonal to the informative block's column span
// so it contributes nothing toward the primary coefficients.
inline CoefficientMatrix gen_low_quality_block(const CoefficientMatrix& b1,
                                               int k_prime, Rng& rng) {
  if (k_prime < 1) throw DomainError("k_prime must be at least 1");
  const CoefficientMatrix b2 =
      gen_coefficients(b1.rows(), k_prime - 1, k_prime, rng);
  Eigen::MatrixXd b2_star = project_out_columns(b1.entries(), b2.entries());
  Eigen::MatrixXd full(b1.rows(), b1.cols() + k_prime);
  full.leftCols(b1.cols()) = b1.entries();
  full.rightCols(k_prime) = b2_star;

  std::optional<int> total_rank;
  if (b1.declared_rank()) {
    total_rank = *b1.declared_rank() + k_prime;
    const Eigen::VectorXd eigs = coefficient_gram_eigenvalues(full);
    const double floor = 1e-10 * std::max(1.0, eigs.maxCoeff());
    if (detail::count_above(eigs, floor) != *total_rank) {
      throw NumericalError("projected block lost rank");
    }
  }
  return CoefficientMatrix(std::move(full), total_rank);
}

// n draws from N(0, sigma) as rows, using the symmetric eigenvalue-based
// square root of sigma.
inline Eigen::MatrixXd gaussian_noise(Eigen::Index n,
                                      const NoiseCovariance& sigma, Rng& rng) {
  if (n < 1) throw DomainError("sample count must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma.entries());
  if (es.info() != Eigen::Success) {
    throw NumericalError("noise covariance square root failed");
  }
  const Eigen::MatrixXd root = es.eigenvectors() *
                               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                               es.eigenvectors().transpose();
  Eigen::MatrixXd z(n, sigma.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < sigma.dim(); ++k) {
      z(i, k) = rng.normal();
    }
  }
  return z * root;
}

struct EstimatorResult {
  std::string label;
  std::vector<double> sq_errors;

  double mse() const {
    double acc = 0.0;
    for (double e : sq_errors) acc += e;
    return sq_errors.empty() ? 0.0 : acc / static_cast<double>(sq_errors.size());
  }

  double sd() const {
    const std::size_t m = sq_errors.size();
    if (m < 2) return 0.0;
    const double mean = mse();
    double acc = 0.0;
    for (double e : sq_errors) acc += (e - mean) * (e - mean);
    return std::sqrt(acc / static_cast<double>(m - 1));
  }
};

struct MseReport {
  SimConfig config;
  std::vector<EstimatorResult> estimators;
};

namespace detail {

template <typename F>
inline void run_replication_checked(int rep, std::uint64_t seed, F&& body) {
  const auto context = [&](const char* what) {
    return "replication " + std::to_string(rep) + " (master seed " +
           std::to_string(seed) + ") failed: " + what;
  };
  try {
    body();
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(context(e.what()));
  } catch (const Error& e) {
    throw NumericalError(context(e.what()));
  }
}

inline int numerical_rank(const Eigen::MatrixXd& b) {
  const Eigen::VectorXd eigs = coefficient_gram_eigenvalues(b);
  return count_above(eigs, 1e-10 * std::max(1.0, eigs.maxCoeff()));
}

}  // namespace detail

// Monte Carlo replications of the configured scenario.  Every random
// quantity draws from its own stream derived from (seed, replication, tag),
// so estimates for one replication do not depend on how many others run.
inline MseReport run_replications(const SimConfig& config) {
  config.validate();

  MseReport report;
  report.config = config;

  const bool lowq = config.scenario == Scenario::low_quality;
  const bool logistic = config.scenario == Scenario::logistic;
  const int k_total = config.k_aux + (lowq ? config.k_useless : 0);
  const int d_total = config.d + (lowq ? config.k_useless : 0);

  report.estimators.push_back({logistic ? "MLE" : "OLS", {}});
  report.estimators.push_back({"ORACLE", {}});
  report.estimators.push_back({"FEASIBLE", {}});
  if (lowq) {
    for (int k : config.prefix_grid) {
      report.estimators.push_back({"FEASIBLE(" + std::to_string(k) + ")", {}});
    }
  }
  for (auto& est : report.estimators) {
    est.sq_errors.reserve(static_cast<std::size_t>(config.m_reps));
  }

  for (int m = 0; m < config.m_reps; ++m) {
    detail::run_replication_checked(m, config.seed, [&] {
      Rng rng_b(derive_seed(config.seed, m, stream::coefficients));
      CoefficientMatrix b =
          gen_coefficients(config.p, config.k_aux, config.d, rng_b);
      if (lowq) {
        b = gen_low_quality_block(b, config.k_useless, rng_b);
      }
      const Eigen::VectorXd beta0 = b.primary();

      Rng rng_x(derive_seed(config.seed, m, stream::design));
      Eigen::MatrixXd x = gen_design(config.n, config.p, config.ar_rho, rng_x);

      if (logistic) {
        Eigen::MatrixXd probs = x * b.entries();
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
          for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            probs(i, k) = detail::sigmoid(probs(i, k));
          }
        }
        Rng rng_y(derive_seed(config.seed, m, stream::response));
        Eigen::MatrixXd y(config.n, k_total + 1);
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          for (Eigen::Index k = 0; k < y.cols(); ++k) {
            y(i, k) = rng_y.uniform() < probs(i, k) ? 1.0 : 0.0;
          }
        }
        MultiTaskDataset data(
            std::move(x), std::move(y),
            std::vector<TaskKind>(static_cast<std::size_t>(k_total) + 1,
                                  TaskKind::binary));
        LogisticFit fit = fit_multitask_logistic(data);
        if (!fit.all_converged()) {
          throw ConvergenceError("a logistic task hit the iteration cap");
        }
        report.estimators[0].sq_errors.push_back(
            (fit.b_hat.primary() - beta0).squaredNorm());

        Eigen::MatrixXd sigma_true =
            Eigen::MatrixXd::Zero(k_total + 1, k_total + 1);
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            acc += probs(i, k) * (1.0 - probs(i, k));
          }
          sigma_true(k, k) = acc / static_cast<double>(config.n);
        }
        const WeightVector w_star =
            oracle_weight(b, NoiseCovariance(std::move(sigma_true)), config.d);
        report.estimators[1].sq_errors.push_back(
            (fit.b_hat.entries() * w_star.weights() - beta0).squaredNorm());

        const WeightedEstimate feasible = weight_logistic_fit(fit, config.d);
        report.estimators[2].sq_errors.push_back(
            (feasible.beta_weighted - beta0).squaredNorm());
        return;
      }

      Rng rng_s(derive_seed(config.seed, m, stream::noise_cov));
      NoiseCovariance sigma = gen_noise_cov(k_total, rng_s);

      Rng rng_e(derive_seed(config.seed, m, stream::noise));
      Eigen::MatrixXd eps = gaussian_noise(config.n, sigma, rng_e);
      if (config.noise_scale != 1.0) eps *= config.noise_scale;

      Eigen::MatrixXd y = x * b.entries() + eps;
      MultiTaskDataset data(
          std::move(x), std::move(y),
          std::vector<TaskKind>(static_cast<std::size_t>(k_total) + 1,
                                TaskKind::continuous));
      OlsFit fit = fit_multitask_ols(data);

      report.estimators[0].sq_errors.push_back(
          (fit.b_hat.primary() - beta0).squaredNorm());

      const WeightVector w_star = oracle_weight(b, sigma, d_total);
      report.estimators[1].sq_errors.push_back(
          (fit.b_hat.entries() * w_star.weights() - beta0).squaredNorm());

      const WeightVector w_hat = feasible_weight(fit, d_total);
      report.estimators[2].sq_errors.push_back(
          (fit.b_hat.entries() * w_hat.weights() - beta0).squaredNorm());

      if (lowq) {
        for (std::size_t g = 0; g < config.prefix_grid.size(); ++g) {
          const int k = config.prefix_grid[g];
          const Eigen::MatrixXd b_true_sub = b.entries().leftCols(k + 1);
          const int d_sub = detail::numerical_rank(b_true_sub);
          const CoefficientMatrix b_hat_sub(
              fit.b_hat.entries().leftCols(k + 1));
          const NoiseCovariance sigma_sub(
              fit.sigma_eps_hat.entries().topLeftCorner(k + 1, k + 1));
          const WeightVector w_sub =
              feasible_weight(b_hat_sub, sigma_sub, d_sub);
          report.estimators[3 + g].sq_errors.push_back(
              (b_hat_sub.entries() * w_sub.weights() - beta0).squaredNorm());
        }
      }
    });
  }
  return report;
}

struct NormalityReport {
  SimConfig config;
  Eigen::VectorXd alpha;
  // sqrt(N) alpha' (beta_weighted - beta_true), one entry per replication.
  std::vector<double> z;
  double empirical_variance = 0.0;
  double theoretical_variance = 0.0;
  double ratio = 0.0;
};

// Draws one truth (coefficients and noise covariance), then replicates only
// the sample.  The reported theoretical variance is the plug-in limit
// w*' S w* alpha' Sxx^-1 alpha for that single truth.
inline NormalityReport normality_check(const SimConfig& config,
                                       const Eigen::VectorXd& alpha) {
  config.validate();
  if (config.m_reps < 2) {
    throw DomainError("variance check needs at least 2 replications");
  }
  if (alpha.size() != config.p) {
    throw DimensionError("alpha has " + std::to_string(alpha.size()) +
                         " entries for p = " + std::to_string(config.p));
  }
  if (alpha.norm() == 0.0) {
    throw DomainError("alpha must be non-zero");
  }

  NormalityReport report;
  report.config = config;
  report.alpha = alpha;
  report.z.reserve(static_cast<std::size_t>(config.m_reps));

  Rng rng_b(derive_seed(config.seed, stream::shared_truth,
                        stream::coefficients));
  const CoefficientMatrix b =
      gen_coefficients(config.p, config.k_aux, config.d, rng_b);
  Rng rng_s(derive_seed(config.seed, stream::shared_truth, stream::noise_cov));
  const NoiseCovariance sigma = gen_noise_cov(config.k_aux, rng_s);
  const Eigen::VectorXd beta0 = b.primary();

  const WeightVector w_star = oracle_weight(b, sigma, config.d);
  const Eigen::MatrixXd sigma_xx = ar1_covariance(config.p, config.ar_rho);
  const Eigen::VectorXd sxx_inv_alpha =
      Eigen::LLT<Eigen::MatrixXd>(sigma_xx).solve(alpha);
  report.theoretical_variance = config.noise_scale * config.noise_scale *
                                variance_functional(w_star, sigma) *
                                alpha.dot(sxx_inv_alpha);

  for (int m = 0; m < config.m_reps; ++m) {
    detail::run_replication_checked(m, config.seed, [&] {
      Rng rng_x(derive_seed(config.seed, m, stream::design));
      Eigen::MatrixXd x = gen_design(config.n, config.p, config.ar_rho, rng_x);
      Rng rng_e(derive_seed(config.seed, m, stream::noise));
      Eigen::MatrixXd eps = gaussian_noise(config.n, sigma, rng_e);
      if (config.noise_scale != 1.0) eps *= config.noise_scale;
      Eigen::MatrixXd y = x * b.entries() + eps;
      MultiTaskDataset data(
          std::move(x), std::move(y),
          std::vector<TaskKind>(static_cast<std::size_t>(config.k_aux) + 1,
                                TaskKind::continuous));
      const OlsFit fit = fit_multitask_ols(data);
      const WeightVector w_hat = feasible_weight(fit, config.d);
      const Eigen::VectorXd beta_weighted =
          fit.b_hat.entries() * w_hat.weights();
      report.z.push_back(std::sqrt(static_cast<double>(config.n)) *
                         alpha.dot(beta_weighted - beta0));
    });
  }

  double mean = 0.0;
  for (double v : report.z) mean += v;
  mean /= static_cast<double>(report.z.size());
  double acc = 0.0;
  for (double v : report.z) acc += (v - mean) * (v - mean);
  report.empirical_variance = acc / static_cast<double>(report.z.size() - 1);
  report.ratio = report.empirical_variance / report.theoretical_variance;
  return report;
}

// One detail row per estimator and replication.
inline void write_replication_csv(const std::filesystem::path& path,
                                  const std::vector<MseReport>& reports,
                                  const std::string& config_comment) {
  csv::Writer out(path);
  out.comment(config_comment);
  out.row({"scenario", "n", "p", "k_aux", "d", "estimator", "rep",
           "sq_error"});
  for (const MseReport& report : reports) {
    const SimConfig& c = report.config;
    for (const EstimatorResult& est : report.estimators) {
      for (std::size_t m = 0; m < est.sq_errors.size(); ++m) {
        out.row({scenario_name(c.scenario), std::to_string(c.n),
                 std::to_string(c.p), std::to_string(c.k_aux),
                 std::to_string(c.d), est.label, std::to_string(m),
                 csv::format_double(est.sq_errors[m])});
      }
    }
  }
  out.close();
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<MseReport>& reports,
                              const std::string& config_comment) {
  csv::Writer out(path);
  out.comment(config_comment);
  out.row({"scenario", "n", "p", "k_aux", "d", "estimator", "mse",
           "sq_error_sd", "reps"});
  for (const MseReport& report : reports) {
    const SimConfig& c = report.config;
    for (const EstimatorResult& est : report.estimators) {
      out.row({scenario_name(c.scenario), std::to_string(c.n),
               std::to_string(c.p), std::to_string(c.k_aux),
               std::to_string(c.d), est.label, csv::format_double(est.mse()),
               csv::format_double(est.sd()),
               std::to_string(est.sq_errors.size())});
    }
  }
  out.close();
}

}  // namespace auxlearn
