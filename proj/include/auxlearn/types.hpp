#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "auxlearn/errors.hpp"

namespace auxlearn {

enum class TaskKind { continuous, binary };

namespace detail {

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void require_symmetric(const Eigen::MatrixXd& m, double rel_tol,
                              const std::string& name) {
  if (m.rows() != m.cols()) {
    throw DimensionError(name + " must be square, got " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
  if (m.size() == 0) return;
  const double scale = std::max(1.0, max_abs(m));
  const double asym = max_abs(m - m.transpose().eval());
  if (asym > rel_tol * scale) {
    throw DomainError(name + " is not symmetric (max asymmetry " +
                      std::to_string(asym) + ")");
  }
}

inline void require_finite(const Eigen::MatrixXd& m, const std::string& name) {
  if (!m.allFinite()) {
    throw DomainError(name + " contains a non-finite entry");
  }
}

}  // namespace detail

// Shared-design multi-task sample: one covariate matrix, one response column
// per task.  Task 0 is the primary task; tasks 1..K are auxiliary.
class MultiTaskDataset {
 public:
  MultiTaskDataset(Eigen::MatrixXd covariates, Eigen::MatrixXd responses,
                   std::vector<TaskKind> task_kinds,
                   std::vector<std::string> response_names = {},
                   std::vector<std::string> covariate_names = {})
      : covariates_(std::move(covariates)),
        responses_(std::move(responses)),
        task_kinds_(std::move(task_kinds)),
        response_names_(std::move(response_names)),
        covariate_names_(std::move(covariate_names)) {
    if (covariates_.rows() != responses_.rows()) {
      throw DimensionError(
          "covariates and responses disagree on sample size: " +
          std::to_string(covariates_.rows()) + " vs " +
          std::to_string(responses_.rows()));
    }
    if (covariates_.rows() < 1) {
      throw DomainError("dataset must contain at least one observation");
    }
    if (covariates_.cols() < 1) {
      throw DomainError("dataset must contain at least one covariate");
    }
    if (responses_.cols() < 1) {
      throw DomainError("dataset must contain at least one task");
    }
    if (static_cast<Eigen::Index>(task_kinds_.size()) != responses_.cols()) {
      throw DimensionError("task kind list has " +
                           std::to_string(task_kinds_.size()) +
                           " entries for " + std::to_string(responses_.cols()) +
                           " tasks");
    }
    if (response_names_.empty()) {
      response_names_.reserve(static_cast<std::size_t>(responses_.cols()));
      for (Eigen::Index k = 0; k < responses_.cols(); ++k) {
        response_names_.push_back("y" + std::to_string(k));
      }
    }
    if (covariate_names_.empty()) {
      covariate_names_.reserve(static_cast<std::size_t>(covariates_.cols()));
      for (Eigen::Index j = 0; j < covariates_.cols(); ++j) {
        covariate_names_.push_back("x" + std::to_string(j + 1));
      }
    }
    if (static_cast<Eigen::Index>(response_names_.size()) !=
        responses_.cols()) {
      throw DimensionError("response name list does not match task count");
    }
    if (static_cast<Eigen::Index>(covariate_names_.size()) !=
        covariates_.cols()) {
      throw DimensionError("covariate name list does not match column count");
    }
    for (Eigen::Index k = 0; k < responses_.cols(); ++k) {
      if (task_kinds_[static_cast<std::size_t>(k)] != TaskKind::binary)
        continue;
      for (Eigen::Index i = 0; i < responses_.rows(); ++i) {
        const double v = responses_(i, k);
        if (v != 0.0 && v != 1.0) {
          throw DomainError("binary task '" +
                            response_names_[static_cast<std::size_t>(k)] +
                            "' has value " + std::to_string(v) + " at row " +
                            std::to_string(i + 1) + "; labels must be 0 or 1");
        }
      }
    }
  }

  Eigen::Index n() const { return covariates_.rows(); }
  Eigen::Index p() const { return covariates_.cols(); }
  // Number of auxiliary tasks K; total task count is K + 1.
  int k_aux() const { return static_cast<int>(responses_.cols()) - 1; }

  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const Eigen::MatrixXd& responses() const { return responses_; }
  const std::vector<TaskKind>& task_kinds() const { return task_kinds_; }
  TaskKind kind(int task) const {
    return task_kinds_.at(static_cast<std::size_t>(task));
  }
  const std::vector<std::string>& response_names() const {
    return response_names_;
  }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }

 private:
  Eigen::MatrixXd covariates_;
  Eigen::MatrixXd responses_;
  std::vector<TaskKind> task_kinds_;
  std::vector<std::string> response_names_;
  std::vector<std::string> covariate_names_;
};

// Dataset restricted to the primary task plus the given auxiliary tasks
// (1-based indices, strictly increasing after sorting, duplicates rejected).
inline MultiTaskDataset restrict_tasks(const MultiTaskDataset& data,
                                       std::vector<int> aux_tasks) {
  std::sort(aux_tasks.begin(), aux_tasks.end());
  if (std::adjacent_find(aux_tasks.begin(), aux_tasks.end()) !=
      aux_tasks.end()) {
    throw DomainError("auxiliary task list contains duplicates");
  }
  for (int k : aux_tasks) {
    if (k < 1 || k > data.k_aux()) {
      throw DomainError("auxiliary task index " + std::to_string(k) +
                        " outside 1.." + std::to_string(data.k_aux()));
    }
  }
  const auto m = static_cast<Eigen::Index>(aux_tasks.size()) + 1;
  Eigen::MatrixXd responses(data.n(), m);
  std::vector<TaskKind> kinds;
  std::vector<std::string> names;
  kinds.reserve(static_cast<std::size_t>(m));
  names.reserve(static_cast<std::size_t>(m));
  responses.col(0) = data.responses().col(0);
  kinds.push_back(data.kind(0));
  names.push_back(data.response_names()[0]);
  for (std::size_t j = 0; j < aux_tasks.size(); ++j) {
    const int k = aux_tasks[j];
    responses.col(static_cast<Eigen::Index>(j) + 1) = data.responses().col(k);
    kinds.push_back(data.kind(k));
    names.push_back(data.response_names()[static_cast<std::size_t>(k)]);
  }
  return MultiTaskDataset(data.covariates(), std::move(responses),
                          std::move(kinds), std::move(names),
                          data.covariate_names());
}

// Dataset restricted to the given rows (0-based, order preserved).
inline MultiTaskDataset select_rows(const MultiTaskDataset& data,
                                    const std::vector<Eigen::Index>& rows) {
  for (Eigen::Index i : rows) {
    if (i < 0 || i >= data.n()) {
      throw DomainError("row index " + std::to_string(i) + " out of range");
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(m, data.p());
  Eigen::MatrixXd y(m, data.responses().cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    x.row(r) = data.covariates().row(rows[static_cast<std::size_t>(r)]);
    y.row(r) = data.responses().row(rows[static_cast<std::size_t>(r)]);
  }
  return MultiTaskDataset(std::move(x), std::move(y), data.task_kinds(),
                          data.response_names(), data.covariate_names());
}

// p x (K + 1) coefficient matrix; column 0 belongs to the primary task.
// declared_rank is carried when the generating process fixes it.
class CoefficientMatrix {
 public:
  explicit CoefficientMatrix(Eigen::MatrixXd entries,
                             std::optional<int> declared_rank = std::nullopt)
      : entries_(std::move(entries)), declared_rank_(declared_rank) {
    if (entries_.rows() < 1 || entries_.cols() < 1) {
      throw DimensionError("coefficient matrix must be non-empty");
    }
    detail::require_finite(entries_, "coefficient matrix");
    if (declared_rank_) {
      if (*declared_rank_ < 1 ||
          *declared_rank_ > static_cast<int>(entries_.cols())) {
        throw DomainError("declared rank " + std::to_string(*declared_rank_) +
                          " outside 1.." + std::to_string(entries_.cols()));
      }
    }
  }

  const Eigen::MatrixXd& entries() const { return entries_; }
  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  int k_aux() const { return static_cast<int>(entries_.cols()) - 1; }
  std::optional<int> declared_rank() const { return declared_rank_; }
  Eigen::VectorXd primary() const { return entries_.col(0); }

 private:
  Eigen::MatrixXd entries_;
  std::optional<int> declared_rank_;
};

// (K + 1) x (K + 1) task noise covariance.  Construction enforces symmetry
// (relative tolerance 1e-12) and eigenvalues above -1e-10 relative to the
// largest magnitude, so slightly rounded sample covariances pass.
class NoiseCovariance {
 public:
  explicit NoiseCovariance(Eigen::MatrixXd entries)
      : entries_(std::move(entries)) {
    if (entries_.rows() < 1) {
      throw DimensionError("noise covariance must be non-empty");
    }
    detail::require_symmetric(entries_, 1e-12, "noise covariance");
    detail::require_finite(entries_, "noise covariance");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        entries_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      throw NumericalError("noise covariance eigenvalue check failed");
    }
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lo < -1e-10 * std::max(1.0, hi)) {
      throw DomainError("noise covariance is not positive semi-definite "
                        "(smallest eigenvalue " +
                        std::to_string(lo) + ")");
    }
  }

  const Eigen::MatrixXd& entries() const { return entries_; }
  Eigen::Index dim() const { return entries_.rows(); }

 private:
  Eigen::MatrixXd entries_;
};

// Combination weights over the K + 1 task estimates.  Entries may be
// negative; they are not required to sum to one.  pseudo_inverse_fallback
// reports that the defining linear system was rank-deficient and was solved
// by eigenvalue truncation.
class WeightVector {
 public:
  explicit WeightVector(Eigen::VectorXd weights,
                        bool pseudo_inverse_fallback = false)
      : weights_(std::move(weights)),
        pseudo_inverse_fallback_(pseudo_inverse_fallback) {
    if (weights_.size() < 1) {
      throw DimensionError("weight vector must be non-empty");
    }
    if (!weights_.allFinite()) {
      throw DomainError("weight vector contains a non-finite entry");
    }
  }

  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index size() const { return weights_.size(); }
  bool pseudo_inverse_fallback() const { return pseudo_inverse_fallback_; }

 private:
  Eigen::VectorXd weights_;
  bool pseudo_inverse_fallback_;
};

// Sample second moments: sigma_xx_hat = X'X / N and sigma_xy_hat = X'Y / N.
class GramStatistics {
 public:
  GramStatistics(Eigen::MatrixXd sigma_xx_hat, Eigen::MatrixXd sigma_xy_hat)
      : sigma_xx_hat_(std::move(sigma_xx_hat)),
        sigma_xy_hat_(std::move(sigma_xy_hat)) {
    detail::require_symmetric(sigma_xx_hat_, 1e-12, "sigma_xx_hat");
    if (sigma_xy_hat_.rows() != sigma_xx_hat_.rows()) {
      throw DimensionError("sigma_xy_hat has " +
                           std::to_string(sigma_xy_hat_.rows()) +
                           " rows, expected " +
                           std::to_string(sigma_xx_hat_.rows()));
    }
  }

  const Eigen::MatrixXd& sigma_xx_hat() const { return sigma_xx_hat_; }
  const Eigen::MatrixXd& sigma_xy_hat() const { return sigma_xy_hat_; }

 private:
  Eigen::MatrixXd sigma_xx_hat_;
  Eigen::MatrixXd sigma_xy_hat_;
};

// True when B * w reproduces the primary column within tol relative to
// max(1, ||primary||).
inline bool validate_weight_feasibility(const CoefficientMatrix& b,
                                        const WeightVector& w,
                                        double tol = 1e-8) {
  if (w.size() != b.cols()) {
    throw DimensionError("weight length " + std::to_string(w.size()) +
                         " does not match task count " +
                         std::to_string(b.cols()));
  }
  const Eigen::VectorXd gap = b.entries() * w.weights() - b.primary();
  return gap.norm() <= tol * std::max(1.0, b.primary().norm());
}

}  // namespace auxlearn
