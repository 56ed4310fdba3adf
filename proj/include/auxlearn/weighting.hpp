#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "auxlearn/errors.hpp"
#include "auxlearn/ols.hpp"
#include "auxlearn/types.hpp"

namespace auxlearn {

// Orthonormal basis of the small-eigenvalue subspace of B'B.  theta has
// K + 1 rows and K + 1 - d columns, ordered by ascending eigenvalue.
struct NullSpaceBasis {
  Eigen::MatrixXd theta;
  int rank_used = 0;
};

struct WeightedEstimate {
  Eigen::VectorXd beta_weighted;
  WeightVector weight;
  double variance_functional = 0.0;
};

// Eigenvalues of B'B in ascending order.
inline Eigen::VectorXd coefficient_gram_eigenvalues(
    const Eigen::MatrixXd& b) {
  Eigen::MatrixXd btb = Eigen::MatrixXd::Zero(b.cols(), b.cols());
  btb.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(btb,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigenvalue computation on B'B failed");
  }
  return es.eigenvalues();
}

// Fixes the sign of each column so that its largest-magnitude entry is
// positive; among tied magnitudes the lowest row index decides.  Makes
// eigenvector bases reproducible across runs and solvers.
inline void normalize_eigenvector_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index lead = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, j));
      if (mag > best) {
        best = mag;
        lead = i;
      }
    }
    if (vectors(lead, j) < 0.0) {
      vectors.col(j) = -vectors.col(j);
    }
  }
}

// Basis of the directions B leaves unused when it has rank d: the trailing
// K + 1 - d eigenvectors of B'B.  d = K + 1 yields an empty basis.
inline NullSpaceBasis null_space_basis(const CoefficientMatrix& b, int d) {
  const int k1 = static_cast<int>(b.cols());
  if (d < 1 || d > k1) {
    throw DomainError("rank " + std::to_string(d) + " outside 1.." +
                      std::to_string(k1));
  }
  Eigen::MatrixXd btb = Eigen::MatrixXd::Zero(k1, k1);
  btb.selfadjointView<Eigen::Lower>().rankUpdate(b.entries().transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(btb);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of B'B failed");
  }
  Eigen::MatrixXd theta = es.eigenvectors().leftCols(k1 - d);
  normalize_eigenvector_signs(theta);
  return NullSpaceBasis{std::move(theta), d};
}

// Minimum-variance weight over the feasible set {w : B w = B e1}, treating
// B as rank d:
//   w = e1 - Theta (Theta' S Theta)^-1 Theta' S e1.
// A rank-deficient inner system falls back to an eigenvalue-truncated
// pseudo-inverse (relative cutoff 1e-12) and flags the result.
inline WeightVector oracle_weight(const CoefficientMatrix& b,
                                  const NoiseCovariance& sigma_eps, int d) {
  if (sigma_eps.dim() != b.cols()) {
    throw DimensionError("noise covariance is " +
                         std::to_string(sigma_eps.dim()) + "-dimensional for " +
                         std::to_string(b.cols()) + " tasks");
  }
  const NullSpaceBasis basis = null_space_basis(b, d);
  const Eigen::Index q = basis.theta.cols();
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(b.cols());
  e1(0) = 1.0;
  if (q == 0) {
    // Full rank: the feasible set is the single point e1.
    return WeightVector(std::move(e1), false);
  }
  const Eigen::MatrixXd m =
      basis.theta.transpose() * sigma_eps.entries() * basis.theta;
  const Eigen::VectorXd rhs =
      basis.theta.transpose() * sigma_eps.entries().col(0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      (m + m.transpose().eval()) / 2.0);
  if (es.info() != Eigen::Success) {
    throw NumericalError("weight system eigendecomposition failed");
  }
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();

  Eigen::VectorXd u;
  bool fallback = false;
  if (hi > 0.0 && lo > 1e-12 * hi) {
    u = -Eigen::LLT<Eigen::MatrixXd>(m).solve(rhs);
  } else {
    fallback = true;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      if (es.eigenvalues()(i) > 1e-12 * std::max(hi, 0.0)) {
        inv(i) = 1.0 / es.eigenvalues()(i);
      }
    }
    u = -(es.eigenvectors() * inv.asDiagonal() *
          es.eigenvectors().transpose() * rhs);
  }
  return WeightVector(e1 + basis.theta * u, fallback);
}

// Same construction applied to estimated inputs.  No rank check is applied
// to b_hat; d states how many directions to keep.
inline WeightVector feasible_weight(const CoefficientMatrix& b_hat,
                                    const NoiseCovariance& sigma_eps_hat,
                                    int d) {
  return oracle_weight(b_hat, sigma_eps_hat, d);
}

inline WeightVector feasible_weight(const OlsFit& fit, int d) {
  return feasible_weight(fit.b_hat, fit.sigma_eps_hat, d);
}

// w' S w, the asymptotic variance scale of the combined estimator.
inline double variance_functional(const WeightVector& w,
                                  const NoiseCovariance& sigma_eps) {
  if (w.size() != sigma_eps.dim()) {
    throw DimensionError("weight length " + std::to_string(w.size()) +
                         " does not match covariance dimension " +
                         std::to_string(sigma_eps.dim()));
  }
  return w.weights().dot(sigma_eps.entries() * w.weights());
}

inline WeightedEstimate weighted_estimate(const CoefficientMatrix& b_hat,
                                          const NoiseCovariance& sigma_eps_hat,
                                          const WeightVector& w) {
  if (w.size() != b_hat.cols()) {
    throw DimensionError("weight length " + std::to_string(w.size()) +
                         " does not match task count " +
                         std::to_string(b_hat.cols()));
  }
  return WeightedEstimate{b_hat.entries() * w.weights(), w,
                          variance_functional(w, sigma_eps_hat)};
}

inline WeightedEstimate weighted_estimate(const OlsFit& fit,
                                          const WeightVector& w) {
  return weighted_estimate(fit.b_hat, fit.sigma_eps_hat, w);
}

namespace detail {

// Dense LU with partial pivoting, kept deliberately separate from Eigen's
// solvers so the closed form above can be checked against an independent
// path.  Solves in place; `iters` rounds of iterative refinement polish the
// solution against the original matrix.
class PivotedLu {
 public:
  explicit PivotedLu(Eigen::MatrixXd m) : lu_(std::move(m)) {
    const Eigen::Index n = lu_.rows();
    perm_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      perm_[static_cast<std::size_t>(i)] = i;
    }
    const double scale = std::max(1.0, lu_.cwiseAbs().maxCoeff());
    for (Eigen::Index col = 0; col < n; ++col) {
      Eigen::Index pivot = col;
      for (Eigen::Index r = col + 1; r < n; ++r) {
        if (std::abs(lu_(r, col)) > std::abs(lu_(pivot, col))) pivot = r;
      }
      if (std::abs(lu_(pivot, col)) <= 1e-13 * scale) {
        throw NumericalError("weight system is singular at pivot " +
                             std::to_string(col));
      }
      if (pivot != col) {
        lu_.row(pivot).swap(lu_.row(col));
        std::swap(perm_[static_cast<std::size_t>(pivot)],
                  perm_[static_cast<std::size_t>(col)]);
      }
      for (Eigen::Index r = col + 1; r < n; ++r) {
        lu_(r, col) /= lu_(col, col);
        for (Eigen::Index c = col + 1; c < n; ++c) {
          lu_(r, c) -= lu_(r, col) * lu_(col, c);
        }
      }
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const Eigen::Index n = lu_.rows();
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i) = rhs(perm_[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < i; ++j) {
        x(i) -= lu_(i, j) * x(j);
      }
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        x(i) -= lu_(i, j) * x(j);
      }
      x(i) /= lu_(i, i);
    }
    return x;
  }

 private:
  Eigen::MatrixXd lu_;
  std::vector<Eigen::Index> perm_;
};

}  // namespace detail

// Reference minimizer of w' S w over {e1 + Theta u}: forms the normal
// equations (Theta' S Theta) u = -Theta' S e1 entry by entry and solves them
// with the local LU above.  Exists to cross-check oracle_weight; not meant
// for production use.
inline WeightVector brute_force_optimal_weight(const CoefficientMatrix& b,
                                               const NoiseCovariance& sigma_eps,
                                               int d, int iters = 2) {
  if (sigma_eps.dim() != b.cols()) {
    throw DimensionError("noise covariance dimension does not match B");
  }
  if (iters < 0) {
    throw DomainError("refinement iteration count must be non-negative");
  }
  const NullSpaceBasis basis = null_space_basis(b, d);
  const Eigen::Index q = basis.theta.cols();
  const Eigen::Index k1 = b.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(k1);
  w(0) = 1.0;
  if (q == 0) {
    return WeightVector(std::move(w), false);
  }

  const Eigen::MatrixXd& theta = basis.theta;
  const Eigen::MatrixXd& s = sigma_eps.entries();
  Eigen::MatrixXd m(q, q);
  Eigen::VectorXd rhs(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      double acc = 0.0;
      for (Eigen::Index a = 0; a < k1; ++a) {
        double inner = 0.0;
        for (Eigen::Index bcol = 0; bcol < k1; ++bcol) {
          inner += s(a, bcol) * theta(bcol, j);
        }
        acc += theta(a, i) * inner;
      }
      m(i, j) = acc;
    }
    double racc = 0.0;
    for (Eigen::Index a = 0; a < k1; ++a) {
      racc += theta(a, i) * s(a, 0);
    }
    rhs(i) = -racc;
  }

  const detail::PivotedLu lu(m);
  Eigen::VectorXd u = lu.solve(rhs);
  for (int round = 0; round < iters; ++round) {
    Eigen::VectorXd residual = rhs;
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = 0; j < q; ++j) {
        residual(i) -= m(i, j) * u(j);
      }
    }
    u += lu.solve(residual);
  }
  return WeightVector(w + theta * u, false);
}

}  // namespace auxlearn
