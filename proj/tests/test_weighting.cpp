#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "auxlearn/errors.hpp"
#include "auxlearn/ols.hpp"
#include "auxlearn/rng.hpp"
#include "auxlearn/types.hpp"
#include "auxlearn/weighting.hpp"

#include "test_helpers.hpp"

using namespace auxlearn;

TEST_CASE("sign normalization follows the largest-entry rule") {
  Eigen::MatrixXd m(2, 2);
  m.col(0) << -3.0, 2.0;
  m.col(1) << 1.0, -2.0;
  normalize_eigenvector_signs(m);
  CHECK(m(0, 0) == 3.0);
  CHECK(m(1, 0) == -2.0);
  CHECK(m(0, 1) == -1.0);
  CHECK(m(1, 1) == 2.0);

  // Tied magnitudes: the lowest row index decides.
  Eigen::MatrixXd tie(2, 2);
  tie.col(0) << 0.5, -0.5;
  tie.col(1) << -0.5, 0.5;
  normalize_eigenvector_signs(tie);
  CHECK(tie(0, 0) == 0.5);
  CHECK(tie(0, 1) == 0.5);
  CHECK(tie(1, 1) == -0.5);

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 1);
  normalize_eigenvector_signs(zero);
  CHECK(zero == Eigen::MatrixXd::Zero(3, 1));
}

TEST_CASE("null space basis for two identical columns") {
  Eigen::MatrixXd b(3, 2);
  b.col(0) << 1.0, 2.0, 3.0;
  b.col(1) = b.col(0);
  const NullSpaceBasis basis = null_space_basis(CoefficientMatrix(b), 1);
  REQUIRE(basis.theta.cols() == 1);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(basis.theta(0, 0) == Catch::Approx(r).epsilon(1e-12));
  CHECK(basis.theta(1, 0) == Catch::Approx(-r).epsilon(1e-12));
  CHECK(basis.rank_used == 1);
}

TEST_CASE("null space basis spans the kernel and is orthonormal") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 131);
    const int k1 = 2 + static_cast<int>(rng.below(6));
    // Keep d below k1 so the basis is non-empty; the empty case is covered
    // elsewhere.
    const int d =
        1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k1 - 1)));
    const Eigen::MatrixXd b = testutil::rank_d_matrix(12, k1, d, seed * 977);
    const NullSpaceBasis basis = null_space_basis(CoefficientMatrix(b), d);
    REQUIRE(basis.theta.rows() == k1);
    REQUIRE(basis.theta.cols() == k1 - d);
    CHECK((b * basis.theta).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff()));
    const Eigen::MatrixXd gram = basis.theta.transpose() * basis.theta;
    CHECK((gram - Eigen::MatrixXd::Identity(k1 - d, k1 - d))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("null space basis orders columns by ascending eigenvalue") {
  // True rank 2 but d = 1 requested: the basis picks the two null
  // directions first, then the weakest signal direction.
  const Eigen::MatrixXd b = testutil::rank_d_matrix(10, 4, 2, 2024);
  const NullSpaceBasis basis = null_space_basis(CoefficientMatrix(b), 1);
  REQUIRE(basis.theta.cols() == 3);
  const double n0 = (b * basis.theta.col(0)).norm();
  const double n1 = (b * basis.theta.col(1)).norm();
  const double n2 = (b * basis.theta.col(2)).norm();
  CHECK(n0 < 1e-8);
  CHECK(n1 < 1e-8);
  CHECK(n2 > 1e-3);
}

TEST_CASE("null space basis rejects invalid ranks") {
  const Eigen::MatrixXd b = testutil::gaussian(4, 3, 7);
  CHECK_THROWS_AS(null_space_basis(CoefficientMatrix(b), 0), DomainError);
  CHECK_THROWS_AS(null_space_basis(CoefficientMatrix(b), 4), DomainError);
  CHECK(null_space_basis(CoefficientMatrix(b), 3).theta.cols() == 0);
}

TEST_CASE("optimal weight is feasible and minimizes the variance form") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 313);
    const int k1 = 2 + static_cast<int>(rng.below(6));
    const int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k1)));
    const Eigen::Index p = 3 + static_cast<Eigen::Index>(rng.below(15));
    const CoefficientMatrix b(testutil::rank_d_matrix(p, k1, d, seed * 41));
    const NoiseCovariance sigma(testutil::random_spd(k1, seed * 43));

    const WeightVector w = oracle_weight(b, sigma, d);
    CHECK_FALSE(w.pseudo_inverse_fallback());
    CHECK(validate_weight_feasibility(b, w));

    const double p_star = variance_functional(w, sigma);
    const NullSpaceBasis basis = null_space_basis(b, d);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd u(basis.theta.cols());
      for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
      const WeightVector other(w.weights() + basis.theta * u);
      const double p_other = variance_functional(other, sigma);
      CHECK(p_other >= p_star - 1e-10 * (1.0 + p_star));
    }
  }
}

TEST_CASE("diagonal covariance with identical columns: precision weights") {
  // Equal coefficient columns and diagonal noise make the optimal weight
  // proportional to the inverse variances.
  Eigen::VectorXd beta(5);
  beta << 0.4, -1.2, 0.3, 2.0, -0.7;

  SECTION("hand case sigma = diag(1, 2, 4)") {
    Eigen::MatrixXd b(5, 3);
    b.col(0) = beta;
    b.col(1) = beta;
    b.col(2) = beta;
    Eigen::VectorXd variances(3);
    variances << 1.0, 2.0, 4.0;
    Eigen::MatrixXd sigma = variances.asDiagonal();
    const WeightVector w =
        oracle_weight(CoefficientMatrix(b), NoiseCovariance(sigma), 1);
    CHECK(std::abs(w.weights()(0) - 4.0 / 7.0) < 1e-12);
    CHECK(std::abs(w.weights()(1) - 2.0 / 7.0) < 1e-12);
    CHECK(std::abs(w.weights()(2) - 1.0 / 7.0) < 1e-12);
  }

  SECTION("random diagonal instances") {
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
      Rng rng(seed * 71);
      const int k1 = 2 + static_cast<int>(rng.below(8));
      Eigen::MatrixXd b(beta.size(), k1);
      for (int k = 0; k < k1; ++k) b.col(k) = beta;
      Eigen::VectorXd variances(k1);
      for (int k = 0; k < k1; ++k) variances(k) = 0.25 + 3.75 * rng.uniform();
      const Eigen::MatrixXd sigma = variances.asDiagonal();

      const WeightVector w =
          oracle_weight(CoefficientMatrix(b), NoiseCovariance(sigma), 1);
      const double denom = variances.cwiseInverse().sum();
      for (int k = 0; k < k1; ++k) {
        CHECK(std::abs(w.weights()(k) - 1.0 / (variances(k) * denom)) <
              1e-10);
      }
    }
  }
}

TEST_CASE("full rank collapses the weight to the first unit vector") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const int k1 = 1 + static_cast<int>(rng.below(6));
    const MultiTaskDataset data = testutil::linear_dataset(
        testutil::gaussian(6, k1, seed * 101), 40, seed * 103);
    const OlsFit fit = fit_multitask_ols(data);
    const WeightVector w = feasible_weight(fit, k1);
    CHECK(w.weights()(0) == 1.0);
    for (Eigen::Index k = 1; k < k1; ++k) {
      CHECK(w.weights()(k) == 0.0);
    }
    CHECK_FALSE(w.pseudo_inverse_fallback());
  }
}

TEST_CASE("independent solver path agrees with the closed form") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 509);
    const int k1 = 2 + static_cast<int>(rng.below(6));
    const int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k1)));
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(rng.below(19));
    const CoefficientMatrix b(testutil::rank_d_matrix(p, k1, d, seed * 211));
    const NoiseCovariance sigma(testutil::random_spd(k1, seed * 223));

    const WeightVector closed = oracle_weight(b, sigma, d);
    const WeightVector direct = brute_force_optimal_weight(b, sigma, d);
    CHECK((closed.weights() - direct.weights()).lpNorm<Eigen::Infinity>() <
          1e-8);

    const WeightVector unrefined = brute_force_optimal_weight(b, sigma, d, 0);
    CHECK((closed.weights() - unrefined.weights()).lpNorm<Eigen::Infinity>() <
          1e-8);
  }
  CHECK_THROWS_AS(
      brute_force_optimal_weight(
          CoefficientMatrix(testutil::rank_d_matrix(5, 3, 2, 3)),
          NoiseCovariance(testutil::random_spd(3, 4)), 2, -1),
      DomainError);
}

TEST_CASE("rank-deficient weight system falls back to a pseudo-inverse") {
  const CoefficientMatrix b(testutil::rank_d_matrix(4, 3, 1, 888));
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(3, 3);
  sigma(0, 0) = 1.0;  // rank one, so Theta' Sigma Theta is singular
  const NoiseCovariance cov(sigma);

  const WeightVector w = oracle_weight(b, cov, 1);
  CHECK(w.pseudo_inverse_fallback());
  CHECK(w.weights().allFinite());
  CHECK(validate_weight_feasibility(b, w));
  // Still no worse than the plain primary weight.
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1(0) = 1.0;
  CHECK(variance_functional(w, cov) <=
        variance_functional(WeightVector(e1), cov) + 1e-12);

  CHECK_THROWS_AS(brute_force_optimal_weight(b, cov, 1), NumericalError);
}

TEST_CASE("weight is invariant to rescaling the covariance") {
  const CoefficientMatrix b(testutil::rank_d_matrix(8, 4, 2, 99));
  const Eigen::MatrixXd s = testutil::random_spd(4, 100);
  const WeightVector w1 = oracle_weight(b, NoiseCovariance(s), 2);
  const WeightVector w2 = oracle_weight(b, NoiseCovariance(7.5 * s), 2);
  CHECK((w1.weights() - w2.weights()).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("variance functional and weighted estimate match naive sums") {
  const CoefficientMatrix b(testutil::gaussian(6, 3, 11));
  const NoiseCovariance sigma(testutil::random_spd(3, 12));
  Eigen::VectorXd wv(3);
  wv << 0.6, 0.3, 0.1;
  const WeightVector w(wv);

  double quad = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      quad += wv(i) * sigma.entries()(i, j) * wv(j);
    }
  }
  CHECK(variance_functional(w, sigma) == Catch::Approx(quad).epsilon(1e-12));

  const WeightedEstimate est = weighted_estimate(b, sigma, w);
  for (Eigen::Index r = 0; r < 6; ++r) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k) acc += b.entries()(r, k) * wv(k);
    CHECK(est.beta_weighted(r) == Catch::Approx(acc).epsilon(1e-12));
  }
  CHECK(est.variance_functional == variance_functional(w, sigma));

  Eigen::VectorXd short_w(2);
  short_w << 1.0, 0.0;
  CHECK_THROWS_AS(weighted_estimate(b, sigma, WeightVector(short_w)),
                  DimensionError);
  CHECK_THROWS_AS(variance_functional(WeightVector(short_w), sigma),
                  DimensionError);
  CHECK_THROWS_AS(
      oracle_weight(b, NoiseCovariance(testutil::random_spd(4, 13)), 2),
      DimensionError);
}

TEST_CASE("feasible weight overloads agree bit for bit") {
  const MultiTaskDataset data = testutil::linear_dataset(
      testutil::rank_d_matrix(5, 4, 2, 55), 60, 56, 0.2);
  const OlsFit fit = fit_multitask_ols(data);
  const WeightVector a = feasible_weight(fit, 2);
  const WeightVector b = feasible_weight(fit.b_hat, fit.sigma_eps_hat, 2);
  CHECK(a.weights() == b.weights());
}

TEST_CASE("estimated weight approaches the oracle weight with more data") {
  const Eigen::MatrixXd b_norm = [&] {
    Eigen::MatrixXd m = testutil::rank_d_matrix(10, 5, 2, 777);
    return Eigen::MatrixXd(m / std::sqrt(coefficient_gram_eigenvalues(m).maxCoeff()));
  }();
  const CoefficientMatrix b(b_norm, 2);
  const NoiseCovariance sigma(testutil::random_spd(5, 778) / 10.0);
  const WeightVector w_star = oracle_weight(b, sigma, 2);

  double prev = std::numeric_limits<double>::infinity();
  for (const Eigen::Index n : {200, 2000, 20000}) {
    Rng rng(4242);
    Eigen::MatrixXd x(n, 10);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 10; ++j) x(i, j) = rng.normal();
    }
    Eigen::MatrixXd e(n, 5);
    Rng rng_e(4243);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 5; ++j) e(i, j) = rng_e.normal();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma.entries());
    e = e * llt.matrixU();
    Eigen::MatrixXd y = x * b.entries() + e;
    const MultiTaskDataset data(
        std::move(x), std::move(y),
        std::vector<TaskKind>(5, TaskKind::continuous));
    const OlsFit fit = fit_multitask_ols(data);
    const WeightVector w_hat = feasible_weight(fit, 2);
    const double gap = (w_hat.weights() - w_star.weights()).norm();
    CHECK(gap < prev);
    prev = gap;
  }
}
