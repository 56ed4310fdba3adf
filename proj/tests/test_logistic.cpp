#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "auxlearn/errors.hpp"
#include "auxlearn/logistic.hpp"
#include "auxlearn/rng.hpp"
#include "auxlearn/types.hpp"

#include "test_helpers.hpp"

using namespace auxlearn;

namespace {

MultiTaskDataset bernoulli_dataset(const Eigen::MatrixXd& b, Eigen::Index n,
                                   std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, b.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) x(i, j) = rng.normal();
  }
  Eigen::MatrixXd y(n, b.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      const double prob = detail::sigmoid(x.row(i).dot(b.col(k)));
      y(i, k) = rng.uniform() < prob ? 1.0 : 0.0;
    }
  }
  return MultiTaskDataset(
      std::move(x), std::move(y),
      std::vector<TaskKind>(static_cast<std::size_t>(b.cols()),
                            TaskKind::binary));
}

}  // namespace

TEST_CASE("link functions stay finite at extreme arguments") {
  CHECK(detail::sigmoid(0.0) == 0.5);
  CHECK(detail::sigmoid(1000.0) == 1.0);
  CHECK(detail::sigmoid(-1000.0) == 0.0);
  CHECK(detail::sigmoid(30.0) > 0.999999);
  CHECK(detail::sigmoid(-30.0) < 1e-6);
  CHECK(std::isfinite(detail::softplus(1000.0)));
  CHECK(detail::softplus(1000.0) == Catch::Approx(1000.0).epsilon(1e-12));
  CHECK(detail::softplus(-1000.0) == 0.0);
  CHECK(detail::softplus(0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-14));

  Eigen::VectorXd y(2), eta(2);
  y << 1.0, 0.0;
  eta << 0.0, 0.0;
  CHECK(detail::bernoulli_loglik(y, eta) ==
        Catch::Approx(-2.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("scalar fit matches a direct search of the likelihood") {
  Eigen::MatrixXd b(1, 1);
  b << 0.8;
  const MultiTaskDataset data = bernoulli_dataset(b, 60, 17);
  const LogisticMle mle = fit_logistic_mle(data, 0);
  REQUIRE(mle.converged);

  const Eigen::VectorXd x = data.covariates().col(0);
  const Eigen::VectorXd y = data.responses().col(0);
  const auto loglik = [&](double beta) {
    return detail::bernoulli_loglik(y, beta * x);
  };
  // The scalar log-likelihood is strictly concave, so a ternary search
  // brackets its maximizer to machine precision.
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 300; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (loglik(m1) < loglik(m2)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  const double searched = 0.5 * (lo + hi);
  CHECK(std::abs(mle.beta(0) - searched) < 1e-6);
}

TEST_CASE("multidimensional fit recovers the generating coefficients") {
  Eigen::MatrixXd b(3, 1);
  b << 1.0, -0.5, 0.25;
  const MultiTaskDataset data = bernoulli_dataset(b, 4000, 29);
  const LogisticMle mle = fit_logistic_mle(data, 0);
  REQUIRE(mle.converged);
  CHECK((mle.beta - b.col(0)).lpNorm<Eigen::Infinity>() < 0.15);

  SECTION("accepted steps never decrease the log-likelihood") {
    REQUIRE(mle.loglik_path.size() >= 2);
    for (std::size_t i = 1; i < mle.loglik_path.size(); ++i) {
      const double prev = mle.loglik_path[i - 1];
      CHECK(mle.loglik_path[i] >= prev - 1e-9 * (1.0 + std::abs(prev)));
    }
  }

  SECTION("a deterministic rerun reproduces every bit") {
    const LogisticMle again = fit_logistic_mle(data, 0);
    CHECK(again.beta == mle.beta);
    CHECK(again.iterations == mle.iterations);
  }
}

TEST_CASE("fitted variance follows the mean of p (1 - p)") {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, std::log(4.0), std::log(9.0);
  Eigen::MatrixXd y(3, 2);
  y << 0.0, 1.0, 1.0, 0.0, 1.0, 1.0;
  const MultiTaskDataset data(x, y, {TaskKind::binary, TaskKind::binary});

  // Coefficients 1 and 0 give fitted probabilities (0.5, 0.8, 0.9) and
  // (0.5, 0.5, 0.5), hence variances 1/6 and exactly 0.25.
  Eigen::MatrixXd bh(1, 2);
  bh << 1.0, 0.0;
  const NoiseCovariance sigma =
      logistic_noise_variance(data, CoefficientMatrix(bh));
  CHECK(sigma.entries()(0, 0) == Catch::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(sigma.entries()(1, 1) == 0.25);
  CHECK(sigma.entries()(0, 1) == 0.0);
  CHECK(sigma.entries()(1, 0) == 0.0);

  SECTION("saturated probabilities are rejected") {
    Eigen::MatrixXd huge(1, 2);
    huge << 1000.0, 1000.0;
    Eigen::MatrixXd xs(3, 1);
    xs << 1.0, 2.0, 3.0;
    const MultiTaskDataset sat(xs, y, {TaskKind::binary, TaskKind::binary});
    CHECK_THROWS_AS(logistic_noise_variance(sat, CoefficientMatrix(huge)),
                    NumericalError);
  }

  SECTION("shape mismatches are rejected") {
    Eigen::MatrixXd wrong(2, 2);
    wrong.setZero();
    CHECK_THROWS_AS(logistic_noise_variance(data, CoefficientMatrix(wrong)),
                    DimensionError);
  }
}

TEST_CASE("separable classes raise a convergence error") {
  Eigen::MatrixXd x(4, 1);
  x << -2.0, -1.0, 1.0, 2.0;
  Eigen::MatrixXd y(4, 1);
  y << 0.0, 0.0, 1.0, 1.0;
  const MultiTaskDataset data(x, y, {TaskKind::binary});
  CHECK_THROWS_AS(fit_logistic_mle(data, 0), ConvergenceError);
}

TEST_CASE("logistic fit input validation") {
  Eigen::MatrixXd b(2, 1);
  b << 0.5, -0.5;
  const MultiTaskDataset data = bernoulli_dataset(b, 40, 5);
  CHECK_THROWS_AS(fit_logistic_mle(data, 1), DomainError);
  CHECK_THROWS_AS(fit_logistic_mle(data, -1), DomainError);
  CHECK_THROWS_AS(fit_logistic_mle(data, 0, 0), DomainError);

  const MultiTaskDataset tiny = select_rows(data, {0, 1});
  CHECK_THROWS_AS(fit_logistic_mle(tiny, 0), NumericalError);

  const MultiTaskDataset cont = testutil::linear_dataset(b, 40, 6);
  CHECK_THROWS_AS(fit_logistic_mle(cont, 0), DomainError);
  CHECK_THROWS_AS(fit_multitask_logistic(cont), DomainError);
}

TEST_CASE("multitask logistic stacks per-task fits") {
  Eigen::MatrixXd b(3, 2);
  b << 0.9, 0.7, -0.4, -0.6, 0.2, 0.1;
  const MultiTaskDataset data = bernoulli_dataset(b, 500, 91);
  const LogisticFit fit = fit_multitask_logistic(data);
  REQUIRE(fit.b_hat.cols() == 2);
  REQUIRE(fit.converged.size() == 2);
  REQUIRE(fit.iterations.size() == 2);
  CHECK(fit.all_converged());

  for (int k = 0; k < 2; ++k) {
    const LogisticMle solo = fit_logistic_mle(data, k);
    CHECK(fit.b_hat.entries().col(k) == solo.beta);
    CHECK(fit.iterations[static_cast<std::size_t>(k)] == solo.iterations);
  }
  const NoiseCovariance direct = logistic_noise_variance(data, fit.b_hat);
  CHECK(fit.sigma_eps_hat.entries() == direct.entries());
}

TEST_CASE("full task rank reduces the weighted fit to the primary column") {
  Eigen::MatrixXd b(3, 2);
  b << 0.9, -0.7, -0.4, 0.6, 0.2, -0.1;
  const MultiTaskDataset data = bernoulli_dataset(b, 400, 123);
  const WeightedLogisticFit wf = fit_weighted_logistic(data, 2);
  CHECK(wf.estimate.beta_weighted == wf.fit.b_hat.primary());
  CHECK(wf.estimate.weight.weights()(0) == 1.0);
  CHECK(wf.estimate.weight.weights()(1) == 0.0);
}

TEST_CASE("weighted logistic pipeline produces a finite estimate") {
  // Both tasks share one coefficient direction, so rank one is exact.
  Eigen::MatrixXd b(4, 2);
  b.col(0) << 1.0, -0.5, 0.3, 0.0;
  b.col(1) = 1.3 * b.col(0);
  const MultiTaskDataset data = bernoulli_dataset(b, 1500, 301);
  const WeightedLogisticFit wf = fit_weighted_logistic(data, 1);
  CHECK(wf.fit.all_converged());
  CHECK(wf.estimate.beta_weighted.allFinite());
  CHECK(wf.estimate.variance_functional > 0.0);
  CHECK(wf.estimate.variance_functional <=
        wf.fit.sigma_eps_hat.entries()(0, 0) + 1e-12);

  const WeightedEstimate again = weight_logistic_fit(wf.fit, 1);
  CHECK(again.beta_weighted == wf.estimate.beta_weighted);
}
