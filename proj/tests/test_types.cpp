#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <vector>

#include "auxlearn/errors.hpp"
#include "auxlearn/types.hpp"

#include "test_helpers.hpp"

using namespace auxlearn;

namespace {

MultiTaskDataset small_dataset() {
  Eigen::MatrixXd x(4, 2);
  x << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0;
  Eigen::MatrixXd y(4, 3);
  y << 0.5, 1.0, 0.0, 1.5, 0.0, 1.0, -0.5, 1.0, 1.0, 2.5, 0.0, 0.0;
  return MultiTaskDataset(
      x, y, {TaskKind::continuous, TaskKind::binary, TaskKind::binary});
}

}  // namespace

TEST_CASE("dataset dimensions and accessors") {
  const MultiTaskDataset data = small_dataset();
  CHECK(data.n() == 4);
  CHECK(data.p() == 2);
  CHECK(data.k_aux() == 2);
  CHECK(data.kind(0) == TaskKind::continuous);
  CHECK(data.kind(2) == TaskKind::binary);
  CHECK(data.response_names() == std::vector<std::string>{"y0", "y1", "y2"});
  CHECK(data.covariate_names() == std::vector<std::string>{"x1", "x2"});
}

TEST_CASE("dataset validation failures") {
  Eigen::MatrixXd x(3, 2);
  x.setZero();
  Eigen::MatrixXd y(4, 1);
  y.setZero();
  CHECK_THROWS_AS(
      MultiTaskDataset(x, y, {TaskKind::continuous}), DimensionError);

  Eigen::MatrixXd y3(3, 1);
  y3.setZero();
  CHECK_THROWS_AS(MultiTaskDataset(x, y3, {}), DimensionError);

  Eigen::MatrixXd bad = y3;
  bad(1, 0) = 2.0;
  try {
    MultiTaskDataset d(x, bad, {TaskKind::binary});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("y0") != std::string::npos);
  }

  CHECK_THROWS_AS(MultiTaskDataset(Eigen::MatrixXd(0, 2),
                                   Eigen::MatrixXd(0, 1),
                                   {TaskKind::continuous}),
                  DomainError);
}

TEST_CASE("restrict_tasks keeps primary and reorders auxiliaries") {
  const MultiTaskDataset data = small_dataset();
  const MultiTaskDataset sub = restrict_tasks(data, {2, 1});
  CHECK(sub.k_aux() == 2);
  CHECK(sub.responses().col(0) == data.responses().col(0));
  CHECK(sub.responses().col(1) == data.responses().col(1));
  CHECK(sub.response_names() == std::vector<std::string>{"y0", "y1", "y2"});

  const MultiTaskDataset only2 = restrict_tasks(data, {2});
  CHECK(only2.k_aux() == 1);
  CHECK(only2.responses().col(1) == data.responses().col(2));
  CHECK(only2.response_names() == std::vector<std::string>{"y0", "y2"});

  const MultiTaskDataset none = restrict_tasks(data, {});
  CHECK(none.k_aux() == 0);

  CHECK_THROWS_AS(restrict_tasks(data, {1, 1}), DomainError);
  CHECK_THROWS_AS(restrict_tasks(data, {0}), DomainError);
  CHECK_THROWS_AS(restrict_tasks(data, {3}), DomainError);
}

TEST_CASE("select_rows picks rows in order") {
  const MultiTaskDataset data = small_dataset();
  const MultiTaskDataset sub = select_rows(data, {3, 0});
  CHECK(sub.n() == 2);
  CHECK(sub.covariates().row(0) == data.covariates().row(3));
  CHECK(sub.covariates().row(1) == data.covariates().row(0));
  CHECK(sub.responses().row(0) == data.responses().row(3));
  CHECK_THROWS_AS(select_rows(data, {4}), DomainError);
  CHECK_THROWS_AS(select_rows(data, {-1}), DomainError);
}

TEST_CASE("coefficient matrix rank declaration") {
  Eigen::MatrixXd b(3, 2);
  b.setOnes();
  CHECK_FALSE(CoefficientMatrix(b).declared_rank().has_value());
  CHECK(CoefficientMatrix(b, 1).declared_rank() == 1);
  CHECK(CoefficientMatrix(b, 2).k_aux() == 1);
  CHECK_THROWS_AS(CoefficientMatrix(b, 0), DomainError);
  CHECK_THROWS_AS(CoefficientMatrix(b, 3), DomainError);

  Eigen::MatrixXd nan = b;
  nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(CoefficientMatrix(nan), DomainError);
}

TEST_CASE("noise covariance validation") {
  CHECK_NOTHROW(NoiseCovariance(testutil::random_spd(4, 11)));
  CHECK_NOTHROW(NoiseCovariance(Eigen::MatrixXd::Zero(2, 2)));

  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.2, 1.0;
  CHECK_THROWS_AS(NoiseCovariance(asym), DomainError);

  Eigen::MatrixXd negdef(2, 2);
  negdef << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(NoiseCovariance(negdef), DomainError);

  CHECK_THROWS_AS(NoiseCovariance(Eigen::MatrixXd(2, 3)), DimensionError);
}

TEST_CASE("weight vector basics") {
  Eigen::VectorXd w(3);
  w << 0.5, 0.25, 0.25;
  CHECK_FALSE(WeightVector(w).pseudo_inverse_fallback());
  CHECK(WeightVector(w, true).pseudo_inverse_fallback());
  CHECK(WeightVector(w).size() == 3);

  Eigen::VectorXd inf = w;
  inf(1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(WeightVector(inf), DomainError);
  CHECK_THROWS_AS(WeightVector(Eigen::VectorXd()), DimensionError);
}

TEST_CASE("gram statistics shape checks") {
  const Eigen::MatrixXd xx = testutil::random_spd(3, 5);
  CHECK_NOTHROW(GramStatistics(xx, Eigen::MatrixXd::Zero(3, 2)));
  CHECK_THROWS_AS(GramStatistics(xx, Eigen::MatrixXd::Zero(2, 2)),
                  DimensionError);
  Eigen::MatrixXd asym = xx;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS(GramStatistics(asym, Eigen::MatrixXd::Zero(3, 2)),
                  DomainError);
}

TEST_CASE("weight feasibility check") {
  Eigen::MatrixXd b(3, 2);
  b.col(0) << 1.0, 2.0, 3.0;
  b.col(1) = 2.0 * b.col(0);

  Eigen::VectorXd feasible(2);
  feasible << 0.0, 0.5;  // 0.5 * (2 beta) = beta
  CHECK(validate_weight_feasibility(CoefficientMatrix(b),
                                    WeightVector(feasible)));

  Eigen::VectorXd infeasible(2);
  infeasible << 1.0, 0.5;
  CHECK_FALSE(validate_weight_feasibility(CoefficientMatrix(b),
                                          WeightVector(infeasible)));

  // Relative tolerance: a perturbation below tol * max(1, ||beta||) passes.
  Eigen::VectorXd nearly(2);
  nearly << 1e-9, 0.5;
  CHECK(validate_weight_feasibility(CoefficientMatrix(b),
                                    WeightVector(nearly), 1e-8));
  CHECK_FALSE(validate_weight_feasibility(CoefficientMatrix(b),
                                          WeightVector(nearly), 1e-12));

  Eigen::VectorXd wrong_size(3);
  wrong_size.setZero();
  CHECK_THROWS_AS(validate_weight_feasibility(CoefficientMatrix(b),
                                              WeightVector(wrong_size)),
                  DimensionError);
}
