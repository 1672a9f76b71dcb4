#include <Eigen/Dense>

#include "doctest.h"
#include "excess/splines.hpp"

using namespace excess;

TEST_CASE("b-spline basis partitions unity") {
  BSplineBasis basis(1.0, 7.0, 6);
  for (double x = 1.0; x <= 7.0; x += 0.25) {
    CHECK(basis.eval(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("second-difference penalty annihilates linear coefficient vectors") {
  BSplineBasis basis(0.0, 10.0, 8);
  Eigen::MatrixXd s = basis.penalty();
  Eigen::VectorXd lin(basis.size());
  for (int i = 0; i < basis.size(); ++i) lin(i) = 2.0 + 0.5 * i;
  CHECK((s * lin).norm() == doctest::Approx(0.0).epsilon(1e-12));
  auto gd = generalized_log_det(s);
  CHECK(gd.rank == basis.size() - 2);
}

TEST_CASE("cyclic basis is continuous across the wrap point") {
  CyclicSplineBasis basis(12.0, 8);
  // values at 0 and 12 identical: f(12+) == f(1-) on the month scale
  Eigen::RowVectorXd at0 = basis.eval(0.0);
  Eigen::RowVectorXd at12 = basis.eval(12.0);
  CHECK((at0 - at12).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0).epsilon(1e-12));

  // first derivative continuity via symmetric finite differences
  double h = 1e-6;
  Eigen::RowVectorXd before = basis.eval(12.0 - h);
  Eigen::RowVectorXd after = basis.eval(0.0 + h);
  CHECK((before - after).lpNorm<Eigen::Infinity>() < 1e-5);

  for (double x = 0.0; x < 12.0; x += 0.5) {
    CHECK(basis.eval(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cyclic penalty null space is the constants") {
  CyclicSplineBasis basis(12.0, 8);
  Eigen::MatrixXd s = basis.penalty();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
  CHECK((s * ones).norm() == doctest::Approx(0.0).epsilon(1e-12));
  auto gd = generalized_log_det(s);
  CHECK(gd.rank == 7);
}

TEST_CASE("constraint null basis is orthonormal and orthogonal to w") {
  Eigen::VectorXd w(5);
  w << 1.0, 2.0, 3.0, 4.0, 5.0;
  Eigen::MatrixXd z = constraint_null_basis(w);
  CHECK(z.rows() == 5);
  CHECK(z.cols() == 4);
  CHECK((z.transpose() * w).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((z.transpose() * z - Eigen::MatrixXd::Identity(4, 4)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}
