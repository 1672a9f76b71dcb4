#pragma once

#include <Eigen/Dense>

namespace excess {

/// Uniform cubic B-spline basis on [a, b] with n_seg segments
/// (n_seg + 3 basis functions). Knots extend past the boundaries so the
/// basis partitions unity on the whole domain.
class BSplineBasis {
 public:
  BSplineBasis(double a, double b, int n_seg);
  int size() const { return n_seg_ + 3; }
  double lower() const { return a_; }
  double upper() const { return b_; }
  Eigen::RowVectorXd eval(double x) const;
  Eigen::MatrixXd design(const Eigen::VectorXd& x) const;
  /// Second-order difference penalty D2'D2 on coefficients; null space is
  /// {constant, linear} so heavy smoothing collapses to a linear trend.
  Eigen::MatrixXd penalty() const;

 private:
  double a_, b_, h_;
  int n_seg_;
};

/// Cyclic uniform cubic B-spline basis with the given period and number
/// of basis functions (>= 4). Periodic by construction: values and
/// derivatives match across the wrap point.
class CyclicSplineBasis {
 public:
  CyclicSplineBasis(double period, int n_basis);
  int size() const { return n_basis_; }
  double period() const { return period_; }
  Eigen::RowVectorXd eval(double x) const;
  Eigen::MatrixXd design(const Eigen::VectorXd& x) const;
  /// Wrapped second-difference penalty; null space is the constants.
  Eigen::MatrixXd penalty() const;

 private:
  double period_, h_;
  int n_basis_;
};

/// Orthonormal basis Z of the null space of w' (p x (p-1)); used to apply
/// a single linear constraint w'c = 0 by reparameterizing c = Z u.
Eigen::MatrixXd constraint_null_basis(const Eigen::VectorXd& w);

/// log of the product of eigenvalues above tol * max; also returns the
/// count of such eigenvalues (the penalty rank).
struct GeneralizedDet {
  double log_det;
  int rank;
};
GeneralizedDet generalized_log_det(const Eigen::MatrixXd& s, double tol = 1e-10);

}  // namespace excess
