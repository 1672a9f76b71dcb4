#include "excess/splines.hpp"

#include <cmath>
#include <stdexcept>

namespace excess {

namespace {

// Uniform cubic B-spline kernel on [0, 4).
double cubic_kernel(double u) {
  if (u < 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) return (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0;
  if (u < 3.0) return (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0;
  double v = 4.0 - u;
  return v * v * v / 6.0;
}

}  // namespace

BSplineBasis::BSplineBasis(double a, double b, int n_seg) : a_(a), b_(b), n_seg_(n_seg) {
  if (!(b > a)) throw std::invalid_argument("BSplineBasis: empty domain");
  if (n_seg < 1) throw std::invalid_argument("BSplineBasis: n_seg < 1");
  h_ = (b - a) / n_seg;
}

Eigen::RowVectorXd BSplineBasis::eval(double x) const {
  // clamp to the closed domain; callers never evaluate outside by design
  if (x < a_) x = a_;
  if (x > b_) x = b_;
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(size());
  for (int i = 0; i < size(); ++i) {
    double knot = a_ + (i - 3) * h_;
    row(i) = cubic_kernel((x - knot) / h_);
  }
  return row;
}

Eigen::MatrixXd BSplineBasis::design(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(x.size(), size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.row(i) = eval(x(i));
  return out;
}

Eigen::MatrixXd BSplineBasis::penalty() const {
  int p = size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p - 2, p);
  for (int i = 0; i < p - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d.transpose() * d;
}

CyclicSplineBasis::CyclicSplineBasis(double period, int n_basis)
    : period_(period), n_basis_(n_basis) {
  if (n_basis < 4) throw std::invalid_argument("CyclicSplineBasis: n_basis < 4");
  h_ = period / n_basis;
}

Eigen::RowVectorXd CyclicSplineBasis::eval(double x) const {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_basis_);
  double xm = std::fmod(x, period_);
  if (xm < 0.0) xm += period_;
  for (int j = 0; j < n_basis_; ++j) {
    // support spans 4h; account for the wrap by trying both shifts
    double d = std::fmod(xm - j * h_ + 2.0 * period_, period_);
    row(j) = cubic_kernel(d / h_);
  }
  return row;
}

Eigen::MatrixXd CyclicSplineBasis::design(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(x.size(), n_basis_);
  for (Eigen::Index i = 0; i < x.size(); ++i) out.row(i) = eval(x(i));
  return out;
}

Eigen::MatrixXd CyclicSplineBasis::penalty() const {
  int p = n_basis_;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    d(i, i) = -2.0;
    d(i, (i + 1) % p) = 1.0;
    d(i, (i + p - 1) % p) = 1.0;
  }
  return d.transpose() * d;
}

Eigen::MatrixXd constraint_null_basis(const Eigen::VectorXd& w) {
  Eigen::Index p = w.size();
  Eigen::MatrixXd wm = w;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(wm);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(p - 1);
}

GeneralizedDet generalized_log_det(const Eigen::MatrixXd& s, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const auto& ev = es.eigenvalues();
  double max_ev = ev.maxCoeff();
  GeneralizedDet out{0.0, 0};
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > tol * max_ev) {
      out.log_det += std::log(ev(i));
      out.rank += 1;
    }
  }
  return out;
}

}  // namespace excess
