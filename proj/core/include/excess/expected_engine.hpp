#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "excess/splines.hpp"
#include "excess/types.hpp"

namespace excess {

struct ExpectedOptions {
  /// Requested trend kind; forced to Linear when the history is short
  /// (< 36 monthly observations, or < 3 annual totals).
  TrendKind trend_kind = TrendKind::Spline;
  int seasonal_basis_dim = 8;
  int max_trend_segments = 10;
  /// Fixed smoothing parameters bypass REML selection (tests/sensitivity).
  std::optional<double> fixed_lambda_trend;
  std::optional<double> fixed_lambda_seasonal;
  double phi_max = 1e8;
  int max_inner_iterations = 200;
  /// First calendar year of the 24-month (or 2-year) prediction window.
  int prediction_start_year = kFirstPandemicYear;
};

/// Fitted no-crisis baseline model for one country: log-scale predictive
/// mean and sd for each pandemic month (monthly history) or pandemic year
/// (annual history).
struct ExpectedFit {
  std::string iso3;
  Granularity granularity = Granularity::Monthly;
  TrendKind trend_kind = TrendKind::Spline;
  double overdispersion = 0.0;  // phi
  double lambda_trend = 0.0;
  double lambda_seasonal = 0.0;
  double log_likelihood = 0.0;  // unpenalized NB log-likelihood at the optimum

  std::vector<double> eta_hat;    // 24 (monthly) or 2 (annual)
  std::vector<double> sigma_hat;  // same length

  // Fitted internals, kept for prediction and introspection.
  Eigen::VectorXd coef;
  Eigen::MatrixXd coef_cov;  // inverse penalized Fisher information
  int first_year = 0;        // calendar year of index 1
  double trend_center = 0.0; // for the Linear trend column
  std::optional<BSplineBasis> trend_basis;
  Eigen::MatrixXd trend_z;
  std::optional<CyclicSplineBasis> seasonal_basis;
  Eigen::MatrixXd seasonal_z;
  int trend_col = 1;     // first trend column (intercept is column 0)
  int seasonal_col = 0;  // first seasonal column, 0 if none
};

ExpectedFit fit_monthly_expected(const HistoricSeries& history, const ExpectedOptions& opts = {});
ExpectedFit fit_annual_expected(const HistoricSeries& history, const ExpectedOptions& opts = {});

struct LogPrediction {
  double eta_hat;
  double sigma_hat;
};

/// Deterministic lookup of the fitted predictive summary; index is the
/// pandemic month t' (monthly fits) or pandemic year v' (annual fits).
/// sigma_hat carries coefficient uncertainty only.
LogPrediction predict_log_expected(const ExpectedFit& fit, int index);

/// Value of the fitted seasonal component at calendar month m (1..12);
/// zero for annual fits.
double seasonal_component(const ExpectedFit& fit, double m);

/// Annual-trend component at a year offset (1 = first historic year).
double trend_component(const ExpectedFit& fit, double year_index);

}  // namespace excess
