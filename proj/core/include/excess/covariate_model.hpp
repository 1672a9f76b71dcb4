#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excess/gamma_uncertainty.hpp"
#include "excess/mcmc.hpp"
#include "excess/rng.hpp"
#include "excess/types.hpp"

namespace excess {

/// Covariate model specification: time-varying covariates get an overall
/// fixed association plus an RW2 deviation path with a sum-to-zero
/// constraint; constant covariates get plain fixed effects. With income
/// interaction on, each time-varying covariate is split into per-income
/// paths.
struct ModelSpec {
  std::vector<std::string> time_varying = {"containment", "sqrt_covid_rate", "temperature",
                                           "test_positivity"};
  bool income_interaction = true;
  std::vector<std::string> constant_covariates = {"diabetes_rate", "cardio_rate"};
  bool include_income_indicator = true;
  double pc_u = 1.0;
  double pc_alpha = 0.01;
  double fixed_effect_sd = 31.6227766016838;  // "normal with large variance"
};

struct CovariateCell {
  int country = 0;  // index into CovariateFitData::countries
  int t = 1;
  double y = 0.0;
  double log_e = 0.0;  // log E-hat
  double tau = 0.0;    // tau-hat
};

/// Assembled fit-set design: observed pandemic cells of full and partial
/// countries, the expanded path covariates, and fixed-effect columns.
struct CovariateFitData {
  std::vector<std::string> countries;
  std::vector<CovariateCell> cells;
  std::vector<std::string> path_names;   // P expanded paths
  std::vector<std::string> fixed_names;  // alpha excluded: P overall + constants
  Eigen::MatrixXd x_path;   // n_cells x P
  Eigen::MatrixXd design_fixed;  // n_cells x (1 + G): intercept | paths | constants

  int n_cells() const { return static_cast<int>(cells.size()); }
  int n_paths() const { return static_cast<int>(path_names.size()); }
  /// Index of a cell, -1 if not observed in the fit set.
  int cell_index(const std::string& iso3, int t) const;

 private:
  friend CovariateFitData build_fit_data(const std::map<std::string, MortalitySeries>&,
                                         const ExpectedDistribution&, const CovariatePanel&,
                                         const PopulationTable&, const ModelSpec&,
                                         const std::vector<std::string>&);
  std::map<std::string, std::array<int, kPandemicMonths>> cell_lookup_;
};

/// Per-country design rows for prediction (any country with covariates).
struct CountryDesign {
  std::string iso3;
  Eigen::MatrixXd x_path;   // 24 x P
  Eigen::MatrixXd design_fixed;  // 24 x (1 + G)
};

CovariateFitData build_fit_data(const std::map<std::string, MortalitySeries>& observed,
                                const ExpectedDistribution& expected, const CovariatePanel& panel,
                                const PopulationTable& population, const ModelSpec& spec,
                                const std::vector<std::string>& fit_countries);

CountryDesign build_country_design(const CovariatePanel& panel, const PopulationTable& population,
                                   const ModelSpec& spec, const std::string& iso3);

/// Joint posterior samples from the adaptive Metropolis-within-Gibbs run.
struct PosteriorDraws {
  int n_draws = 0;
  std::vector<std::string> path_names;
  std::vector<std::string> fixed_names;
  Eigen::MatrixXd fixed;                  // n_draws x (1 + G), col 0 = alpha
  std::vector<Eigen::MatrixXd> beta;      // per path: n_draws x 24
  Eigen::MatrixXd sigma_beta;             // n_draws x P
  Eigen::VectorXd sigma_eps;              // n_draws
  std::map<int, Eigen::VectorXd> eps_draws;  // per requested cell index
  Eigen::VectorXd theta_mean;             // per fit cell, posterior mean of theta
  Eigen::VectorXd theta_sq_mean;          // per fit cell, posterior mean of theta^2
  std::vector<ScalarDiagnostic> diagnostics;

  /// Evenly spaced draw indices for thinned prediction (aligned across
  /// all downstream consumers).
  std::vector<int> thin_indices(int s_use) const;
  /// log theta for draw s at a design row, without the epsilon term.
  double linear_predictor(int s, const CountryDesign& design, int t) const;
};

struct FitModelOptions {
  McmcConfig mcmc;
  /// Cells whose epsilon draws must be retained (benchmarking needs the
  /// last observed month of each partial country).
  std::vector<int> keep_eps_cells;
  /// Optional warm start from a previous fit (CV folds).
  const PosteriorDraws* warm_start = nullptr;
  bool check_diagnostics = true;
};

/// Fits the hierarchical NB log-linear model. Throws DiagnosticsError if
/// split-Rhat/ESS thresholds fail (unless disabled).
PosteriorDraws fit_model(const CovariateFitData& data, const ModelSpec& spec,
                         const FitModelOptions& options, std::uint64_t seed);

struct CountryPrediction {
  std::string iso3;
  Eigen::MatrixXd y_draws;      // s_use x 24
  Eigen::MatrixXd theta_draws;  // s_use x 24
  bool benchmarked = false;
  bool benchmark_skipped_zero = false;  // y_T1 = 0 fallback
};

/// Posterior predictive for a country with no pandemic data: fresh
/// epsilon per draw and cell, then NegBin(E-hat * theta, tau-hat).
CountryPrediction predict_no_data(const PosteriorDraws& draws, const CountryDesign& design,
                                  const ExpectedDistribution& expected, int s_use, Rng& rng);

/// Benchmarked prediction for a partial country: the factor
/// f = y_T1 / (E_hat_T1 * theta_T1) per draw multiplies the mean for all
/// missing months. Uses the in-sample epsilon draws at T1 when available.
CountryPrediction benchmark_partial(const PosteriorDraws& draws, const CovariateFitData& fit_data,
                                    const MortalitySeries& observed, const CountryDesign& design,
                                    const ExpectedDistribution& expected, int s_use, Rng& rng);

/// Multinomial month apportionment for countries with annual pandemic
/// totals; per draw the split probabilities are E^(s)_t theta^(s)_t
/// normalized within the year. Counts sum to the annual total exactly.
CountryPrediction apportion_annual_country(const PosteriorDraws& draws,
                                           const CountryDesign& design,
                                           const std::map<int, long long>& annual_totals,
                                           const ExpectedDistribution& expected, int s_use,
                                           Rng& rng);

}  // namespace excess
