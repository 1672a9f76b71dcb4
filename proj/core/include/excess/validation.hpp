#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excess/covariate_model.hpp"
#include "excess/subnational.hpp"
#include "excess/types.hpp"

namespace excess {

enum class CvScheme { Country, Month };

struct CvCellRecord {
  std::string iso3;
  int t = 0;
  double observed_rate = 0.0;
  double predicted_rate = 0.0;
  double lo50 = 0.0, hi50 = 0.0, lo80 = 0.0, hi80 = 0.0, lo95 = 0.0, hi95 = 0.0;
  bool hit50 = false, hit80 = false, hit95 = false;
};

struct CvReport {
  CvScheme scheme = CvScheme::Country;
  double coverage50 = 0.0, coverage80 = 0.0, coverage95 = 0.0;
  double relative_bias = 0.0;           // mean (r_hat - r)/r
  double absolute_relative_bias = 0.0;  // mean |r_hat - r|/r
  double rmse_x1000 = 0.0;              // sqrt(mean (r_hat - r)^2) * 1000
  std::vector<CvCellRecord> records;
  std::vector<std::string> skipped_folds;  // diagnostics failures
};

struct CvOptions {
  McmcConfig full_mcmc{.chains = 4, .warmup = 3000, .keep = 3000};
  /// Fold refits are warm-started from the full fit.
  McmcConfig fold_mcmc{.chains = 4, .warmup = 600, .keep = 1500};
  int s_use = 2000;
  /// Optional cap on the number of folds (0 = all).
  int max_folds = 0;
  bool check_full_diagnostics = true;
  bool check_fold_diagnostics = true;
};

/// Leave-one-country-out / leave-one-month-out cross-validation of the
/// covariate model. Fold fits never see the held-out cells (asserted by
/// fingerprinting the fit set).
CvReport run_cv(const std::map<std::string, MortalitySeries>& observed,
                const ExpectedDistribution& expected, const CovariatePanel& panel,
                const PopulationTable& population, const ModelSpec& spec, CvScheme scheme,
                const CvOptions& options, std::uint64_t seed);

/// Standardized residual (y - E theta) / sqrt(E theta (1 + E theta / tau)).
double standardized_residual(double y, double e_hat, double theta_hat, double tau_hat);

struct ResidualRecord {
  std::string iso3;
  int t = 0;
  double residual = 0.0;
  WhoRegion region = WhoRegion::EURO;
};

/// In-sample residual table with theta-hat taken as the posterior mean.
std::vector<ResidualRecord> standardized_residuals(const PosteriorDraws& draws,
                                                   const CovariateFitData& data,
                                                   const PopulationTable& population);

struct SimulationSuiteOptions {
  int subnational_replications = 50;
  int constrained_replications = 11;
  long long constrained_iterations = 100000;
  std::uint64_t seed = 20220101;
};

struct SimulationSuiteReport {
  // subnational study (supplement generator)
  double subnational_coverage95 = 0.0;  // held-out months inside 95% PI
  int subnational_cells = 0;
  bool subnational_pass = false;
  // constrained-count study
  int constrained_covered_median = 0;  // covered months (of 12), median replication
  double constrained_acceptance = 0.0;
  bool constrained_pass = false;
  // gamma approximation sweep
  double gamma_worst_ks = 0.0;
  bool gamma_pass = false;

  bool all_pass() const { return subnational_pass && constrained_pass && gamma_pass; }
};

/// Executable version of the supplementary simulation studies.
SimulationSuiteReport run_simulation_suite(const SimulationSuiteOptions& options = {});

}  // namespace excess
