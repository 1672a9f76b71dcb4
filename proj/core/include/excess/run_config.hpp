#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace excess {

/// Flat TOML-compatible run configuration: [section] headers and
/// key = value pairs. Unknown keys are an error so typos fail loudly.
struct RunConfig {
  // [run]
  std::uint64_t seed = 20220101;
  std::string input_dir = ".";
  std::string output_dir = "run";
  int summary_draws = 2000;

  // [expected]
  int gamma_samples = 10000;
  int seasonal_basis_dim = 8;
  int max_trend_segments = 10;
  std::string linear_trend_countries;  // comma-separated ISO3 overrides

  // [covariate]
  std::string time_varying = "containment,sqrt_covid_rate,temperature,test_positivity";
  std::string constant_covariates = "diabetes_rate,cardio_rate";
  bool income_interaction = true;
  bool include_income_indicator = true;
  int chains = 4;
  int warmup = 5000;
  int keep = 5000;
  int thin = 1;
  double rhat_max = 1.02;
  double ess_min = 400.0;
  double pc_u = 1.0;
  double pc_alpha = 0.01;
  double fixed_effect_sd = 31.6227766016838;

  // [subnational]
  int share_chains = 4;
  int share_warmup = 2000;
  int share_keep = 2500;
  long long constrained_iterations = 200000;

  // [excess]
  std::string point_estimate = "median";  // or "mean"

  // [validate]
  int cv_max_folds = 0;
  int sim_subnational_replications = 50;
  int sim_constrained_replications = 11;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_toml(const std::string& text, const std::string& source = "<config>");
  std::string to_toml() const;

  std::vector<std::string> linear_trend_list() const;
  std::vector<std::string> split_list(const std::string& csv) const;
};

}  // namespace excess
