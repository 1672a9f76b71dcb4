#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "excess/types.hpp"

namespace excess {

/// Synthetic-world generator: a complete input directory (all CSV
/// schemas) drawn from the modeling assumptions, with the generating
/// truth returned for calibration checks.
struct SyntheticWorldConfig {
  int full_national = 14;
  int partial_national = 6;
  int subnational = 2;
  int annual = 2;
  int no_data = 6;
  int historic_years = 5;
  std::uint64_t seed = 42;
  double sigma_eps_true = 0.05;
  double overdispersion_true = 800.0;  // NB phi for historic counts
  int subnational_regions = 4;
};

struct SyntheticTruth {
  std::map<std::string, std::array<double, kPandemicMonths>> theta;
  std::map<std::string, std::array<double, kPandemicMonths>> expected;
  std::map<std::string, std::array<long long, kPandemicMonths>> acm;
  std::map<std::string, Tier> tier;
};

/// Writes mortality.csv, covariates.csv, population.csv, region.csv,
/// temperature.csv, covid_reported.csv and subnational.csv under `dir`.
SyntheticTruth write_synthetic_world(const std::string& dir, const SyntheticWorldConfig& config);

}  // namespace excess
