#pragma once

#include <array>
#include <string>
#include <vector>

namespace excess {

/// One country-year of monthly counts with temperatures; cells without an
/// observed count are masked out of the likelihood.
struct CountryYearCells {
  std::string iso3;
  int year = 0;
  std::array<double, 12> temperature{};
  std::array<long long, 12> count{};
  std::array<bool, 12> active{};
};

/// Global log-linear temperature coefficient for within-year mortality
/// seasonality, learned from countries with historic monthly data.
struct TemperatureModel {
  double beta = 0.0;
  double beta_sd = 0.0;
  int country_years = 0;
};

/// Maximizes the multinomial likelihood obtained by analytically
/// eliminating the per-country-year Poisson intensities (prior 1/lambda).
/// Throws ValidationError when temperatures are constant within every
/// country-year (beta unidentifiable).
TemperatureModel fit_temperature_model(const std::vector<CountryYearCells>& data);

/// Softmax of beta * z over 12 months; sums to 1 exactly.
std::array<double, 12> month_shares(const TemperatureModel& model,
                                    const std::array<double, 12>& temps);

struct PoissonTrickReport {
  double beta_eliminated = 0.0;  // eliminated-Poisson route
  double beta_direct = 0.0;      // direct multinomial maximization
  double abs_difference = 0.0;
  bool degenerate = false;  // likelihood constant in beta (e.g. one active cell)
};

/// Checks that the eliminated-Poisson route and an independent direct
/// multinomial optimizer agree on beta-hat.
PoissonTrickReport verify_poisson_trick(const std::vector<CountryYearCells>& data);

}  // namespace excess
