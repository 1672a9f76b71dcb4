#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excess/gamma_uncertainty.hpp"
#include "excess/rng.hpp"
#include "excess/types.hpp"

namespace excess {

/// Joint excess draws: per country a 24 x S matrix of
/// delta = Y - E per draw. The draw index s is aligned across countries
/// so group sums respect posterior dependence.
struct ExcessDraws {
  int n_draws = 0;
  std::map<std::string, Eigen::MatrixXd> delta;  // 24 x S
  std::map<std::string, Eigen::MatrixXd> e_draws;  // 24 x S, expected counts

  const Eigen::MatrixXd& of(const std::string& iso3) const;
};

/// Observed counts (constant across draws) or predictive Y draws per
/// country; exactly one of the two per country-month.
struct AcmDraws {
  int n_draws = 0;
  // y(t-1, s); observed months hold the constant observed value
  std::map<std::string, Eigen::MatrixXd> y;
};

/// Per-draw elementwise difference; E draws are sampled from
/// Gamma(tau_hat, tau_hat/E_hat) with one stream per country.
ExcessDraws compute_excess(const AcmDraws& acm, const ExpectedDistribution& expected,
                           std::uint64_t seed);

enum class GroupingLevel { Country, Region, Income, Global };
enum class PointEstimate { Median, Mean };

struct SummaryRow {
  std::string level;
  std::string key;
  std::string period;  // "1".."24" or "cumulative"
  double point = 0.0;
  double lo50 = 0.0, hi50 = 0.0;
  double lo80 = 0.0, hi80 = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
  bool defined = true;  // false for e.g. ratios with zero denominator
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  void append(const SummaryTable& other);
};

struct SummaryOptions {
  PointEstimate point = PointEstimate::Median;
};

/// Per-draw group sums before quantiles. Monthly and cumulative rows for
/// every requested grouping level.
SummaryTable aggregate(const ExcessDraws& draws, const PopulationTable& population,
                       const std::vector<GroupingLevel>& levels, const SummaryOptions& opts = {});

/// Group excess draws for one level (per draw sums over members); used by
/// rates, ratios and rankings. Keys: country ISO3, region name, income
/// name, or "global".
std::map<std::string, Eigen::MatrixXd> group_delta(const ExcessDraws& draws,
                                                   const PopulationTable& population,
                                                   GroupingLevel level);

/// Annualized excess rate per 100,000: cumulative delta divided by
/// person-years. Person-years are the monthly population divided by 12,
/// summed over the window.
SummaryTable excess_rate(const ExcessDraws& draws, const PopulationTable& population,
                         GroupingLevel level, const SummaryOptions& opts = {});

/// P(country has rank r) over cumulative excess-rate draws; rank 1 is the
/// highest rate, ties broken by country code order.
struct RankMatrix {
  std::vector<std::string> countries;
  Eigen::MatrixXd probability;  // countries x ranks
};
RankMatrix rank_countries(const ExcessDraws& draws, const PopulationTable& population);

/// Ratio of total excess to total reported COVID-19 deaths per draw.
/// Zero reported totals yield an undefined row with the flag cleared.
SummaryTable ratio_to_reported(const ExcessDraws& draws, const ReportedCovidDeaths& reported,
                               const PopulationTable& population, GroupingLevel level,
                               const SummaryOptions& opts = {});

}  // namespace excess
