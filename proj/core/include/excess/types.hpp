#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace excess {

/// Pandemic window: 24 months, Jan 2020 .. Dec 2021.
inline constexpr int kPandemicMonths = 24;
inline constexpr int kFirstPandemicYear = 2020;

/// Month index t = 12(v-1) + m with year-of-window v in {1,2} and calendar
/// month m in {1..12}. The mapping is bijective.
struct CountryMonthKey {
  std::string iso3;
  int t = 1;

  static int month_of(int t) { return (t - 1) % 12 + 1; }
  static int year_index_of(int t) { return (t - 1) / 12 + 1; }
  static int calendar_year_of(int t) { return kFirstPandemicYear + year_index_of(t) - 1; }
  static int t_of(int year_index, int month) { return 12 * (year_index - 1) + month; }
};

enum class Tier { FullNational, PartialNational, SubnationalOrAnnual, NoData };
enum class Granularity { Monthly, Annual };
enum class TrendKind { Spline, Linear };
enum class WhoRegion { AFRO, AMRO, EMRO, EURO, SEARO, WPRO };
enum class IncomeGroup { High, LowMiddle };

std::string to_string(Tier t);
std::string to_string(WhoRegion r);
std::string to_string(IncomeGroup g);
std::string to_string(TrendKind k);
WhoRegion who_region_from_string(const std::string& s);
IncomeGroup income_group_from_string(const std::string& s);

struct MonthObservation {
  int t = 0;
  long long count = 0;
  bool observed = false;
};

/// Observed pandemic-period ACM for one country.
struct MortalitySeries {
  std::string iso3;
  std::array<MonthObservation, kPandemicMonths> values{};
  /// Annual pandemic totals by calendar year, for annual-only countries.
  std::map<int, long long> annual_totals;
  Tier tier = Tier::NoData;
  double completeness_scale = 1.0;  // pre-applied upstream, carried as metadata

  /// Length of the contiguous observed prefix T1 (0 for NoData).
  int observed_prefix() const;
  int n_observed() const;
};

/// Pre-pandemic ACM history for one country.
struct HistoricSeries {
  std::string iso3;
  Granularity granularity = Granularity::Monthly;
  struct MonthlyCount {
    int year = 0;
    int month = 0;
    long long count = 0;
  };
  std::vector<MonthlyCount> monthly;       // sorted by (year, month)
  std::map<int, long long> annual;         // year -> total

  int n_monthly() const { return static_cast<int>(monthly.size()); }
  int n_years() const;
};

/// Standardized covariates. Time-varying values are per country-month;
/// constant values per country. Indicator columns are exempt from scaling.
struct CovariatePanel {
  std::vector<std::string> time_varying_names;
  std::vector<std::string> constant_names;
  // name -> iso3 -> 24 values
  std::map<std::string, std::map<std::string, std::array<double, kPandemicMonths>>> time_varying;
  std::map<std::string, std::map<std::string, std::array<bool, kPandemicMonths>>> time_varying_present;
  // name -> iso3 -> value
  std::map<std::string, std::map<std::string, double>> constant;
  std::map<std::string, std::map<std::string, bool>> constant_present;
  // cells filled by imputation
  std::map<std::string, std::map<std::string, std::array<bool, kPandemicMonths>>> imputed_mask;
  std::vector<std::string> indicator_names;  // exempt from standardization
  bool standardized = false;

  bool is_indicator(const std::string& name) const;
};

struct CountryMeta {
  std::string iso3;
  WhoRegion region = WhoRegion::EURO;
  IncomeGroup income = IncomeGroup::High;
};

/// Population per country-month (linear interpolation of annual values)
/// plus region and income-group lookups.
struct PopulationTable {
  std::map<std::string, std::array<double, kPandemicMonths>> population;
  std::map<std::string, CountryMeta> meta;

  double at(const std::string& iso3, int t) const;
  const CountryMeta& meta_of(const std::string& iso3) const;
};

struct ReportedCovidDeaths {
  std::map<std::string, std::array<long long, kPandemicMonths>> counts;
};

}  // namespace excess
