#pragma once

#include <map>
#include <string>
#include <vector>

#include "excess/csv.hpp"
#include "excess/types.hpp"

namespace excess {

struct MortalityData {
  std::map<std::string, MortalitySeries> pandemic;  // tier-tagged pandemic series
  std::map<std::string, HistoricSeries> historic;   // pre-2020 history
};

/// Ingest mortality.csv (iso3,year,month,deaths; month empty for annual
/// rows). Pandemic rows (2020-2021) populate MortalitySeries; earlier rows
/// populate HistoricSeries. Tier is inferred from the observation pattern;
/// countries listed in `all_countries` but absent from the file come back
/// as NoData.
MortalityData ingest_mortality(const CsvTable& table,
                               const std::vector<std::string>& all_countries = {});
MortalityData ingest_mortality_file(const std::string& path,
                                    const std::vector<std::string>& all_countries = {});

/// Serialize back to the mortality.csv schema (round-trip form).
std::string serialize_mortality(const MortalityData& data);

/// covariates.csv: iso3,year,month,name,value (month empty -> constant).
CovariatePanel ingest_covariates(const CsvTable& table);

/// population.csv (iso3,year,population) + region.csv (iso3,who_region,income_group).
/// Annual populations are interpolated linearly in month across the
/// pandemic window.
PopulationTable ingest_population(const CsvTable& population, const CsvTable& region);

/// covid_reported.csv: iso3,year,month,deaths.
ReportedCovidDeaths ingest_reported_covid(const CsvTable& table);

/// temperature.csv: iso3,year,month,temp_c. Keyed iso3 -> year -> [12].
struct TemperatureData {
  std::map<std::string, std::map<int, std::array<double, 12>>> by_country_year;
  std::map<std::string, std::map<int, std::array<bool, 12>>> present;
};
TemperatureData ingest_temperature(const CsvTable& table);

struct StandardizeOptions {
  /// Countries whose observed pandemic months define the fitting set for
  /// the standardization statistics. Imputation medians also come from
  /// these cells. If empty, all present cells are used.
  std::vector<std::string> fitting_countries;
  /// Months considered in-fit for partially observed countries, keyed by
  /// iso3; missing key means all 24 months.
  std::map<std::string, int> observed_prefix;
};

struct StandardizeReport {
  std::vector<std::string> warnings;  // e.g. region-month medians missing
  std::map<std::string, double> column_mean;
  std::map<std::string, double> column_sd;
};

/// Missing cells are filled with the WHO-region median for that
/// covariate-month (global median fallback, with a warning); then each
/// non-indicator column is centered and scaled to sd 1 over the fitting
/// cells. The sd uses the unbiased (n-1) convention.
StandardizeReport standardize_covariates(CovariatePanel& panel, const PopulationTable& pop,
                                         const StandardizeOptions& opts = {});

}  // namespace excess
