#include "excess/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "excess/stats.hpp"

namespace excess {

std::string to_string(Tier t) {
  switch (t) {
    case Tier::FullNational: return "full_national";
    case Tier::PartialNational: return "partial_national";
    case Tier::SubnationalOrAnnual: return "subnational_or_annual";
    case Tier::NoData: return "no_data";
  }
  return "?";
}

std::string to_string(WhoRegion r) {
  switch (r) {
    case WhoRegion::AFRO: return "AFRO";
    case WhoRegion::AMRO: return "AMRO";
    case WhoRegion::EMRO: return "EMRO";
    case WhoRegion::EURO: return "EURO";
    case WhoRegion::SEARO: return "SEARO";
    case WhoRegion::WPRO: return "WPRO";
  }
  return "?";
}

std::string to_string(IncomeGroup g) {
  return g == IncomeGroup::High ? "high" : "low_middle";
}

std::string to_string(TrendKind k) { return k == TrendKind::Spline ? "spline" : "linear"; }

WhoRegion who_region_from_string(const std::string& s) {
  if (s == "AFRO") return WhoRegion::AFRO;
  if (s == "AMRO") return WhoRegion::AMRO;
  if (s == "EMRO") return WhoRegion::EMRO;
  if (s == "EURO") return WhoRegion::EURO;
  if (s == "SEARO") return WhoRegion::SEARO;
  if (s == "WPRO") return WhoRegion::WPRO;
  throw ValidationError("unknown WHO region: " + s);
}

IncomeGroup income_group_from_string(const std::string& s) {
  if (s == "high") return IncomeGroup::High;
  if (s == "low_middle") return IncomeGroup::LowMiddle;
  throw ValidationError("unknown income group: " + s + " (expected high|low_middle)");
}

int MortalitySeries::observed_prefix() const {
  int t1 = 0;
  for (int t = 1; t <= kPandemicMonths; ++t) {
    if (values[t - 1].observed) {
      t1 = t;
    } else {
      break;
    }
  }
  return t1;
}

int MortalitySeries::n_observed() const {
  int n = 0;
  for (const auto& v : values) n += v.observed ? 1 : 0;
  return n;
}

int HistoricSeries::n_years() const {
  if (granularity == Granularity::Annual) return static_cast<int>(annual.size());
  std::set<int> years;
  for (const auto& m : monthly) years.insert(m.year);
  return static_cast<int>(years.size());
}

bool CovariatePanel::is_indicator(const std::string& name) const {
  return std::find(indicator_names.begin(), indicator_names.end(), name) != indicator_names.end();
}

double PopulationTable::at(const std::string& iso3, int t) const {
  auto it = population.find(iso3);
  if (it == population.end()) throw ValidationError("no population for " + iso3);
  return it->second[t - 1];
}

const CountryMeta& PopulationTable::meta_of(const std::string& iso3) const {
  auto it = meta.find(iso3);
  if (it == meta.end()) throw ValidationError("no region/income metadata for " + iso3);
  return it->second;
}

MortalityData ingest_mortality(const CsvTable& table, const std::vector<std::string>& all_countries) {
  MortalityData out;
  std::size_t c_iso = table.col("iso3");
  std::size_t c_year = table.col("year");
  std::size_t c_month = table.col("month");
  std::size_t c_deaths = table.col("deaths");

  std::set<std::tuple<std::string, int, int>> seen;  // (iso3, year, month-or-0)
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::string iso = table.field(i, c_iso);
    if (iso.empty()) throw ParseError(table.source(), table.line_of(i), "empty iso3");
    int year = static_cast<int>(table.int_field(i, c_year));
    bool annual_row = table.empty_field(i, c_month);
    int month = annual_row ? 0 : static_cast<int>(table.int_field(i, c_month));
    if (!annual_row && (month < 1 || month > 12)) {
      throw ParseError(table.source(), table.line_of(i), "month out of range: " + std::to_string(month));
    }
    long long deaths = table.int_field(i, c_deaths);
    if (deaths < 0) {
      throw ValidationError(table.source() + ":" + std::to_string(table.line_of(i)) +
                            ": negative death count for " + iso);
    }
    if (!seen.insert({iso, year, month}).second) {
      throw ValidationError(table.source() + ":" + std::to_string(table.line_of(i)) +
                            ": duplicate row for " + iso + " " + std::to_string(year) +
                            (annual_row ? " (annual)" : "-" + std::to_string(month)));
    }

    bool pandemic = year >= kFirstPandemicYear && year < kFirstPandemicYear + 2;
    if (pandemic) {
      auto& series = out.pandemic[iso];
      series.iso3 = iso;
      if (annual_row) {
        series.annual_totals[year] = deaths;
      } else {
        int t = CountryMonthKey::t_of(year - kFirstPandemicYear + 1, month);
        series.values[t - 1] = {t, deaths, true};
      }
    } else if (year < kFirstPandemicYear) {
      auto& hist = out.historic[iso];
      hist.iso3 = iso;
      if (annual_row) {
        hist.annual[year] = deaths;
      } else {
        hist.monthly.push_back({year, month, deaths});
      }
    }
    // rows after the window are ignored
  }

  for (auto& [iso, hist] : out.historic) {
    std::sort(hist.monthly.begin(), hist.monthly.end(), [](const auto& a, const auto& b) {
      return std::tie(a.year, a.month) < std::tie(b.year, b.month);
    });
    hist.granularity = hist.monthly.empty() ? Granularity::Annual : Granularity::Monthly;
  }

  // Tier assignment. Every country gets exactly one tier.
  std::set<std::string> countries(all_countries.begin(), all_countries.end());
  for (const auto& [iso, s] : out.pandemic) countries.insert(iso);
  for (const auto& iso : countries) {
    auto& series = out.pandemic[iso];
    series.iso3 = iso;
    int n_obs = series.n_observed();
    int prefix = series.observed_prefix();
    if (n_obs == kPandemicMonths) {
      series.tier = Tier::FullNational;
    } else if (n_obs > 0) {
      if (prefix != n_obs) {
        throw ValidationError("country " + iso +
                              " has non-contiguous observed months; expected a contiguous prefix");
      }
      series.tier = Tier::PartialNational;
    } else if (!series.annual_totals.empty()) {
      series.tier = Tier::SubnationalOrAnnual;
    } else {
      series.tier = Tier::NoData;
    }
  }
  return out;
}

MortalityData ingest_mortality_file(const std::string& path,
                                    const std::vector<std::string>& all_countries) {
  return ingest_mortality(CsvTable::read_file(path), all_countries);
}

std::string serialize_mortality(const MortalityData& data) {
  std::ostringstream os;
  os << "iso3,year,month,deaths\n";
  for (const auto& [iso, hist] : data.historic) {
    for (const auto& m : hist.monthly) {
      os << iso << ',' << m.year << ',' << m.month << ',' << m.count << '\n';
    }
    for (const auto& [year, count] : hist.annual) {
      os << iso << ',' << year << ",," << count << '\n';
    }
  }
  for (const auto& [iso, s] : data.pandemic) {
    for (const auto& v : s.values) {
      if (!v.observed) continue;
      os << iso << ',' << CountryMonthKey::calendar_year_of(v.t) << ','
         << CountryMonthKey::month_of(v.t) << ',' << v.count << '\n';
    }
    for (const auto& [year, count] : s.annual_totals) {
      os << iso << ',' << year << ",," << count << '\n';
    }
  }
  return os.str();
}

CovariatePanel ingest_covariates(const CsvTable& table) {
  CovariatePanel panel;
  std::size_t c_iso = table.col("iso3");
  std::size_t c_year = table.col("year");
  std::size_t c_month = table.col("month");
  std::size_t c_name = table.col("name");
  std::size_t c_value = table.col("value");

  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::string iso = table.field(i, c_iso);
    std::string name = table.field(i, c_name);
    if (table.empty_field(i, c_value)) continue;  // missing cell
    double value = table.double_field(i, c_value);
    if (table.empty_field(i, c_month)) {
      if (!panel.constant.count(name)) panel.constant_names.push_back(name);
      panel.constant[name][iso] = value;
      panel.constant_present[name][iso] = true;
    } else {
      int year = static_cast<int>(table.int_field(i, c_year));
      int month = static_cast<int>(table.int_field(i, c_month));
      if (year < kFirstPandemicYear || year >= kFirstPandemicYear + 2) continue;
      int t = CountryMonthKey::t_of(year - kFirstPandemicYear + 1, month);
      if (!panel.time_varying.count(name)) panel.time_varying_names.push_back(name);
      panel.time_varying[name][iso][t - 1] = value;
      panel.time_varying_present[name][iso][t - 1] = true;
    }
  }
  return panel;
}

PopulationTable ingest_population(const CsvTable& population, const CsvTable& region) {
  PopulationTable out;
  std::size_t r_iso = region.col("iso3");
  std::size_t r_region = region.col("who_region");
  std::size_t r_income = region.col("income_group");
  for (std::size_t i = 0; i < region.n_rows(); ++i) {
    CountryMeta m;
    m.iso3 = region.field(i, r_iso);
    m.region = who_region_from_string(region.field(i, r_region));
    m.income = income_group_from_string(region.field(i, r_income));
    if (out.meta.count(m.iso3)) {
      throw ValidationError("duplicate region row for " + m.iso3);
    }
    out.meta[m.iso3] = m;
  }

  std::size_t p_iso = population.col("iso3");
  std::size_t p_year = population.col("year");
  std::size_t p_pop = population.col("population");
  std::map<std::string, std::map<int, double>> annual;
  for (std::size_t i = 0; i < population.n_rows(); ++i) {
    double pop = population.double_field(i, p_pop);
    if (pop <= 0.0) {
      throw ValidationError(population.source() + ":" + std::to_string(population.line_of(i)) +
                            ": population must be positive");
    }
    annual[population.field(i, p_iso)][static_cast<int>(population.int_field(i, p_year))] = pop;
  }

  // Linear interpolation in month between annual values, anchored at
  // mid-year (month 6.5 -> year value). Years beyond the table are held
  // constant at the nearest value.
  for (const auto& [iso, years] : annual) {
    auto value_at = [&](double year_frac) {
      if (years.empty()) throw ValidationError("no population rows for " + iso);
      auto lo = years.begin();
      auto hi = std::prev(years.end());
      if (year_frac <= lo->first) return lo->second;
      if (year_frac >= hi->first) return hi->second;
      auto it = years.lower_bound(static_cast<int>(std::ceil(year_frac)));
      auto prev = std::prev(it);
      double w = (year_frac - prev->first) / static_cast<double>(it->first - prev->first);
      return (1.0 - w) * prev->second + w * it->second;
    };
    std::array<double, kPandemicMonths> series{};
    for (int t = 1; t <= kPandemicMonths; ++t) {
      double year_frac = kFirstPandemicYear + (CountryMonthKey::year_index_of(t) - 1) +
                         (CountryMonthKey::month_of(t) - 0.5) / 12.0 - 0.5;
      series[t - 1] = value_at(year_frac);
    }
    out.population[iso] = series;
  }
  return out;
}

ReportedCovidDeaths ingest_reported_covid(const CsvTable& table) {
  ReportedCovidDeaths out;
  std::size_t c_iso = table.col("iso3");
  std::size_t c_year = table.col("year");
  std::size_t c_month = table.col("month");
  std::size_t c_deaths = table.col("deaths");
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::string iso = table.field(i, c_iso);
    int year = static_cast<int>(table.int_field(i, c_year));
    int month = static_cast<int>(table.int_field(i, c_month));
    long long deaths = table.int_field(i, c_deaths);
    if (deaths < 0) {
      throw ValidationError(table.source() + ":" + std::to_string(table.line_of(i)) +
                            ": negative reported COVID-19 deaths for " + iso);
    }
    if (year < kFirstPandemicYear || year >= kFirstPandemicYear + 2) continue;
    int t = CountryMonthKey::t_of(year - kFirstPandemicYear + 1, month);
    auto [it, inserted] = out.counts.try_emplace(iso);
    if (inserted) it->second.fill(0);
    it->second[t - 1] = deaths;
  }
  return out;
}

TemperatureData ingest_temperature(const CsvTable& table) {
  TemperatureData out;
  std::size_t c_iso = table.col("iso3");
  std::size_t c_year = table.col("year");
  std::size_t c_month = table.col("month");
  std::size_t c_temp = table.col("temp_c");
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::string iso = table.field(i, c_iso);
    int year = static_cast<int>(table.int_field(i, c_year));
    int month = static_cast<int>(table.int_field(i, c_month));
    if (month < 1 || month > 12) {
      throw ParseError(table.source(), table.line_of(i), "month out of range");
    }
    double temp = table.double_field(i, c_temp);
    auto [it, inserted] = out.by_country_year[iso].try_emplace(year);
    if (inserted) it->second.fill(0.0);
    it->second[month - 1] = temp;
    out.present[iso][year][month - 1] = true;
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

StandardizeReport standardize_covariates(CovariatePanel& panel, const PopulationTable& pop,
                                         const StandardizeOptions& opts) {
  StandardizeReport report;
  std::set<std::string> fit_set(opts.fitting_countries.begin(), opts.fitting_countries.end());
  auto in_fit = [&](const std::string& iso, int t) {
    if (!fit_set.empty() && !fit_set.count(iso)) return false;
    auto it = opts.observed_prefix.find(iso);
    if (it != opts.observed_prefix.end() && t > it->second) return false;
    return true;
  };

  // Impute missing time-varying cells with regional medians per
  // covariate-month, falling back to the global median. Countries absent
  // from the panel entirely get fully imputed series.
  for (const auto& name : panel.time_varying_names) {
    auto& by_country = panel.time_varying[name];
    auto& present = panel.time_varying_present[name];
    for (const auto& [iso, meta] : pop.meta) {
      if (!by_country.count(iso)) {
        by_country[iso].fill(0.0);
        present[iso].fill(false);
      }
    }
    for (int t = 1; t <= kPandemicMonths; ++t) {
      std::map<WhoRegion, std::vector<double>> regional;
      std::vector<double> global;
      for (const auto& [iso, vals] : by_country) {
        if (present[iso][t - 1]) {
          regional[pop.meta_of(iso).region].push_back(vals[t - 1]);
          global.push_back(vals[t - 1]);
        }
      }
      for (auto& [iso, vals] : by_country) {
        if (present[iso][t - 1]) continue;
        WhoRegion r = pop.meta_of(iso).region;
        double fill;
        auto it = regional.find(r);
        if (it != regional.end() && !it->second.empty()) {
          fill = median_of(it->second);
        } else {
          fill = median_of(global);
          report.warnings.push_back("covariate " + name + " month " + std::to_string(t) +
                                    ": no regional values for " + to_string(r) +
                                    "; used global median");
        }
        if (std::isnan(fill)) {
          throw ValidationError("covariate " + name + " has no values anywhere for month " +
                                std::to_string(t));
        }
        vals[t - 1] = fill;
        panel.imputed_mask[name][iso][t - 1] = true;
        present[iso][t - 1] = true;
      }
    }
  }

  // Constant covariates: impute by regional median.
  for (const auto& name : panel.constant_names) {
    auto& by_country = panel.constant[name];
    std::map<WhoRegion, std::vector<double>> regional;
    std::vector<double> global;
    for (const auto& [iso, v] : by_country) {
      regional[pop.meta_of(iso).region].push_back(v);
      global.push_back(v);
    }
    for (const auto& [iso, meta] : pop.meta) {
      if (by_country.count(iso)) continue;
      auto it = regional.find(meta.region);
      double fill = (it != regional.end() && !it->second.empty()) ? median_of(it->second)
                                                                  : median_of(global);
      if (std::isnan(fill)) {
        throw ValidationError("constant covariate " + name + " has no values anywhere");
      }
      by_country[iso] = fill;
    }
  }

  // Center/scale non-indicator columns over the fitting cells.
  for (const auto& name : panel.time_varying_names) {
    if (panel.is_indicator(name)) continue;
    auto& by_country = panel.time_varying[name];
    std::vector<double> fit_values;
    for (const auto& [iso, vals] : by_country) {
      for (int t = 1; t <= kPandemicMonths; ++t) {
        if (in_fit(iso, t)) fit_values.push_back(vals[t - 1]);
      }
    }
    if (fit_values.size() < 2) {
      throw ValidationError("covariate " + name + ": not enough fitting cells to standardize");
    }
    double m = mean(fit_values);
    double sd = sample_sd(fit_values);
    if (sd <= 0.0) {
      throw ValidationError("covariate " + name + " is constant over the fitting set");
    }
    for (auto& [iso, vals] : by_country) {
      for (auto& v : vals) v = (v - m) / sd;
    }
    report.column_mean[name] = m;
    report.column_sd[name] = sd;
  }
  for (const auto& name : panel.constant_names) {
    if (panel.is_indicator(name)) continue;
    auto& by_country = panel.constant[name];
    std::vector<double> fit_values;
    for (const auto& [iso, v] : by_country) {
      if (fit_set.empty() || fit_set.count(iso)) fit_values.push_back(v);
    }
    if (fit_values.size() < 2) {
      throw ValidationError("covariate " + name + ": not enough fitting countries to standardize");
    }
    double m = mean(fit_values);
    double sd = sample_sd(fit_values);
    if (sd <= 0.0) {
      throw ValidationError("covariate " + name + " is constant over the fitting set");
    }
    for (auto& [iso, v] : by_country) v = (v - m) / sd;
    report.column_mean[name] = m;
    report.column_sd[name] = sd;
  }
  panel.standardized = true;
  return report;
}

}  // namespace excess
