#include "excess/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "excess/errors.hpp"
#include "excess/rng.hpp"

namespace excess {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct CountrySpec {
  std::string iso3;
  Tier tier;
  WhoRegion region;
  IncomeGroup income;
  double base_level;      // historic monthly mean scale
  double trend_per_year;  // multiplicative drift
  double seasonal_amp;
  double temp_level;      // mean temperature
  bool annual_history;
};

std::string make_iso(int i) {
  std::string s = "AAA";
  s[2] = static_cast<char>('A' + i % 26);
  s[1] = static_cast<char>('A' + (i / 26) % 26);
  return s;
}

}  // namespace

SyntheticTruth write_synthetic_world(const std::string& dir, const SyntheticWorldConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(splitmix64(config.seed ^ 0xabcdef1234567890ull));

  const WhoRegion regions[] = {WhoRegion::AFRO, WhoRegion::AMRO, WhoRegion::EMRO,
                               WhoRegion::EURO, WhoRegion::SEARO, WhoRegion::WPRO};

  std::vector<CountrySpec> countries;
  auto add = [&](int count, Tier tier) {
    for (int i = 0; i < count; ++i) {
      CountrySpec c;
      c.iso3 = make_iso(static_cast<int>(countries.size()));
      c.tier = tier;
      c.region = regions[countries.size() % 6];
      c.income = countries.size() % 2 == 0 ? IncomeGroup::High : IncomeGroup::LowMiddle;
      c.base_level = 400.0 + rng.uniform(0.0, 2000.0);
      c.trend_per_year = rng.uniform(-0.01, 0.02);
      c.seasonal_amp = rng.uniform(0.02, 0.12);
      c.temp_level = rng.uniform(-2.0, 25.0);
      c.annual_history = tier == Tier::SubnationalOrAnnual && countries.size() % 2 == 0;
      countries.push_back(c);
    }
  };
  add(config.full_national, Tier::FullNational);
  add(config.partial_national, Tier::PartialNational);
  add(config.subnational, Tier::SubnationalOrAnnual);
  add(config.annual, Tier::SubnationalOrAnnual);
  add(config.no_data, Tier::NoData);
  // the "annual" block is the annual-totals variant of the mixed tier
  for (int i = 0; i < config.annual; ++i) {
    countries[config.full_national + config.partial_national + config.subnational + i]
        .annual_history = true;
  }

  auto temperature_at = [&](const CountrySpec& c, int month) {
    return c.temp_level + 9.0 * std::sin(2.0 * kPi * (month - 1) / 12.0 +
                                         (c.region == WhoRegion::AMRO ? kPi : 0.0));
  };
  auto seasonal_factor = [&](const CountrySpec& c, int month) {
    return std::exp(c.seasonal_amp * std::sin(2.0 * kPi * month / 12.0));
  };
  auto expected_at = [&](const CountrySpec& c, int year, int month) {
    int years_from_start = year - (2020 - config.historic_years);
    return c.base_level * std::exp(c.trend_per_year * years_from_start) *
           seasonal_factor(c, month);
  };

  // true covariate effects on near-standardized raw covariates
  const double alpha_true = 0.02;
  const double g_covid = 0.12, g_containment = -0.05, g_temp = 0.03, g_positivity = 0.04;
  const double g_diabetes = -0.03, g_cardio = 0.02;
  // one genuinely time-varying association (sum-to-zero path on sqrt covid rate)
  std::array<double, kPandemicMonths> covid_path{};
  {
    double mean = 0.0;
    for (int t = 0; t < kPandemicMonths; ++t) {
      covid_path[t] = 0.05 * std::sin(2.0 * kPi * t / kPandemicMonths);
      mean += covid_path[t] / kPandemicMonths;
    }
    for (auto& v : covid_path) v -= mean;
  }

  SyntheticTruth truth;

  std::ofstream mortality(dir + "/mortality.csv");
  std::ofstream covariates(dir + "/covariates.csv");
  std::ofstream population(dir + "/population.csv");
  std::ofstream region(dir + "/region.csv");
  std::ofstream temperature(dir + "/temperature.csv");
  std::ofstream covid(dir + "/covid_reported.csv");
  std::ofstream subnational(dir + "/subnational.csv");
  mortality << "iso3,year,month,deaths\n";
  covariates << "iso3,year,month,name,value\n";
  population << "iso3,year,population\n";
  region << "iso3,who_region,income_group\n";
  temperature << "iso3,year,month,temp_c\n";
  covid << "iso3,year,month,deaths\n";
  subnational << "iso3,region_id,year,month,deaths\n";

  for (const auto& c : countries) {
    truth.tier[c.iso3] = c.tier;
    region << c.iso3 << ',' << to_string(c.region) << ',' << to_string(c.income) << '\n';
    double pop_level = c.base_level * 70000.0 * rng.uniform(0.8, 1.25);
    for (int year = 2020 - config.historic_years; year <= 2022; ++year) {
      population << c.iso3 << ',' << year << ','
                 << std::llround(pop_level * std::exp(0.005 * (year - 2015))) << '\n';
    }

    // historic mortality + temperatures
    for (int year = 2020 - config.historic_years; year <= 2021; ++year) {
      for (int month = 1; month <= 12; ++month) {
        temperature << c.iso3 << ',' << year << ',' << month << ','
                    << temperature_at(c, month) << '\n';
      }
    }
    if (c.annual_history) {
      for (int year = 2020 - config.historic_years - 10; year <= 2019; ++year) {
        long long total = 0;
        for (int month = 1; month <= 12; ++month) {
          total += rng.neg_binomial_mean_disp(expected_at(c, year, month),
                                              config.overdispersion_true);
        }
        mortality << c.iso3 << ',' << year << ",," << total << '\n';
      }
    } else if (!(c.tier == Tier::SubnationalOrAnnual)) {
      for (int year = 2020 - config.historic_years; year <= 2019; ++year) {
        for (int month = 1; month <= 12; ++month) {
          long long y = rng.neg_binomial_mean_disp(expected_at(c, year, month),
                                                   config.overdispersion_true);
          mortality << c.iso3 << ',' << year << ',' << month << ',' << y << '\n';
        }
      }
    }
    // monthly-history subnational countries write their history together
    // with the region counts below so both share one national total

    // covariates: time-varying near mean-zero scale-one by construction
    std::array<double, kPandemicMonths> covid_rate{}, containment{}, positivity{};
    double wave = rng.uniform(0.0, 2.0 * kPi);
    for (int t = 1; t <= kPandemicMonths; ++t) {
      covid_rate[t - 1] = std::sin(2.0 * kPi * t / 18.0 + wave) + 0.3 * rng.normal();
      containment[t - 1] = std::cos(2.0 * kPi * t / 20.0 + wave * 0.7) + 0.3 * rng.normal();
      positivity[t - 1] = 0.8 * std::sin(2.0 * kPi * t / 14.0 + 2.0 * wave) + 0.4 * rng.normal();
    }
    double diabetes = rng.normal();
    double cardio = rng.normal();
    covariates << c.iso3 << ",,,diabetes_rate," << diabetes << '\n';
    covariates << c.iso3 << ",,,cardio_rate," << cardio << '\n';
    for (int t = 1; t <= kPandemicMonths; ++t) {
      int year = CountryMonthKey::calendar_year_of(t);
      int month = CountryMonthKey::month_of(t);
      covariates << c.iso3 << ',' << year << ',' << month << ",sqrt_covid_rate,"
                 << covid_rate[t - 1] << '\n';
      covariates << c.iso3 << ',' << year << ',' << month << ",containment,"
                 << containment[t - 1] << '\n';
      covariates << c.iso3 << ',' << year << ',' << month << ",test_positivity,"
                 << positivity[t - 1] << '\n';
      covariates << c.iso3 << ',' << year << ',' << month << ",temperature,"
                 << (temperature_at(c, month) - 12.0) / 9.0 << '\n';
    }

    // pandemic truth from the covariate model
    auto& theta_row = truth.theta[c.iso3];
    auto& e_row = truth.expected[c.iso3];
    auto& y_row = truth.acm[c.iso3];
    for (int t = 1; t <= kPandemicMonths; ++t) {
      int year = CountryMonthKey::calendar_year_of(t);
      int month = CountryMonthKey::month_of(t);
      double e_true = expected_at(c, year, month);
      double temp_std = (temperature_at(c, month) - 12.0) / 9.0;
      double lp = alpha_true + (g_covid + covid_path[t - 1]) * covid_rate[t - 1] +
                  g_containment * containment[t - 1] + g_temp * temp_std +
                  g_positivity * positivity[t - 1] + g_diabetes * diabetes +
                  g_cardio * cardio + rng.normal(0.0, config.sigma_eps_true);
      double theta = std::exp(lp);
      long long y = rng.neg_binomial_mean_disp(e_true * theta, 4.0 * config.overdispersion_true);
      theta_row[t - 1] = theta;
      e_row[t - 1] = e_true;
      y_row[t - 1] = y;

      long long reported = std::max<long long>(
          0, std::llround(0.4 * (static_cast<double>(y) - e_true) + 0.02 * e_true +
                          rng.normal(0.0, 0.01 * e_true)));
      covid << c.iso3 << ',' << year << ',' << month << ',' << reported << '\n';
    }

    // pandemic observations by tier
    if (c.tier == Tier::FullNational) {
      for (int t = 1; t <= kPandemicMonths; ++t) {
        mortality << c.iso3 << ',' << CountryMonthKey::calendar_year_of(t) << ','
                  << CountryMonthKey::month_of(t) << ',' << y_row[t - 1] << '\n';
      }
    } else if (c.tier == Tier::PartialNational) {
      int t1 = 12 + static_cast<int>(rng.uniform_int(9));  // prefix of 12..20 months
      for (int t = 1; t <= t1; ++t) {
        mortality << c.iso3 << ',' << CountryMonthKey::calendar_year_of(t) << ','
                  << CountryMonthKey::month_of(t) << ',' << y_row[t - 1] << '\n';
      }
    } else if (c.tier == Tier::SubnationalOrAnnual && c.annual_history) {
      // annual pandemic totals
      for (int v = 1; v <= 2; ++v) {
        long long total = 0;
        for (int m = 1; m <= 12; ++m) total += y_row[CountryMonthKey::t_of(v, m) - 1];
        mortality << c.iso3 << ',' << (kFirstPandemicYear + v - 1) << ",," << total << '\n';
      }
    } else if (c.tier == Tier::SubnationalOrAnnual) {
      // region shares from the subnational model; historic months carry
      // the national total through mortality.csv monthly rows above
      int k = config.subnational_regions;
      std::vector<double> share_alpha(k);
      for (int j = 0; j < k; ++j) share_alpha[j] = rng.uniform(-1.5, 0.0);
      auto region_probs = [&](double e) {
        std::vector<double> w(k + 1, 1.0);
        double denom = 1.0;
        for (int j = 0; j < k; ++j) {
          w[j] = std::exp(share_alpha[j] + e);
          denom += w[j];
        }
        for (auto& v : w) v /= denom;
        return w;
      };
      // historic region counts and the matching national totals
      for (int year = 2020 - config.historic_years; year <= 2019; ++year) {
        for (int month = 1; month <= 12; ++month) {
          long long total = rng.neg_binomial_mean_disp(expected_at(c, year, month),
                                                       config.overdispersion_true);
          mortality << c.iso3 << ',' << year << ',' << month << ',' << total << '\n';
          auto probs = region_probs(rng.normal(0.0, 0.1));
          auto counts = rng.multinomial(total, probs);
          for (int j = 0; j < k; ++j) {
            subnational << c.iso3 << ",R" << (j + 1) << ',' << year << ',' << month << ','
                        << counts[j] << '\n';
          }
        }
      }
      // pandemic region counts from the true ACM
      for (int t = 1; t <= kPandemicMonths; ++t) {
        auto probs = region_probs(rng.normal(0.0, 0.1));
        auto counts = rng.multinomial(y_row[t - 1], probs);
        for (int j = 0; j < k; ++j) {
          subnational << c.iso3 << ",R" << (j + 1) << ','
                      << CountryMonthKey::calendar_year_of(t) << ','
                      << CountryMonthKey::month_of(t) << ',' << counts[j] << '\n';
        }
      }
    }
    // NoData: no pandemic rows at all
  }
  return truth;
}

}  // namespace excess
