#include <benchmark/benchmark.h>

#include <cmath>

#include "excess/covariate_model.hpp"
#include "excess/expected_engine.hpp"
#include "excess/gamma_uncertainty.hpp"
#include "excess/rng.hpp"
#include "excess/seasonal.hpp"

using namespace excess;

namespace {

HistoricSeries make_history(int years) {
  Rng rng(42);
  HistoricSeries h;
  h.iso3 = "AAA";
  for (int y = 2020 - years; y < 2020; ++y) {
    for (int m = 1; m <= 12; ++m) {
      double mu = 1000.0 * std::exp(0.01 * (y - 2015) + 0.08 * std::sin(m / 12.0 * 6.283));
      h.monthly.push_back({y, m, rng.neg_binomial_mean_disp(mu, 600.0)});
    }
  }
  return h;
}

void BM_ExpectedFitMonthly(benchmark::State& state) {
  auto history = make_history(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto fit = fit_monthly_expected(history);
    benchmark::DoNotOptimize(fit.eta_hat.data());
  }
}
BENCHMARK(BM_ExpectedFitMonthly)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_GammaMomentMatch(benchmark::State& state) {
  Rng rng(7);
  GammaOptions opts;
  opts.samples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto g = gamma_from_monthly(std::log(1000.0), 0.1, opts, rng);
    benchmark::DoNotOptimize(g.tau_hat);
  }
}
BENCHMARK(BM_GammaMomentMatch)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_TemperatureModelFit(benchmark::State& state) {
  Rng rng(5);
  std::vector<CountryYearCells> data;
  for (int i = 0; i < 100; ++i) {
    CountryYearCells cy;
    cy.iso3 = "C" + std::to_string(i % 20);
    double denom = 0.0;
    std::array<double, 12> w{};
    for (int m = 0; m < 12; ++m) {
      cy.temperature[m] = rng.uniform(-5.0, 30.0);
      w[m] = std::exp(0.04 * cy.temperature[m]);
      denom += w[m];
      cy.active[m] = true;
    }
    for (int m = 0; m < 12; ++m) cy.count[m] = rng.poisson(30000.0 * w[m] / denom);
    data.push_back(cy);
  }
  for (auto _ : state) {
    auto model = fit_temperature_model(data);
    benchmark::DoNotOptimize(model.beta);
  }
}
BENCHMARK(BM_TemperatureModelFit)->Unit(benchmark::kMicrosecond);

void BM_CovariateFit(benchmark::State& state) {
  Rng rng(21);
  ModelSpec spec;
  spec.time_varying = {"x"};
  spec.income_interaction = false;
  spec.constant_covariates = {};
  spec.include_income_indicator = false;
  std::map<std::string, MortalitySeries> observed;
  CovariatePanel panel;
  panel.time_varying_names = {"x"};
  PopulationTable pop;
  ExpectedDistribution expected;
  std::vector<std::string> countries;
  int n_countries = static_cast<int>(state.range(0));
  for (int c = 0; c < n_countries; ++c) {
    std::string iso = "C" + std::to_string(100 + c);
    countries.push_back(iso);
    pop.meta[iso] = {iso, WhoRegion::EURO, IncomeGroup::High};
    auto& series = observed[iso];
    series.iso3 = iso;
    auto& x_row = panel.time_varying["x"][iso];
    auto& gam = expected.by_country[iso];
    for (int t = 1; t <= kPandemicMonths; ++t) {
      x_row[t - 1] = rng.normal();
      gam[t - 1].e_hat = 1000.0;
      gam[t - 1].tau_hat = 400.0;
      double theta = std::exp(0.05 + 0.15 * x_row[t - 1] + rng.normal(0.0, 0.05));
      series.values[t - 1] = {t, rng.neg_binomial_mean_disp(1000.0 * theta, 400.0), true};
    }
  }
  auto data = build_fit_data(observed, expected, panel, pop, spec, countries);
  FitModelOptions opts;
  opts.mcmc.chains = 1;
  opts.mcmc.warmup = 200;
  opts.mcmc.keep = 200;
  opts.check_diagnostics = false;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto draws = fit_model(data, spec, opts, seed++);
    benchmark::DoNotOptimize(draws.n_draws);
  }
}
BENCHMARK(BM_CovariateFit)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
