#include <cmath>

#include "doctest.h"
#include "excess/covariate_model.hpp"
#include "excess/errors.hpp"
#include "excess/stats.hpp"

using namespace excess;

namespace {

// Minimal hand-built posterior: no paths, alpha fixed, sigma_eps zero.
PosteriorDraws point_draws(int s, double alpha) {
  PosteriorDraws d;
  d.n_draws = s;
  d.fixed_names = {};
  d.fixed = Eigen::MatrixXd::Constant(s, 1, alpha);
  d.sigma_beta.resize(s, 0);
  d.sigma_eps = Eigen::VectorXd::Zero(s);
  return d;
}

CountryDesign intercept_design(const std::string& iso) {
  CountryDesign design;
  design.iso3 = iso;
  design.x_path.resize(kPandemicMonths, 0);
  design.design_fixed = Eigen::MatrixXd::Ones(kPandemicMonths, 1);
  return design;
}

ExpectedDistribution flat_expected(const std::string& iso, double e_hat, double tau) {
  ExpectedDistribution ed;
  auto& arr = ed.by_country[iso];
  for (auto& g : arr) {
    g.e_hat = e_hat;
    g.tau_hat = tau;
  }
  return ed;
}

}  // namespace

TEST_CASE("pc prior: Pr(sigma > 1) = 0.01") {
  double rate = pc_prior_rate(1.0, 0.01);
  CHECK(rate == doctest::Approx(4.60517).epsilon(1e-5));
  // analytic exponential tail
  CHECK(std::exp(-rate * 1.0) == doctest::Approx(0.01).epsilon(1e-10));
  // numerical integral of the density above 1
  double tail = 0.0, h = 1e-4;
  for (double s = 1.0; s < 10.0; s += h) {
    tail += std::exp(pc_prior_log_density(s + 0.5 * h, rate)) * h;
  }
  CHECK(tail == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("neutral draws reproduce the expected counts") {
  auto draws = point_draws(400, 0.0);
  auto design = intercept_design("XXA");
  auto expected = flat_expected("XXA", 1000.0, 1e8);  // tau -> infinity
  Rng rng(1);
  auto pred = predict_no_data(draws, design, expected, 400, rng);
  for (int t = 1; t <= kPandemicMonths; ++t) {
    std::vector<double> col(pred.y_draws.col(t - 1).data(),
                            pred.y_draws.col(t - 1).data() + pred.y_draws.rows());
    CHECK(mean(col) == doctest::Approx(1000.0).epsilon(0.01));
  }
}

TEST_CASE("doubling the expected counts doubles the predictive mean") {
  auto draws = point_draws(2000, 0.3);
  auto design = intercept_design("XXA");
  Rng rng1(7), rng2(7);
  auto p1 = predict_no_data(draws, design, flat_expected("XXA", 500.0, 1e8), -2000 < 0 ? 2000 : 2000, rng1);
  auto p2 = predict_no_data(draws, design, flat_expected("XXA", 1000.0, 1e8), 2000, rng2);
  double m1 = p1.y_draws.mean(), m2 = p2.y_draws.mean();
  CHECK(m2 == doctest::Approx(2.0 * m1).epsilon(0.01));
}

TEST_CASE("predictive variance exceeds the predictive mean") {
  PosteriorDraws draws = point_draws(4000, 0.0);
  draws.sigma_eps = Eigen::VectorXd::Constant(4000, 0.15);
  auto design = intercept_design("XXA");
  auto expected = flat_expected("XXA", 800.0, 60.0);
  Rng rng(3);
  auto pred = predict_no_data(draws, design, expected, 4000, rng);
  for (int t = 1; t <= kPandemicMonths; t += 6) {
    std::vector<double> col(pred.y_draws.col(t - 1).data(),
                            pred.y_draws.col(t - 1).data() + pred.y_draws.rows());
    CHECK(sample_variance(col) > mean(col));
  }
}

TEST_CASE("benchmark factor arithmetic") {
  // theta = 1.1 exactly, E_hat = 800 at the last observed month
  auto draws = point_draws(400, std::log(1.1));
  auto design = intercept_design("XXB");
  auto expected = flat_expected("XXB", 800.0, 1e8);

  MortalitySeries obs;
  obs.iso3 = "XXB";
  obs.tier = Tier::PartialNational;
  for (int t = 1; t <= 18; ++t) obs.values[t - 1] = {t, 1000, true};

  Rng rng(5);
  CovariateFitData no_fit_cells;  // epsilon draws unavailable -> fresh (sd 0)
  auto pred = benchmark_partial(draws, no_fit_cells, obs, design, expected, 400, rng);
  CHECK(pred.benchmarked);
  // f = 1000 / (800 * 1.1) = 1.13636...; predictive mean = E*theta*f = 1000
  for (int t = 19; t <= 24; ++t) {
    std::vector<double> col(pred.y_draws.col(t - 1).data(),
                            pred.y_draws.col(t - 1).data() + pred.y_draws.rows());
    CHECK(mean(col) == doctest::Approx(1000.0).epsilon(0.01));
  }
  // observed months pass through unchanged
  CHECK(pred.y_draws(0, 0) == 1000.0);
}

TEST_CASE("benchmark with f = 1 reduces to the plain prediction") {
  // y_T1 = E_hat * theta exactly: 880 = 800 * 1.1
  auto draws = point_draws(400, std::log(1.1));
  auto design = intercept_design("XXB");
  auto expected = flat_expected("XXB", 800.0, 1e8);
  MortalitySeries obs;
  obs.iso3 = "XXB";
  for (int t = 1; t <= 12; ++t) obs.values[t - 1] = {t, 880, true};
  Rng rng(6);
  CovariateFitData no_fit_cells;
  auto pred = benchmark_partial(draws, no_fit_cells, obs, design, expected, 400, rng);
  // f = 1: same as predict_no_data with mean E*theta = 880
  for (int t = 13; t <= 24; ++t) {
    std::vector<double> col(pred.y_draws.col(t - 1).data(),
                            pred.y_draws.col(t - 1).data() + pred.y_draws.rows());
    CHECK(mean(col) == doctest::Approx(880.0).epsilon(0.01));
  }
}

TEST_CASE("zero last observation falls back to unbenchmarked prediction") {
  auto draws = point_draws(100, 0.0);
  auto design = intercept_design("XXB");
  auto expected = flat_expected("XXB", 100.0, 1e8);
  MortalitySeries obs;
  obs.iso3 = "XXB";
  obs.values[0] = {1, 0, true};
  Rng rng(8);
  CovariateFitData no_fit_cells;
  auto pred = benchmark_partial(draws, no_fit_cells, obs, design, expected, 100, rng);
  CHECK_FALSE(pred.benchmarked);
  CHECK(pred.benchmark_skipped_zero);
}

TEST_CASE("annual apportionment: counts sum to the total exactly") {
  auto draws = point_draws(300, 0.0);
  auto design = intercept_design("XXC");
  auto expected = flat_expected("XXC", 900.0, 1e8);
  std::map<int, long long> totals = {{2020, 12000}, {2021, 0}};
  Rng rng(9);
  auto pred = apportion_annual_country(draws, design, totals, expected, 300, rng);
  for (int k = 0; k < pred.y_draws.rows(); ++k) {
    long long sum_2020 = 0;
    for (int t = 1; t <= 12; ++t) sum_2020 += static_cast<long long>(pred.y_draws(k, t - 1));
    CHECK(sum_2020 == 12000);
    for (int t = 13; t <= 24; ++t) CHECK(pred.y_draws(k, t - 1) == 0.0);  // Y+ = 0 -> all months 0
  }
  // equal E and theta: expected share 1/12 per month
  for (int t = 1; t <= 12; ++t) {
    std::vector<double> col(pred.y_draws.col(t - 1).data(),
                            pred.y_draws.col(t - 1).data() + pred.y_draws.rows());
    CHECK(mean(col) == doctest::Approx(1000.0).epsilon(0.02));
  }
}

TEST_CASE("annual apportionment: a double-weight month gets share 2/13") {
  PosteriorDraws draws = point_draws(400, 0.0);
  // one path whose beta path is log(2) at month 1 and 0 elsewhere would
  // break the sum-to-zero constraint; instead express the weight through
  // the expected counts: month 1 has twice the E-hat of the others.
  auto design = intercept_design("XXD");
  ExpectedDistribution expected = flat_expected("XXD", 700.0, 1e8);
  expected.by_country["XXD"][0].e_hat = 1400.0;
  std::map<int, long long> totals = {{2020, 13000}};
  Rng rng(10);
  auto pred = apportion_annual_country(draws, design, totals, expected, 400, rng);
  std::vector<double> col(pred.y_draws.col(0).data(),
                          pred.y_draws.col(0).data() + pred.y_draws.rows());
  CHECK(mean(col) == doctest::Approx(13000.0 * 2.0 / 13.0).epsilon(0.02));
}

TEST_CASE("negative annual total is rejected") {
  auto draws = point_draws(10, 0.0);
  auto design = intercept_design("XXE");
  auto expected = flat_expected("XXE", 100.0, 1e8);
  std::map<int, long long> totals = {{2020, -5}};
  Rng rng(11);
  CHECK_THROWS_AS(apportion_annual_country(draws, design, totals, expected, 10, rng),
                  ValidationError);
}

TEST_CASE("negbin likelihood converges to poisson as tau grows") {
  // log NB(y; mu, tau) -> log Poisson(y; mu). The rising-factorial term
  // is summed directly so the check is not polluted by lgamma
  // cancellation at huge tau.
  auto nb_ll = [](long long y, double mu, double tau) {
    double rising = 0.0;
    for (long long k = 0; k < y; ++k) rising += std::log(tau + static_cast<double>(k));
    return rising - std::lgamma(static_cast<double>(y) + 1.0) +
           tau * std::log(tau / (tau + mu)) + static_cast<double>(y) * std::log(mu / (tau + mu));
  };
  auto pois_ll = [](long long y, double mu) {
    return static_cast<double>(y) * std::log(mu) - mu - std::lgamma(static_cast<double>(y) + 1.0);
  };
  long long y = 950;
  double mu = 900.0;
  double prev_gap = 1e9;
  for (double tau : {1e4, 1e6, 1e8}) {
    double gap = std::abs(nb_ll(y, mu, tau) - pois_ll(y, mu));
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-4);
}

namespace {

// Small synthetic dataset drawn from the model itself.
struct SmallWorld {
  CovariateFitData data;
  double alpha_true;
  double gamma_true;
};

SmallWorld make_small_world(std::uint64_t seed) {
  Rng rng(seed);
  SmallWorld w;
  w.alpha_true = 0.05;
  w.gamma_true = 0.2;

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
  for (int c = 0; c < 8; ++c) {
    std::string iso = "C0" + std::to_string(c);
    countries.push_back(iso);
    pop.meta[iso] = {iso, WhoRegion::EURO, IncomeGroup::High};
    auto& series = observed[iso];
    series.iso3 = iso;
    series.tier = Tier::FullNational;
    auto& x_row = panel.time_varying["x"][iso];
    auto& gam = expected.by_country[iso];
    for (int t = 1; t <= kPandemicMonths; ++t) {
      x_row[t - 1] = rng.normal();
      gam[t - 1].e_hat = 1000.0;
      gam[t - 1].tau_hat = 400.0;
      double eps = rng.normal(0.0, 0.05);
      double theta = std::exp(w.alpha_true + w.gamma_true * x_row[t - 1] + eps);
      series.values[t - 1] = {t, rng.neg_binomial_mean_disp(1000.0 * theta, 400.0), true};
    }
  }
  w.data = build_fit_data(observed, expected, panel, pop, spec, countries);
  return w;
}

}  // namespace

TEST_CASE("small synthetic fit: recovery, constraints, diagnostics") {
  auto world = make_small_world(2024);
  ModelSpec spec;
  spec.time_varying = {"x"};
  spec.income_interaction = false;
  spec.constant_covariates = {};
  spec.include_income_indicator = false;

  FitModelOptions opts;
  opts.mcmc.chains = 4;
  opts.mcmc.warmup = 1200;
  opts.mcmc.keep = 1200;
  opts.mcmc.ess_min = 200.0;  // short run, relaxed gate
  auto draws = fit_model(world.data, spec, opts, 77);

  // RW2 sum-to-zero holds for every draw and path
  double worst = 0.0;
  for (const auto& path : draws.beta) {
    for (int s = 0; s < draws.n_draws; ++s) {
      worst = std::max(worst, std::abs(path.row(s).sum()));
    }
  }
  CHECK(worst < 1e-8);

  // fixed effects recovered within 3 posterior sd
  std::vector<double> alpha_draws(draws.fixed.col(0).data(),
                                  draws.fixed.col(0).data() + draws.n_draws);
  std::vector<double> gamma_draws(draws.fixed.col(1).data(),
                                  draws.fixed.col(1).data() + draws.n_draws);
  CHECK(std::abs(mean(alpha_draws) - world.alpha_true) < 3.0 * sample_sd(alpha_draws));
  CHECK(std::abs(mean(gamma_draws) - world.gamma_true) < 3.0 * sample_sd(gamma_draws));

  // in-sample fitted values hug the observed counts
  double rel_err_sum = 0.0;
  for (int i = 0; i < world.data.n_cells(); ++i) {
    const auto& cell = world.data.cells[i];
    double fitted = std::exp(cell.log_e) * draws.theta_mean(i);
    rel_err_sum += (fitted - cell.y) / cell.y;
  }
  CHECK(std::abs(rel_err_sum / world.data.n_cells()) < 0.02);
}

TEST_CASE("null covariate signal concentrates near zero") {
  Rng rng(31);
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
  for (int c = 0; c < 8; ++c) {
    std::string iso = "N0" + std::to_string(c);
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
      double theta = std::exp(rng.normal(0.0, 0.05));  // gamma = 0 truth
      series.values[t - 1] = {t, rng.neg_binomial_mean_disp(1000.0 * theta, 400.0), true};
    }
  }
  auto data = build_fit_data(observed, expected, panel, pop, spec, countries);

  FitModelOptions opts;
  opts.mcmc.chains = 2;
  opts.mcmc.warmup = 800;
  opts.mcmc.keep = 800;
  opts.check_diagnostics = false;  // smoke-scale run
  auto draws = fit_model(data, spec, opts, 99);
  std::vector<double> gamma_draws(draws.fixed.col(1).data(),
                                  draws.fixed.col(1).data() + draws.n_draws);
  CHECK(std::abs(mean(gamma_draws)) < 2.0 * sample_sd(gamma_draws));
}

TEST_CASE("diagnostics failure raises DiagnosticsError") {
  auto world = make_small_world(5);
  ModelSpec spec;
  spec.time_varying = {"x"};
  spec.income_interaction = false;
  spec.constant_covariates = {};
  spec.include_income_indicator = false;
  FitModelOptions opts;
  opts.mcmc.chains = 2;
  opts.mcmc.warmup = 10;
  opts.mcmc.keep = 40;  // far too short to converge
  CHECK_THROWS_AS(fit_model(world.data, spec, opts, 1), DiagnosticsError);
}

TEST_CASE("missing expected distribution is a precondition error") {
  Rng rng(1);
  ModelSpec spec;
  spec.time_varying = {"x"};
  spec.income_interaction = false;
  spec.constant_covariates = {};
  spec.include_income_indicator = false;
  std::map<std::string, MortalitySeries> observed;
  CovariatePanel panel;
  panel.time_varying_names = {"x"};
  PopulationTable pop;
  ExpectedDistribution expected;  // empty
  for (int c = 0; c < 2; ++c) {
    std::string iso = "M0" + std::to_string(c);
    pop.meta[iso] = {iso, WhoRegion::EURO, IncomeGroup::High};
    auto& series = observed[iso];
    series.iso3 = iso;
    auto& x_row = panel.time_varying["x"][iso];
    for (int t = 1; t <= kPandemicMonths; ++t) {
      x_row[t - 1] = 0.0;
      series.values[t - 1] = {t, 1000, true};
    }
  }
  CHECK_THROWS_AS(build_fit_data(observed, expected, panel, pop, spec, {"M00", "M01"}),
                  ValidationError);
}
