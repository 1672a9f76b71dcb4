#include <cmath>

#include "doctest.h"
#include "excess/errors.hpp"
#include "excess/expected_engine.hpp"
#include "excess/rng.hpp"

using namespace excess;

namespace {

HistoricSeries constant_monthly(const std::string& iso, int years, long long level) {
  HistoricSeries h;
  h.iso3 = iso;
  h.granularity = Granularity::Monthly;
  for (int y = 2020 - years; y < 2020; ++y) {
    for (int m = 1; m <= 12; ++m) h.monthly.push_back({y, m, level});
  }
  return h;
}

}  // namespace

TEST_CASE("constant history predicts its level with shrunk components") {
  auto h = constant_monthly("AAA", 5, 1000);
  auto fit = fit_monthly_expected(h);
  for (int t = 1; t <= 24; ++t) {
    auto p = predict_log_expected(fit, t);
    CHECK(p.eta_hat == doctest::Approx(std::log(1000.0)).epsilon(0.01));
  }
  double amp = 0.0;
  for (int m = 1; m <= 12; ++m) amp = std::max(amp, std::abs(seasonal_component(fit, m)));
  CHECK(amp < 0.01);
}

TEST_CASE("noiseless linear trend extrapolates on the count scale") {
  HistoricSeries h;
  h.iso3 = "AAA";
  for (int y = 2015; y <= 2019; ++y) {
    long long level = 1010 + 10 * (y - 2015);
    for (int m = 1; m <= 12; ++m) h.monthly.push_back({y, m, level});
  }
  ExpectedOptions opts;
  opts.trend_kind = TrendKind::Linear;
  auto fit = fit_monthly_expected(h, opts);
  // 2020 ~ 1060, 2021 ~ 1070, within 0.5% on the count scale
  for (int t = 1; t <= 12; ++t) {
    CHECK(std::exp(predict_log_expected(fit, t).eta_hat) == doctest::Approx(1060.0).epsilon(0.005));
  }
  for (int t = 13; t <= 24; ++t) {
    CHECK(std::exp(predict_log_expected(fit, t).eta_hat) == doctest::Approx(1070.0).epsilon(0.005));
  }
}

TEST_CASE("pure seasonal signal is recovered") {
  HistoricSeries h;
  h.iso3 = "AAA";
  const double pi = 3.14159265358979323846;
  for (int y = 2015; y <= 2019; ++y) {
    for (int m = 1; m <= 12; ++m) {
      double mu = 1000.0 * std::exp(0.2 * std::sin(2.0 * pi * m / 12.0));
      h.monthly.push_back({y, m, std::llround(mu)});
    }
  }
  auto fit = fit_monthly_expected(h);
  // correlation between the fitted seasonal curve and the generator
  std::vector<double> truth, est;
  for (int m = 1; m <= 12; ++m) {
    truth.push_back(0.2 * std::sin(2.0 * pi * m / 12.0));
    est.push_back(seasonal_component(fit, m));
  }
  double mt = 0, me = 0;
  for (int i = 0; i < 12; ++i) {
    mt += truth[i] / 12;
    me += est[i] / 12;
  }
  double num = 0, dt = 0, de = 0;
  for (int i = 0; i < 12; ++i) {
    num += (truth[i] - mt) * (est[i] - me);
    dt += (truth[i] - mt) * (truth[i] - mt);
    de += (est[i] - me) * (est[i] - me);
  }
  CHECK(num / std::sqrt(dt * de) > 0.99);
}

TEST_CASE("annual constant history") {
  HistoricSeries h;
  h.iso3 = "VNM";
  h.granularity = Granularity::Annual;
  for (int y = 2000; y <= 2019; ++y) h.annual[y] = 12000;
  auto fit = fit_annual_expected(h);
  CHECK(predict_log_expected(fit, 1).eta_hat == doctest::Approx(std::log(12000.0)).epsilon(0.01));
  CHECK(predict_log_expected(fit, 2).eta_hat == doctest::Approx(std::log(12000.0)).epsilon(0.01));
}

TEST_CASE("annual linear trend extrapolates") {
  HistoricSeries h;
  h.iso3 = "VNM";
  h.granularity = Granularity::Annual;
  for (int y = 2000; y <= 2019; ++y) h.annual[y] = 10000 + 100 * (y - 2000);
  ExpectedOptions opts;
  opts.trend_kind = TrendKind::Linear;
  auto fit = fit_annual_expected(h, opts);
  CHECK(std::exp(predict_log_expected(fit, 1).eta_hat) == doctest::Approx(12000.0).epsilon(0.005));
  CHECK(std::exp(predict_log_expected(fit, 2).eta_hat) == doctest::Approx(12100.0).epsilon(0.005));
}

TEST_CASE("two annual points force the linear fallback") {
  HistoricSeries h;
  h.iso3 = "GRD";
  h.granularity = Granularity::Annual;
  h.annual[2018] = 900;
  h.annual[2019] = 910;
  auto fit = fit_annual_expected(h);  // requested spline, forced linear
  CHECK(fit.trend_kind == TrendKind::Linear);
}

TEST_CASE("short monthly history forces the linear fallback") {
  auto h = constant_monthly("DZA", 2, 800);  // 24 months < 36
  auto fit = fit_monthly_expected(h);
  CHECK(fit.trend_kind == TrendKind::Linear);
}

TEST_CASE("out-of-range queries throw") {
  auto fit = fit_monthly_expected(constant_monthly("AAA", 3, 500));
  CHECK_THROWS_AS(predict_log_expected(fit, 25), std::out_of_range);
  CHECK_THROWS_AS(predict_log_expected(fit, 0), std::out_of_range);
}

TEST_CASE("linear fit evaluated on the fitted line") {
  HistoricSeries h;
  h.iso3 = "VNM";
  h.granularity = Granularity::Annual;
  for (int y = 2010; y <= 2019; ++y) h.annual[y] = 10000 + 50 * (y - 2010);
  ExpectedOptions opts;
  opts.trend_kind = TrendKind::Linear;
  auto fit = fit_annual_expected(h, opts);
  // eta at v'=2 lies exactly on the line through the v'=1 point
  double intercept = fit.coef(0);
  double slope = fit.coef(fit.trend_col);
  double y1 = (2020 - 2010 + 1) - fit.trend_center;
  double y2 = (2021 - 2010 + 1) - fit.trend_center;
  CHECK(predict_log_expected(fit, 1).eta_hat == doctest::Approx(intercept + slope * y1).epsilon(1e-12));
  CHECK(predict_log_expected(fit, 2).eta_hat == doctest::Approx(intercept + slope * y2).epsilon(1e-12));
}

TEST_CASE("predictive sd shrinks as history grows") {
  Rng rng(99);
  auto gen = [&](int years) {
    HistoricSeries h;
    h.iso3 = "AAA";
    for (int y = 2020 - years; y < 2020; ++y) {
      for (int m = 1; m <= 12; ++m) {
        h.monthly.push_back({y, m, rng.neg_binomial_mean_disp(1000.0, 500.0)});
      }
    }
    return h;
  };
  auto fit24 = fit_monthly_expected(gen(2));
  auto fit60 = fit_monthly_expected(gen(5));
  double s24 = 0, s60 = 0;
  for (int t = 1; t <= 24; ++t) {
    s24 += predict_log_expected(fit24, t).sigma_hat;
    s60 += predict_log_expected(fit60, t).sigma_hat;
  }
  CHECK(s60 < s24);
}

TEST_CASE("heavy trend penalty collapses the spline to the linear fit") {
  Rng rng(5);
  HistoricSeries h;
  h.iso3 = "AAA";
  for (int y = 2015; y <= 2019; ++y) {
    for (int m = 1; m <= 12; ++m) {
      double mu = 900.0 + 25.0 * (y - 2015);
      h.monthly.push_back({y, m, rng.neg_binomial_mean_disp(mu, 2000.0)});
    }
  }
  ExpectedOptions heavy;
  heavy.fixed_lambda_trend = 1e10;
  heavy.fixed_lambda_seasonal = 1.0;
  auto spline_fit = fit_monthly_expected(h, heavy);

  ExpectedOptions lin;
  lin.trend_kind = TrendKind::Linear;
  lin.fixed_lambda_seasonal = 1.0;
  auto linear_fit = fit_monthly_expected(h, lin);

  for (int t = 1; t <= 24; ++t) {
    double a = predict_log_expected(spline_fit, t).eta_hat;
    double b = predict_log_expected(linear_fit, t).eta_hat;
    CHECK(std::abs(a - b) / std::abs(b) < 1e-6);
  }
}

TEST_CASE("spline optimum dominates the nested linear fit") {
  Rng rng(17);
  HistoricSeries h;
  h.iso3 = "AAA";
  for (int y = 2013; y <= 2019; ++y) {
    for (int m = 1; m <= 12; ++m) {
      double mu = 1000.0 + 8.0 * (y - 2013) * (y - 2013);  // curved trend
      h.monthly.push_back({y, m, rng.neg_binomial_mean_disp(mu, 800.0)});
    }
  }
  auto spline_fit = fit_monthly_expected(h);
  ExpectedOptions lin;
  lin.trend_kind = TrendKind::Linear;
  auto linear_fit = fit_monthly_expected(h, lin);
  CHECK(spline_fit.log_likelihood >= linear_fit.log_likelihood - 1e-6);
}

TEST_CASE("predictions are invariant to relabeling calendar years") {
  Rng rng(23);
  HistoricSeries a, b;
  a.iso3 = b.iso3 = "AAA";
  for (int y = 2015; y <= 2019; ++y) {
    for (int m = 1; m <= 12; ++m) {
      long long c = rng.neg_binomial_mean_disp(1000.0 + 20.0 * (y - 2015), 1000.0);
      a.monthly.push_back({y, m, c});
      b.monthly.push_back({y - 7, m, c});  // shifted labels
    }
  }
  auto fa = fit_monthly_expected(a);
  ExpectedOptions shifted;
  shifted.prediction_start_year = 2020 - 7;  // same offset as the labels
  auto fb = fit_monthly_expected(b, shifted);
  for (int t = 1; t <= 24; ++t) {
    CHECK(predict_log_expected(fa, t).eta_hat ==
          doctest::Approx(predict_log_expected(fb, t).eta_hat).epsilon(1e-8));
    CHECK(predict_log_expected(fa, t).sigma_hat ==
          doctest::Approx(predict_log_expected(fb, t).sigma_hat).epsilon(1e-8));
  }
}

TEST_CASE("all-zero history is rejected") {
  auto h = constant_monthly("AAA", 3, 0);
  CHECK_THROWS_AS(fit_monthly_expected(h), ValidationError);
}

TEST_CASE("too-short monthly history is rejected") {
  auto h = constant_monthly("AAA", 1, 100);
  CHECK_THROWS_AS(fit_monthly_expected(h), ValidationError);
}
