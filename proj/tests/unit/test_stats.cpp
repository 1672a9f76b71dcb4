#include <cmath>

#include "doctest.h"
#include "excess/rng.hpp"
#include "excess/stats.hpp"

using namespace excess;

TEST_CASE("moments use the unbiased variance convention") {
  std::vector<double> x = {80.0, 100.0, 120.0};
  CHECK(mean(x) == doctest::Approx(100.0));
  CHECK(sample_variance(x) == doctest::Approx(400.0));
}

TEST_CASE("quantiles interpolate and nest") {
  std::vector<double> x;
  for (int i = 0; i <= 100; ++i) x.push_back(static_cast<double>(i));
  CHECK(quantile(x, 0.5) == doctest::Approx(50.0));
  CHECK(quantile(x, 0.025) == doctest::Approx(2.5));
  CHECK(quantile(x, 0.25) >= quantile(x, 0.1));
}

TEST_CASE("gamma_p matches known values") {
  // P(1, x) = 1 - exp(-x)
  CHECK(gamma_p(1.0, 2.0) == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  // median of gamma(shape=2, rate=1) ~ 1.67835
  CHECK(gamma_cdf(1.67835, 2.0, 1.0) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(gamma_cdf(0.0, 3.0, 2.0) == 0.0);
}

TEST_CASE("split rhat separates mixed from unmixed chains") {
  Rng rng(7);
  std::vector<std::vector<double>> good(4), bad(4);
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 2000; ++i) {
      good[c].push_back(rng.normal());
      bad[c].push_back(rng.normal() + (c < 2 ? 0.0 : 1.5));
    }
  }
  CHECK(split_rhat(good) < 1.01);
  CHECK(split_rhat(bad) > 1.2);
}

TEST_CASE("effective sample size shrinks with autocorrelation") {
  Rng rng(11);
  std::vector<std::vector<double>> iid(4), ar(4);
  double rho = 0.9;
  for (int c = 0; c < 4; ++c) {
    double x = 0.0;
    for (int i = 0; i < 4000; ++i) {
      iid[c].push_back(rng.normal());
      x = rho * x + std::sqrt(1 - rho * rho) * rng.normal();
      ar[c].push_back(x);
    }
  }
  double ess_iid = effective_sample_size(iid);
  double ess_ar = effective_sample_size(ar);
  CHECK(ess_iid > 8000);   // close to 16000 in practice
  CHECK(ess_ar < 2500);    // theory: 16000 * (1-rho)/(1+rho) ~ 842
  CHECK(ess_ar > 200);
}

TEST_CASE("ks distance detects a wrong distribution") {
  Rng rng(3);
  std::vector<double> gamma_samples;
  for (int i = 0; i < 4000; ++i) gamma_samples.push_back(rng.gamma(25.0, 0.25));
  CHECK(ks_distance_gamma(gamma_samples, 25.0, 0.25) < 0.03);
  CHECK(ks_distance_gamma(gamma_samples, 5.0, 0.05) > 0.1);
}
