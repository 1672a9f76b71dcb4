#include <cmath>

#include "doctest.h"
#include "excess/errors.hpp"
#include "excess/mcmc.hpp"
#include "excess/stats.hpp"

using namespace excess;

TEST_CASE("block adapter samples a correlated gaussian correctly") {
  // target: N(0, Sigma) with strong correlation
  Eigen::MatrixXd prec(2, 2);
  prec << 1.0, -0.9, -0.9, 1.0;
  prec = prec.inverse().eval();  // Sigma with corr 0.9 -> precision
  auto log_target = [&](const Eigen::VectorXd& x) { return -0.5 * x.dot(prec * x); };

  Rng rng(13);
  BlockAdapter adapter(2, 0.5);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  double lp = log_target(x);
  std::vector<double> xs, ys, prods;
  int warmup = 4000, keep = 20000;
  for (int it = 0; it < warmup + keep; ++it) {
    Eigen::VectorXd prop = adapter.propose(x, rng);
    double lp_new = log_target(prop);
    double alpha = std::min(1.0, std::exp(lp_new - lp));
    if (rng.uniform() < alpha) {
      x = prop;
      lp = lp_new;
    }
    adapter.record(alpha, x, it < warmup);
    if (it >= warmup) {
      xs.push_back(x(0));
      ys.push_back(x(1));
      prods.push_back(x(0) * x(1));
    }
  }
  // Sigma here has unit-ish marginals with covariance 0.9 scaled by the
  // inverse construction; compare against the exact Sigma
  Eigen::MatrixXd sigma = prec.inverse();
  CHECK(mean(xs) == doctest::Approx(0.0).epsilon(0.1));
  CHECK(sample_variance(xs) == doctest::Approx(sigma(0, 0)).epsilon(0.15));
  CHECK(sample_variance(ys) == doctest::Approx(sigma(1, 1)).epsilon(0.15));
  CHECK(mean(prods) == doctest::Approx(sigma(0, 1)).epsilon(0.2));
}

TEST_CASE("scalar adapter settles near the target acceptance") {
  // sample N(0,1) with a scalar random walk
  Rng rng(21);
  ScalarStepAdapter adapter(5.0, 0.44);
  double x = 0.0;
  int accepted = 0, counted = 0;
  for (int it = 0; it < 20000; ++it) {
    double prop = x + adapter.step() * rng.normal();
    double alpha = std::min(1.0, std::exp(0.5 * (x * x - prop * prop)));
    bool acc = rng.uniform() < alpha;
    if (acc) x = prop;
    adapter.record(alpha, it < 10000);
    if (it >= 10000) {
      accepted += acc ? 1 : 0;
      ++counted;
    }
  }
  double rate = static_cast<double>(accepted) / counted;
  CHECK(rate > 0.25);
  CHECK(rate < 0.65);
}

TEST_CASE("trace set flags divergent chains") {
  TraceSet traces({"x"}, 2);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    traces.record(0, {rng.normal(0.0, 1.0)});
    traces.record(1, {rng.normal(3.0, 1.0)});
  }
  CHECK_THROWS_AS(traces.check(1.02, 400.0, "test"), DiagnosticsError);
  auto diag = traces.diagnostics();
  REQUIRE(diag.size() == 1);
  CHECK(diag[0].rhat > 1.02);
}
