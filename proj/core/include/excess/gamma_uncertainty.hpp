#pragma once

#include <array>
#include <map>
#include <span>
#include <string>

#include "excess/rng.hpp"
#include "excess/seasonal.hpp"
#include "excess/types.hpp"

namespace excess {

/// Gamma approximation of one expected-number distribution:
/// E ~ Gamma(shape tau_hat, rate tau_hat / e_hat), so mean e_hat and
/// variance e_hat^2 / tau_hat.
struct GammaMoment {
  double e_hat = 0.0;
  double tau_hat = 0.0;
  double rate() const { return tau_hat / e_hat; }
};

struct GammaOptions {
  int samples = 10000;
  double epsilon = 1e-12;  // variance floor relative to mean^2
  double tau_max = 1e8;    // shape for (near-)degenerate distributions
};

/// Method-of-moments gamma fit: e_hat = sample mean, tau_hat =
/// mean^2 / variance using the unbiased (n-1) variance. Near-zero
/// variance maps to tau_max.
GammaMoment gamma_from_samples(std::span<const double> samples, const GammaOptions& opts = {});

/// Lognormal sampling route for countries with monthly history: draw
/// exp(Normal(eta, sigma)) and moment match.
GammaMoment gamma_from_monthly(double eta_hat, double sigma_hat, const GammaOptions& opts,
                               Rng& rng);

/// Annual route: per sample, draw the annual expected count and a beta
/// from its posterior normal, split by the temperature month shares, and
/// moment-match each month separately. Sample s is shared across months
/// so monthly values sum to the annual value per sample.
std::array<GammaMoment, 12> gamma_from_annual(double eta_hat, double sigma_hat,
                                              const TemperatureModel& temp_model,
                                              const std::array<double, 12>& temps,
                                              const GammaOptions& opts, Rng& rng);

/// Kolmogorov-Smirnov distance between samples and their fitted gamma.
double gamma_fit_diagnostic(std::span<const double> samples, const GammaMoment& fitted);

/// Per-country gamma summaries for every pandemic month.
struct ExpectedDistribution {
  std::map<std::string, std::array<GammaMoment, kPandemicMonths>> by_country;

  const GammaMoment& at(const std::string& iso3, int t) const;
};

}  // namespace excess
