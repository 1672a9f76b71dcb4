#include "excess/gamma_uncertainty.hpp"

#include <cmath>
#include <vector>

#include "excess/errors.hpp"
#include "excess/stats.hpp"

namespace excess {

GammaMoment gamma_from_samples(std::span<const double> samples, const GammaOptions& opts) {
  if (samples.empty()) throw ValidationError("gamma_from_samples: empty sample");
  double m = mean(samples);
  if (!(m > 0.0)) throw ValidationError("gamma_from_samples: nonpositive sample mean");
  double v = sample_variance(samples);
  GammaMoment out;
  out.e_hat = m;
  out.tau_hat = (v < opts.epsilon * m * m) ? opts.tau_max : m * m / v;
  return out;
}

GammaMoment gamma_from_monthly(double eta_hat, double sigma_hat, const GammaOptions& opts,
                               Rng& rng) {
  if (sigma_hat < 0.0) throw ValidationError("gamma_from_monthly: negative sigma");
  if (sigma_hat == 0.0) {
    GammaMoment out;
    out.e_hat = std::exp(eta_hat);
    out.tau_hat = opts.tau_max;
    return out;
  }
  std::vector<double> samples(opts.samples);
  for (auto& s : samples) s = std::exp(rng.normal(eta_hat, sigma_hat));
  return gamma_from_samples(samples, opts);
}

std::array<GammaMoment, 12> gamma_from_annual(double eta_hat, double sigma_hat,
                                              const TemperatureModel& temp_model,
                                              const std::array<double, 12>& temps,
                                              const GammaOptions& opts, Rng& rng) {
  std::array<std::vector<double>, 12> monthly;
  for (auto& v : monthly) v.resize(opts.samples);
  for (int s = 0; s < opts.samples; ++s) {
    double annual = std::exp(sigma_hat > 0.0 ? rng.normal(eta_hat, sigma_hat) : eta_hat);
    TemperatureModel draw = temp_model;
    if (temp_model.beta_sd > 0.0) {
      draw.beta = rng.normal(temp_model.beta, temp_model.beta_sd);
    }
    auto shares = month_shares(draw, temps);
    for (int m = 0; m < 12; ++m) monthly[m][s] = annual * shares[m];
  }
  std::array<GammaMoment, 12> out;
  for (int m = 0; m < 12; ++m) out[m] = gamma_from_samples(monthly[m], opts);
  return out;
}

double gamma_fit_diagnostic(std::span<const double> samples, const GammaMoment& fitted) {
  std::vector<double> copy(samples.begin(), samples.end());
  return ks_distance_gamma(std::move(copy), fitted.tau_hat, fitted.rate());
}

const GammaMoment& ExpectedDistribution::at(const std::string& iso3, int t) const {
  auto it = by_country.find(iso3);
  if (it == by_country.end()) {
    throw ValidationError("no expected-number distribution for " + iso3);
  }
  return it->second[t - 1];
}

}  // namespace excess
