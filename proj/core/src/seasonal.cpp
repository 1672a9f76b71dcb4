#include "excess/seasonal.hpp"

#include <cmath>
#include <limits>

#include "excess/errors.hpp"

namespace excess {

namespace {

// Eliminated-Poisson marginal log-likelihood (lambda integrated out under
// the 1/lambda prior): sum over country-years of
//   sum_m y_m z_m beta - y_+ log sum_m exp(z_m beta)
// over active cells, dropping beta-free constants.
double marginal_log_lik(const std::vector<CountryYearCells>& data, double beta) {
  double ll = 0.0;
  for (const auto& cy : data) {
    double y_total = 0.0, zy = 0.0;
    double max_e = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < 12; ++m) {
      if (!cy.active[m]) continue;
      max_e = std::max(max_e, beta * cy.temperature[m]);
    }
    double g_sum = 0.0;
    for (int m = 0; m < 12; ++m) {
      if (!cy.active[m]) continue;
      y_total += static_cast<double>(cy.count[m]);
      zy += static_cast<double>(cy.count[m]) * cy.temperature[m];
      g_sum += std::exp(beta * cy.temperature[m] - max_e);
    }
    if (y_total <= 0.0) continue;
    ll += beta * zy - y_total * (std::log(g_sum) + max_e);
  }
  return ll;
}

// First and second derivatives of the marginal log-likelihood.
void marginal_derivatives(const std::vector<CountryYearCells>& data, double beta, double* d1,
                          double* d2) {
  *d1 = 0.0;
  *d2 = 0.0;
  for (const auto& cy : data) {
    double y_total = 0.0, zy = 0.0;
    double max_e = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < 12; ++m) {
      if (cy.active[m]) max_e = std::max(max_e, beta * cy.temperature[m]);
    }
    double g = 0.0, gz = 0.0, gzz = 0.0;
    for (int m = 0; m < 12; ++m) {
      if (!cy.active[m]) continue;
      double e = std::exp(beta * cy.temperature[m] - max_e);
      g += e;
      gz += e * cy.temperature[m];
      gzz += e * cy.temperature[m] * cy.temperature[m];
      y_total += static_cast<double>(cy.count[m]);
      zy += static_cast<double>(cy.count[m]) * cy.temperature[m];
    }
    if (y_total <= 0.0 || g <= 0.0) continue;
    double mean_z = gz / g;
    double var_z = gzz / g - mean_z * mean_z;
    *d1 += zy - y_total * mean_z;
    *d2 -= y_total * var_z;
  }
}

}  // namespace

TemperatureModel fit_temperature_model(const std::vector<CountryYearCells>& data) {
  if (data.empty()) throw ValidationError("temperature model: no country-years supplied");

  // identifiability: temperature must vary within at least one
  // country-year that has positive counts
  double d1 = 0.0, d2 = 0.0;
  marginal_derivatives(data, 0.0, &d1, &d2);
  if (std::abs(d2) < 1e-12) {
    throw ValidationError(
        "temperature model unidentifiable: temperatures constant within every country-year");
  }

  double beta = 0.0;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    marginal_derivatives(data, beta, &d1, &d2);
    if (std::abs(d2) < 1e-300) break;
    double step = -d1 / d2;
    // convergence measured in beta units (Newton is quadratic here)
    if (std::abs(step) < 1e-11 * (1.0 + std::abs(beta))) {
      converged = true;
      break;
    }
    double base = marginal_log_lik(data, beta);
    double scale = 1.0;
    double cand = beta + step;
    for (int half = 0; half < 60; ++half) {
      if (marginal_log_lik(data, cand) >= base - 1e-12 * (1.0 + std::abs(base))) break;
      scale *= 0.5;
      cand = beta + scale * step;
    }
    if (std::abs(cand - beta) < 1e-13 * (1.0 + std::abs(beta))) {
      converged = true;  // at the numerical floor of the likelihood
      beta = cand;
      break;
    }
    beta = cand;
  }
  marginal_derivatives(data, beta, &d1, &d2);
  if (!converged && std::abs(d1 / d2) > 1e-7) {
    throw ConvergenceError("temperature model did not converge", std::abs(d1));
  }

  TemperatureModel model;
  model.beta = beta;
  model.beta_sd = 1.0 / std::sqrt(-d2);
  model.country_years = static_cast<int>(data.size());
  return model;
}

std::array<double, 12> month_shares(const TemperatureModel& model,
                                    const std::array<double, 12>& temps) {
  std::array<double, 12> out{};
  double max_e = -std::numeric_limits<double>::infinity();
  for (double z : temps) max_e = std::max(max_e, model.beta * z);
  double total = 0.0;
  for (int m = 0; m < 12; ++m) {
    out[m] = std::exp(model.beta * temps[m] - max_e);
    total += out[m];
  }
  for (auto& p : out) p /= total;
  return out;
}

PoissonTrickReport verify_poisson_trick(const std::vector<CountryYearCells>& data) {
  PoissonTrickReport report;

  // Route A: eliminated-Poisson Newton solve.
  double d1 = 0.0, d2 = 0.0;
  marginal_derivatives(data, 0.0, &d1, &d2);
  if (std::abs(d2) < 1e-12) {
    report.degenerate = true;
    return report;
  }
  TemperatureModel a = fit_temperature_model(data);
  report.beta_eliminated = a.beta;

  // Route B: direct multinomial likelihood, independent golden-section
  // optimizer. The multinomial normalizer and cell probabilities are
  // computed explicitly rather than through the marginal form; long
  // double keeps the golden-section positional floor below 1e-9.
  auto multinomial_ll = [&](long double beta) {
    long double ll = 0.0L;
    for (const auto& cy : data) {
      long double denom = 0.0L;
      long double y_total = 0.0L;
      for (int m = 0; m < 12; ++m) {
        if (cy.active[m]) {
          denom += expl(beta * static_cast<long double>(cy.temperature[m]));
          y_total += static_cast<long double>(cy.count[m]);
        }
      }
      if (y_total <= 0.0L) continue;
      for (int m = 0; m < 12; ++m) {
        if (!cy.active[m] || cy.count[m] == 0) continue;
        long double p = expl(beta * static_cast<long double>(cy.temperature[m])) / denom;
        ll += static_cast<long double>(cy.count[m]) * logl(p);
      }
    }
    return ll;
  };

  long double lo = report.beta_eliminated - 8.0L, hi = report.beta_eliminated + 8.0L;
  const long double gr = (sqrtl(5.0L) - 1.0L) / 2.0L;
  long double c1 = hi - gr * (hi - lo), c2 = lo + gr * (hi - lo);
  long double f1 = multinomial_ll(c1), f2 = multinomial_ll(c2);
  for (int it = 0; it < 300 && (hi - lo) > 1e-13L; ++it) {
    if (f1 < f2) {
      lo = c1;
      c1 = c2;
      f1 = f2;
      c2 = lo + gr * (hi - lo);
      f2 = multinomial_ll(c2);
    } else {
      hi = c2;
      c2 = c1;
      f2 = f1;
      c1 = hi - gr * (hi - lo);
      f1 = multinomial_ll(c1);
    }
  }
  report.beta_direct = static_cast<double>(0.5L * (lo + hi));
  report.abs_difference = std::abs(report.beta_direct - report.beta_eliminated);
  return report;
}

}  // namespace excess
