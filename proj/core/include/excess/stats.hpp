#pragma once

#include <span>
#include <string>
#include <vector>

namespace excess {

double mean(std::span<const double> x);

/// Unbiased sample variance (n-1 denominator). This is the variance
/// convention used throughout: covariate standardization and the gamma
/// moment matching both rely on it.
double sample_variance(std::span<const double> x);
double sample_sd(std::span<const double> x);

/// Type-7 (linear interpolation) quantile of unsorted data, p in [0,1].
double quantile(std::vector<double> x, double p);
/// Same, for data already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double p);

double log_sum_exp(std::span<const double> x);

/// Standard normal CDF.
double normal_cdf(double z);

/// Regularized lower incomplete gamma P(shape, x); gamma CDF at x for
/// rate 1. Continued-fraction / series implementation.
double gamma_p(double shape, double x);
double gamma_cdf(double x, double shape, double rate);

/// Kolmogorov-Smirnov distance between a sample and a gamma(shape, rate).
double ks_distance_gamma(std::vector<double> samples, double shape, double rate);

/// Split-Rhat over chains of equal length (Gelman et al.); chains are
/// split in half before computing between/within variances.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Effective sample size across chains, Geyer initial-monotone estimate
/// on split chains.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

struct ScalarDiagnostic {
  std::string name;
  double rhat;
  double ess;
};

std::string format_diagnostics(const std::vector<ScalarDiagnostic>& rows);

}  // namespace excess
