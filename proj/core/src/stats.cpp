#include "excess/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace excess {

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty span");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double sample_sd(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty span");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  double h = p * (static_cast<double>(sorted.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double w = h - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

double quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  return quantile_sorted(x, p);
}

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double shape, double x) {
  if (x <= 0.0) return 0.0;
  if (shape <= 0.0) throw std::invalid_argument("gamma_p: shape <= 0");
  if (x < shape + 1.0) return gamma_p_series(shape, x);
  return 1.0 - gamma_q_cf(shape, x);
}

double gamma_cdf(double x, double shape, double rate) { return gamma_p(shape, rate * x); }

double ks_distance_gamma(std::vector<double> samples, double shape, double rate) {
  if (samples.empty()) throw std::invalid_argument("ks_distance_gamma: empty sample");
  std::sort(samples.begin(), samples.end());
  double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = gamma_cdf(samples[i], shape, rate);
    double lo = static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::fabs(f - lo), std::fabs(f - hi)));
  }
  return d;
}

namespace {

std::vector<std::vector<double>> split_in_half(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    std::size_t half = c.size() / 2;
    if (half == 0) continue;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.begin() + half, c.begin() + 2 * half);
  }
  return out;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  auto sub = split_in_half(chains);
  std::size_t m = sub.size();
  if (m < 2) return 1.0;
  std::size_t n = sub[0].size();
  if (n < 2) return 1.0;

  std::vector<double> chain_means(m), chain_vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    chain_means[j] = mean(sub[j]);
    chain_vars[j] = sample_variance(sub[j]);
  }
  double w = mean(chain_vars);
  double b = static_cast<double>(n) * sample_variance(chain_means);
  if (w <= 0.0) return 1.0;  // constant chains
  double var_plus = (static_cast<double>(n - 1) / n) * w + b / static_cast<double>(n);
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  auto sub = split_in_half(chains);
  std::size_t m = sub.size();
  if (m == 0) return 0.0;
  std::size_t n = sub[0].size();
  if (n < 4) return static_cast<double>(m * n);

  std::vector<double> chain_means(m), chain_vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    chain_means[j] = mean(sub[j]);
    chain_vars[j] = sample_variance(sub[j]);
  }
  double w = mean(chain_vars);
  double b_over_n = sample_variance(chain_means);
  double var_plus = (static_cast<double>(n - 1) / n) * w + b_over_n;
  if (var_plus <= 0.0) return static_cast<double>(m * n);

  // Autocovariance at lag k per chain, averaged; Geyer initial monotone.
  auto autocov = [&](std::size_t j, std::size_t k) {
    const auto& c = sub[j];
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) {
      s += (c[i] - chain_means[j]) * (c[i + k] - chain_means[j]);
    }
    return s / static_cast<double>(n);
  };

  double rho_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < n; k += 2) {
    double rho_k = 0.0, rho_k1 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      rho_k += autocov(j, k);
      rho_k1 += autocov(j, k + 1);
    }
    rho_k = 1.0 - (w - rho_k / static_cast<double>(m)) / var_plus;
    rho_k1 = 1.0 - (w - rho_k1 / static_cast<double>(m)) / var_plus;
    double pair = rho_k + rho_k1;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    prev_pair = pair;
    rho_sum += pair;
    if (k > 2000) break;
  }
  double tau = 1.0 + 2.0 * rho_sum;
  double ess = static_cast<double>(m * n) / tau;
  return std::min(ess, static_cast<double>(m * n));
}

std::string format_diagnostics(const std::vector<ScalarDiagnostic>& rows) {
  std::ostringstream os;
  os << "parameter,rhat,ess\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.1f\n", r.name.c_str(), r.rhat, r.ess);
    os << buf;
  }
  return os.str();
}

}  // namespace excess
