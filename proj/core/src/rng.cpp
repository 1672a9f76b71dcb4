#include "excess/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace excess {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t master_seed, std::string_view stage, std::string_view key) {
  std::uint64_t h = fnv1a64(stage, master_seed ^ 0x5851f42d4c957f2dull);
  if (!key.empty()) h = fnv1a64(key, h);
  return Rng(splitmix64(h));
}

long long Rng::binomial(long long n, double p) {
  if (n < 0) throw std::invalid_argument("binomial: n < 0");
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<long long>(n, p)(gen_);
}

long long Rng::neg_binomial_mean_disp(double mu, double tau) {
  if (mu <= 0.0) return 0;
  if (!(tau > 0.0)) throw std::invalid_argument("neg_binomial_mean_disp: tau <= 0");
  // tau above ~1e7 is numerically Poisson; skip the gamma stage.
  if (tau > 1e7) return poisson(mu);
  double rate = gamma(tau, tau / mu);
  return poisson(rate);
}

long long Rng::neg_binomial_count(double r, double p) {
  if (!(r > 0.0)) throw std::invalid_argument("neg_binomial_count: r <= 0");
  if (p >= 1.0) return 0;
  if (p <= 0.0) throw std::invalid_argument("neg_binomial_count: p <= 0");
  // failures ~ Poisson(lambda), lambda ~ Gamma(r, p/(1-p))
  double lambda = gamma(r, p / (1.0 - p));
  return poisson(lambda);
}

std::vector<long long> Rng::multinomial(long long n, std::span<const double> probs) {
  std::vector<long long> out(probs.size(), 0);
  double remaining_p = 0.0;
  for (double p : probs) remaining_p += p;
  long long remaining_n = n;
  for (std::size_t k = 0; k + 1 < probs.size() && remaining_n > 0; ++k) {
    double p = probs[k] / remaining_p;
    if (p > 1.0) p = 1.0;
    out[k] = binomial(remaining_n, p);
    remaining_n -= out[k];
    remaining_p -= probs[k];
    if (remaining_p <= 0.0) break;
  }
  if (!probs.empty()) out.back() += remaining_n;
  return out;
}

}  // namespace excess
