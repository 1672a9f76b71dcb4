#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace excess {

/// Stable 64-bit FNV-1a hash; used for deriving child RNG streams and for
/// stage-cache fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic random stream. Child streams are derived by hashing
/// (master seed, stage label, key) so per-country work is reproducible
/// independently of scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static Rng stream(std::uint64_t master_seed, std::string_view stage, std::string_view key = {});

  std::uint64_t next_u64() { return gen_(); }
  /// Uniform in [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(gen_);
  }
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(gen_);
  }
  long long poisson(double mean) { return std::poisson_distribution<long long>(mean)(gen_); }
  long long binomial(long long n, double p);
  /// Integer in [0, n).
  long long uniform_int(long long n) {
    return std::uniform_int_distribution<long long>(0, n - 1)(gen_);
  }

  /// Negative binomial with mean mu and overdispersion tau:
  /// var = mu (1 + mu/tau). Sampled as the gamma-Poisson mixture with
  /// rate ~ Gamma(tau, tau/mu), matching the model derivation; works for
  /// non-integer tau.
  long long neg_binomial_mean_disp(double mu, double tau);

  /// Classic NegBin(r, p): number of failures before the r-th success,
  /// mean r(1-p)/p. Accepts non-integer r via the gamma-Poisson mixture.
  long long neg_binomial_count(double r, double p);

  std::vector<long long> multinomial(long long n, std::span<const double> probs);

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace excess
