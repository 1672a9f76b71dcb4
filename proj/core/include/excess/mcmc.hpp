#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "excess/rng.hpp"
#include "excess/stats.hpp"

namespace excess {

struct McmcConfig {
  int chains = 4;
  int warmup = 5000;
  int keep = 5000;
  double rhat_max = 1.02;
  double ess_min = 400.0;
  /// Thin factor applied to kept draws (1 = keep all).
  int thin = 1;
};

/// PC prior rate for Pr(sigma > u) = alpha: an exponential tail on the
/// standard deviation with rate -ln(alpha)/u.
double pc_prior_rate(double u, double alpha);

/// log density of the PC (exponential) prior on sigma.
double pc_prior_log_density(double sigma, double rate);

/// Scalar random-walk step with diminishing Robbins-Monro adaptation
/// toward a target acceptance rate.
class ScalarStepAdapter {
 public:
  explicit ScalarStepAdapter(double init_step = 0.5, double target = 0.44)
      : log_step_(std::log(init_step)), target_(target) {}

  double step() const { return std::exp(log_step_); }
  void record(double accept_prob, bool adapting);

 private:
  double log_step_;
  double target_;
  int count_ = 0;
  double acc_sum_ = 0.0;
  int batch_ = 0;
  static constexpr int kBatchSize = 50;
};

/// Multivariate random-walk proposal with Haario-style running-covariance
/// adaptation and a global scale tuned toward 0.234 acceptance. The
/// covariance and scale freeze when `adapting` turns false.
class BlockAdapter {
 public:
  explicit BlockAdapter(int dim, double init_scale = 0.1, double target = 0.234);

  /// Seeds the running covariance (e.g. with an inverse Fisher
  /// information) so proposals start aligned with the posterior ridge.
  /// The seed carries pseudo-observation weight so early samples cannot
  /// wipe it out before the chain starts moving.
  void set_covariance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& center = {});

  Eigen::VectorXd propose(const Eigen::VectorXd& current, Rng& rng);
  void record(double accept_prob, const Eigen::VectorXd& state, bool adapting);

 private:
  void refresh_cholesky();

  int dim_;
  double log_scale_;
  double target_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  long long n_obs_ = 0;
  int since_refresh_ = 0;
  int count_ = 0;
  double acc_sum_ = 0.0;
  int batch_ = 0;
  static constexpr int kBatchSize = 50;
};

/// One-dimensional slice sampler (stepping-out then shrinkage, Neal 2003).
/// Returns a new point distributed per exp(log_f); robust to scale
/// mismatch, so it needs no step adaptation.
template <typename LogF>
double slice_sample_1d(LogF&& log_f, double x0, double width, Rng& rng, int max_doublings = 30) {
  double f0 = log_f(x0);
  double level = f0 + std::log(rng.uniform() + 1e-300);
  double lo = x0 - width * rng.uniform();
  double hi = lo + width;
  for (int i = 0; i < max_doublings && log_f(lo) > level; ++i) lo -= width;
  for (int i = 0; i < max_doublings && log_f(hi) > level; ++i) hi += width;
  for (int i = 0; i < 100; ++i) {
    double x = lo + (hi - lo) * rng.uniform();
    if (log_f(x) > level) return x;
    if (x < x0) {
      lo = x;
    } else {
      hi = x;
    }
  }
  return x0;
}

/// Per-chain scalar traces for convergence checks.
class TraceSet {
 public:
  TraceSet(std::vector<std::string> names, int chains);
  void record(int chain, const std::vector<double>& values);
  /// Split-Rhat and ESS for every tracked scalar.
  std::vector<ScalarDiagnostic> diagnostics() const;
  /// Throws DiagnosticsError if any scalar violates the thresholds.
  void check(double rhat_max, double ess_min, const std::string& context) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  // traces[name_idx][chain] = vector of draws
  std::vector<std::vector<std::vector<double>>> traces_;
};

}  // namespace excess
