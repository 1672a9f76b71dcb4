#include "excess/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "excess/errors.hpp"

namespace excess {

double pc_prior_rate(double u, double alpha) { return -std::log(alpha) / u; }

double pc_prior_log_density(double sigma, double rate) {
  if (sigma <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(rate) - rate * sigma;
}

void ScalarStepAdapter::record(double accept_prob, bool adapting) {
  if (!adapting) return;
  acc_sum_ += accept_prob;
  if (++count_ == kBatchSize) {
    ++batch_;
    double rate = acc_sum_ / kBatchSize;
    double delta = std::min(0.25, 2.0 / std::sqrt(static_cast<double>(batch_)));
    log_step_ += (rate > target_ ? delta : -delta);
    log_step_ = std::clamp(log_step_, -12.0, 6.0);
    count_ = 0;
    acc_sum_ = 0.0;
  }
}

BlockAdapter::BlockAdapter(int dim, double init_scale, double target)
    : dim_(dim),
      log_scale_(std::log(init_scale)),
      target_(target),
      mean_(Eigen::VectorXd::Zero(dim)),
      cov_(Eigen::MatrixXd::Identity(dim, dim)),
      chol_(Eigen::MatrixXd::Identity(dim, dim)) {}

void BlockAdapter::set_covariance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& center) {
  cov_ = cov;
  if (center.size() == dim_) mean_ = center;
  n_obs_ = 20LL * dim_;  // pseudo-observations backing the seed
  refresh_cholesky();
}

Eigen::VectorXd BlockAdapter::propose(const Eigen::VectorXd& current, Rng& rng) {
  Eigen::VectorXd z(dim_);
  for (int i = 0; i < dim_; ++i) z(i) = rng.normal();
  return current + std::exp(log_scale_) * (chol_ * z);
}

void BlockAdapter::record(double accept_prob, const Eigen::VectorXd& state, bool adapting) {
  if (!adapting) return;
  // running moments
  ++n_obs_;
  Eigen::VectorXd delta = state - mean_;
  mean_ += delta / static_cast<double>(n_obs_);
  if (n_obs_ > 1) {
    double w = 1.0 / static_cast<double>(n_obs_ - 1);
    cov_ = cov_ * (1.0 - w) + w * (delta * (state - mean_).transpose());
  }
  if (++since_refresh_ >= 200 && n_obs_ >= 3LL * dim_) {
    refresh_cholesky();
    since_refresh_ = 0;
  }

  acc_sum_ += accept_prob;
  if (++count_ == kBatchSize) {
    ++batch_;
    double rate = acc_sum_ / kBatchSize;
    double delta_s = std::min(0.25, 2.0 / std::sqrt(static_cast<double>(batch_)));
    log_scale_ += (rate > target_ ? delta_s : -delta_s);
    log_scale_ = std::clamp(log_scale_, -12.0, 4.0);
    count_ = 0;
    acc_sum_ = 0.0;
  }
}

void BlockAdapter::refresh_cholesky() {
  // 2.38^2/d scaling with a diagonal floor
  Eigen::MatrixXd prop =
      (5.6644 / dim_) * cov_ + 1e-9 * Eigen::MatrixXd::Identity(dim_, dim_);
  Eigen::LLT<Eigen::MatrixXd> llt(prop);
  if (llt.info() == Eigen::Success) chol_ = llt.matrixL();
}

TraceSet::TraceSet(std::vector<std::string> names, int chains) : names_(std::move(names)) {
  traces_.resize(names_.size());
  for (auto& t : traces_) t.resize(chains);
}

void TraceSet::record(int chain, const std::vector<double>& values) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    traces_[i][chain].push_back(values[i]);
  }
}

std::vector<ScalarDiagnostic> TraceSet::diagnostics() const {
  std::vector<ScalarDiagnostic> out;
  out.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.push_back({names_[i], split_rhat(traces_[i]), effective_sample_size(traces_[i])});
  }
  return out;
}

void TraceSet::check(double rhat_max, double ess_min, const std::string& context) const {
  auto diag = diagnostics();
  bool ok = true;
  for (const auto& d : diag) {
    if (d.rhat > rhat_max || d.ess < ess_min) ok = false;
  }
  if (!ok) {
    throw DiagnosticsError(context + ": MCMC convergence diagnostics failed", format_diagnostics(diag));
  }
}

}  // namespace excess
