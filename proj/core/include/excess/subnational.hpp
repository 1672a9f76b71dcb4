#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excess/mcmc.hpp"
#include "excess/rng.hpp"
#include "excess/types.hpp"

namespace excess {

/// Region-level counts with month-varying availability. Historic months
/// carry the national total; pandemic months do not.
struct SubnationalPanel {
  std::string iso3;
  std::vector<std::string> region_ids;

  struct MonthRow {
    int t = 0;  // historic months indexed 1..M; pandemic months 1..24
    int year = 0;   // calendar labels, when known
    int month = 0;
    long long national_total = 0;
    bool national_observed = false;
    std::vector<long long> counts;   // per region
    std::vector<bool> available;     // availability set K_t
  };
  std::vector<MonthRow> historic;
  std::vector<MonthRow> pandemic;

  int n_regions() const { return static_cast<int>(region_ids.size()); }
};

/// Posterior over the region share parameters: log(p_k / p_rest) =
/// alpha_k + e_t with the unobserved remainder as reference category.
struct ShareModelDraws {
  int n_draws = 0;
  std::vector<std::string> region_ids;
  Eigen::MatrixXd alpha;     // n_draws x K
  Eigen::VectorXd sigma_e;   // n_draws
  std::vector<ScalarDiagnostic> diagnostics;

  /// Full category probabilities (K regions + remainder) for draw s with
  /// month effect e.
  std::vector<double> probabilities(int s, double e) const;
};

struct ShareModelOptions {
  McmcConfig mcmc{.chains = 4, .warmup = 2000, .keep = 2500};
  double fixed_effect_sd = 31.6227766016838;
  double pc_u = 1.0;
  double pc_alpha = 0.01;
  bool check_diagnostics = true;
  /// Minimum historic rows with national totals; the annual-aggregate
  /// variant fits on a handful of yearly rows.
  int min_historic_rows = 12;
};

/// Fits the collapsed-multinomial share model on the historic panel.
/// Cells absent in month t are lumped into the remainder category.
/// Throws ValidationError if a region is never observed historically.
ShareModelDraws fit_share_model(const SubnationalPanel& panel, const ShareModelOptions& options,
                                std::uint64_t seed);

struct NationalPrediction {
  /// y_draws(s, row) aligned with the pandemic rows passed in.
  Eigen::MatrixXd y_draws;
  /// p_t per draw (observed share mass), for diagnostics.
  Eigen::MatrixXd p_draws;
};

/// Posterior draws of the national total per pandemic month:
/// Y_total - Y_obs | Y_obs, p ~ NegBin(Y_obs, 1 - p) with fresh month
/// effects e_t ~ N(0, sigma_e). Errors if a month has zero observed
/// deaths while p < 1 (improper posterior; use the covariate model).
NationalPrediction predict_national(const ShareModelDraws& draws,
                                    const std::vector<SubnationalPanel::MonthRow>& pandemic_rows,
                                    int s_use, Rng& rng);

/// Gaussian AR1 fit on log(Y_t/E_t) estimates with known per-month
/// observation variances; posterior predictive for the next `horizon`
/// months. Used for trailing months where only one region reports.
struct Ar1Options {
  McmcConfig mcmc{.chains = 4, .warmup = 1500, .keep = 2000};
  double pc_u = 1.0;
  double pc_alpha = 0.01;
  double mean_prior_sd = 10.0;
  bool check_diagnostics = true;
};

struct Ar1TailDraws {
  Eigen::MatrixXd ratio_draws;  // n_draws x horizon, log-ratio scale
  Eigen::VectorXd ar_coefficient;
  Eigen::VectorXd marginal_sd;
  Eigen::VectorXd level;
  std::vector<ScalarDiagnostic> diagnostics;
};

Ar1TailDraws ar1_tail_extrapolate(const std::vector<double>& log_ratio,
                                  const std::vector<double>& obs_variance, int horizon,
                                  const Ar1Options& options, std::uint64_t seed);

/// Proposal/target configuration for the constrained-count sampler.
struct ConstrainedCountOptions {
  long long iterations = 200000;
  long long burnin = 20000;
  int thin = 10;
  int k_max = 6;  // months moved per proposal: uniform on 1..min(k_max, T/2)
  /// Step-size mixture for J (amount moved per selected month).
  std::vector<std::pair<long long, double>> j_mixture = {{1, 0.90}, {5, 0.08}, {25, 0.02}};
  /// Pilot-tunes a common J multiplier into the acceptance band before
  /// burn-in, then freezes it. Off for fixed-proposal tests.
  bool auto_tune_j = true;
  double band_lo = 0.3;
  double band_hi = 0.6;
};

struct ConstrainedCountResult {
  Eigen::MatrixXd draws;  // kept x T, each row sums to the fixed total
  double acceptance_rate = 0.0;
  std::vector<double> acceptance_trace;  // cumulative rate over windows
};

/// Latent fraction model for the constrained sampler: logit(p_t) =
/// alpha + eps_t with eps_t ~ N(0, sigma^2) sampled as within-chain
/// latents (slice updates conditioned on z_t and Y_t). The hyper supplier
/// returns (alpha, sigma) draws, e.g. from a share-model posterior.
struct LatentFractionModel {
  std::function<std::pair<double, double>(long long sweep, Rng&)> hyper;
};

/// Metropolis sampler over integer T-vectors with a fixed total. Target:
/// product of Binomial(z_t | Y_t, p_t) times Multinomial(Y | total,
/// anchors). The fractions p_t come either from p_supplier (fixed or
/// resampled plug-in values) or, when `latent` is given, from the latent
/// logit-normal model. Pass an empty z for the anchors-only target.
ConstrainedCountResult constrained_count_mcmc(
    long long total, const std::vector<long long>& z, const std::vector<double>& anchors,
    const std::function<std::vector<double>(long long sweep, Rng&)>& p_supplier,
    const std::vector<long long>& start, const ConstrainedCountOptions& options,
    std::uint64_t seed, const LatentFractionModel* latent = nullptr);

/// Annual-aggregate variant of the panel: historic rows are grouped
/// into consecutive blocks of 12 months; a region contributes to a year
/// only when it is available in every month of that block. Used when the
/// historic national series is annual-only, with the fitted shares then
/// applied to monthly pandemic rows.
SubnationalPanel aggregate_historic_to_annual(const SubnationalPanel& panel,
                                              const std::map<int, long long>& annual_totals);

/// Trailing months where the availability set collapses to a single
/// region (the tail-extrapolation routing rule). Returns the first tail
/// index into `pandemic_rows`, or the row count when there is no tail.
std::size_t single_region_tail_start(const std::vector<SubnationalPanel::MonthRow>& pandemic_rows);

}  // namespace excess
