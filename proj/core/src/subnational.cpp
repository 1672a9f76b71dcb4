#include "excess/subnational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "excess/errors.hpp"

namespace excess {

std::vector<double> ShareModelDraws::probabilities(int s, double e) const {
  int k = static_cast<int>(alpha.cols());
  std::vector<double> out(k + 1);
  double denom = 1.0;
  for (int j = 0; j < k; ++j) {
    out[j] = std::exp(alpha(s, j) + e);
    denom += out[j];
  }
  for (int j = 0; j < k; ++j) out[j] /= denom;
  out[k] = 1.0 / denom;
  return out;
}

namespace {

struct ShareCells {
  // per historic month: observed region indices/counts plus the lumped
  // remainder (national minus observed)
  struct Month {
    std::vector<int> regions;
    std::vector<double> counts;
    double remainder = 0.0;
  };
  std::vector<Month> months;
};

ShareCells prepare_share_cells(const SubnationalPanel& panel, int min_rows) {
  ShareCells cells;
  int k = panel.n_regions();
  std::vector<bool> seen(k, false);
  for (const auto& row : panel.historic) {
    if (!row.national_observed) continue;
    ShareCells::Month m;
    long long observed_sum = 0;
    for (int j = 0; j < k; ++j) {
      if (!row.available[j]) continue;
      if (row.counts[j] < 0) {
        throw ValidationError(panel.iso3 + ": negative subnational count");
      }
      m.regions.push_back(j);
      m.counts.push_back(static_cast<double>(row.counts[j]));
      observed_sum += row.counts[j];
      seen[j] = true;
    }
    if (observed_sum > row.national_total) {
      throw ValidationError(panel.iso3 + ": observed regional counts exceed the national total in month " +
                            std::to_string(row.t));
    }
    m.remainder = static_cast<double>(row.national_total - observed_sum);
    if (!m.regions.empty()) cells.months.push_back(std::move(m));
  }
  if (static_cast<int>(cells.months.size()) < min_rows) {
    throw ValidationError(panel.iso3 + ": need >= " + std::to_string(min_rows) +
                          " historic rows with national totals, have " +
                          std::to_string(cells.months.size()));
  }
  for (int j = 0; j < k; ++j) {
    if (!seen[j]) {
      throw ValidationError(panel.iso3 + ": region " + panel.region_ids[j] +
                            " is never observed in the historic panel");
    }
  }
  return cells;
}

// Collapsed multinomial log-likelihood for one month given alpha and the
// month effect. Unobserved regions merge into the remainder cell.
double share_month_ll(const ShareCells::Month& m, const Eigen::VectorXd& alpha, double e) {
  int k = static_cast<int>(alpha.size());
  double denom = 1.0;
  std::vector<double> w(k);
  for (int j = 0; j < k; ++j) {
    w[j] = std::exp(alpha(j) + e);
    denom += w[j];
  }
  double lump = 1.0;  // remainder category weight
  for (int j = 0; j < k; ++j) lump += w[j];
  for (int j : m.regions) lump -= w[j];

  double ll = 0.0;
  for (std::size_t i = 0; i < m.regions.size(); ++i) {
    ll += m.counts[i] * (std::log(w[m.regions[i]]) - std::log(denom));
  }
  ll += m.remainder * (std::log(lump) - std::log(denom));
  return ll;
}

}  // namespace

ShareModelDraws fit_share_model(const SubnationalPanel& panel, const ShareModelOptions& options,
                                std::uint64_t seed) {
  ShareCells cells = prepare_share_cells(panel, options.min_historic_rows);
  const int k = panel.n_regions();
  const int n_months = static_cast<int>(cells.months.size());
  const McmcConfig& mc = options.mcmc;
  const double pc_rate = pc_prior_rate(options.pc_u, options.pc_alpha);
  const double fixed_prec = 1.0 / (options.fixed_effect_sd * options.fixed_effect_sd);

  const int kept_per_chain = mc.keep / mc.thin;
  const int total_draws = mc.chains * kept_per_chain;

  ShareModelDraws out;
  out.n_draws = total_draws;
  out.region_ids = panel.region_ids;
  out.alpha.resize(total_draws, k);
  out.sigma_e.resize(total_draws);

  std::vector<std::string> trace_names;
  for (const auto& r : panel.region_ids) trace_names.push_back("alpha[" + r + "]");
  trace_names.push_back("sigma_e");
  TraceSet traces(trace_names, mc.chains);

  // Empirical logit start and a pooled-multinomial Fisher preconditioner
  // for the alpha block.
  Eigen::VectorXd alpha_start(k);
  Eigen::MatrixXd alpha_precond(k, k);
  {
    std::vector<double> pooled(k, 0.5);
    double pooled_rest = 0.5;
    double total = 1.0;
    for (const auto& m : cells.months) {
      for (std::size_t i = 0; i < m.regions.size(); ++i) pooled[m.regions[i]] += m.counts[i];
      pooled_rest += m.remainder;
      for (std::size_t i = 0; i < m.regions.size(); ++i) total += m.counts[i];
      total += m.remainder;
    }
    Eigen::VectorXd p_hat(k);
    for (int j = 0; j < k; ++j) {
      alpha_start(j) = std::log(pooled[j] / pooled_rest);
      p_hat(j) = pooled[j] / total;
    }
    Eigen::MatrixXd info = total * (Eigen::MatrixXd(p_hat.asDiagonal()) - p_hat * p_hat.transpose()) +
                           1e-6 * Eigen::MatrixXd::Identity(k, k);
    alpha_precond = info.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  }

  for (int chain = 0; chain < mc.chains; ++chain) {
    Rng rng = Rng::stream(seed, "share_model", panel.iso3 + "/chain" + std::to_string(chain));

    Eigen::VectorXd alpha = alpha_start;
    for (int j = 0; j < k; ++j) {
      alpha(j) += rng.normal(0.0, 2.0 * std::sqrt(std::max(alpha_precond(j, j), 1e-12)));
    }
    Eigen::VectorXd e(n_months);
    for (int t = 0; t < n_months; ++t) e(t) = rng.normal(0.0, 0.1);
    double sigma_e = 0.3 * std::exp(rng.normal(0.0, 0.3));

    std::vector<double> month_ll(n_months);
    for (int t = 0; t < n_months; ++t) month_ll[t] = share_month_ll(cells.months[t], alpha, e(t));

    BlockAdapter alpha_adapter(k, 1.0);
    alpha_adapter.set_covariance(alpha_precond, alpha_start);

    const int total_iters = mc.warmup + mc.keep;
    for (int iter = 0; iter < total_iters; ++iter) {
      bool adapting = iter < mc.warmup;

      // alpha block
      {
        Eigen::VectorXd prop = alpha_adapter.propose(alpha, rng);
        double dll = -0.5 * fixed_prec * (prop.squaredNorm() - alpha.squaredNorm());
        std::vector<double> new_ll(n_months);
        for (int t = 0; t < n_months; ++t) {
          new_ll[t] = share_month_ll(cells.months[t], prop, e(t));
          dll += new_ll[t] - month_ll[t];
        }
        double alpha_acc = std::min(1.0, std::exp(std::min(dll, 0.0)));
        if (std::log(rng.uniform() + 1e-300) < dll) {
          alpha = prop;
          month_ll = std::move(new_ll);
        }
        alpha_adapter.record(alpha_acc, alpha, adapting);
      }

      // recenter: alpha_j + d for all j, e_t - d leaves every category
      // weight unchanged, so the move is likelihood-free. Exact Gibbs on
      // the priors kills the slow flat direction.
      {
        double s2 = sigma_e * sigma_e;
        double prec = k / (options.fixed_effect_sd * options.fixed_effect_sd) + n_months / s2;
        double mean_d = (-alpha.sum() * fixed_prec + e.sum() / s2) / prec;
        double d = mean_d + rng.normal() / std::sqrt(prec);
        alpha.array() += d;
        e.array() -= d;
      }

      // month effects, scalar slice each
      for (int t = 0; t < n_months; ++t) {
        double inv_2s2 = 0.5 / (sigma_e * sigma_e);
        auto log_f = [&](double et) {
          return share_month_ll(cells.months[t], alpha, et) - inv_2s2 * et * et;
        };
        double et_new = slice_sample_1d(log_f, e(t), 0.3, rng);
        if (et_new != e(t)) {
          e(t) = et_new;
          month_ll[t] = share_month_ll(cells.months[t], alpha, et_new);
        }
      }

      // sigma_e slice
      {
        double e_sq = e.squaredNorm();
        auto log_f = [&](double ls) {
          if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
          double s = std::exp(ls);
          return -0.5 * e_sq / (s * s) - (n_months - 1.0) * ls - pc_rate * s;
        };
        sigma_e = std::exp(slice_sample_1d(log_f, std::clamp(std::log(sigma_e), -7.9, 2.9), 0.4, rng));
      }

      // funnel axis for (sigma_e, e field)
      {
        double s_old = sigma_e;
        auto log_f = [&](double d) {
          double ls = std::log(s_old) + d;
          if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
          double scale = std::exp(d);
          double ll = 0.0;
          for (int t = 0; t < n_months; ++t) {
            ll += share_month_ll(cells.months[t], alpha, e(t) * scale);
          }
          return ll - pc_rate * s_old * scale + d;
        };
        double d = slice_sample_1d(log_f, 0.0, 0.5, rng);
        if (d != 0.0) {
          double scale = std::exp(d);
          sigma_e *= scale;
          e *= scale;
          for (int t = 0; t < n_months; ++t) {
            month_ll[t] = share_month_ll(cells.months[t], alpha, e(t));
          }
        }
      }

      if (iter >= mc.warmup && (iter - mc.warmup) % mc.thin == 0) {
        int local = (iter - mc.warmup) / mc.thin;
        if (local < kept_per_chain) {
          int row = chain * kept_per_chain + local;
          out.alpha.row(row) = alpha.transpose();
          out.sigma_e(row) = sigma_e;
          std::vector<double> tr(alpha.data(), alpha.data() + k);
          tr.push_back(sigma_e);
          traces.record(chain, tr);
        }
      }
    }
  }

  out.diagnostics = traces.diagnostics();
  if (options.check_diagnostics) {
    traces.check(mc.rhat_max, mc.ess_min, "subnational share model for " + panel.iso3);
  }
  return out;
}

NationalPrediction predict_national(const ShareModelDraws& draws,
                                    const std::vector<SubnationalPanel::MonthRow>& pandemic_rows,
                                    int s_use, Rng& rng) {
  int n_rows = static_cast<int>(pandemic_rows.size());
  s_use = std::min(s_use, draws.n_draws);
  NationalPrediction pred;
  pred.y_draws.resize(s_use, n_rows);
  pred.p_draws.resize(s_use, n_rows);

  for (int r = 0; r < n_rows; ++r) {
    const auto& row = pandemic_rows[r];
    long long y_obs = 0;
    for (std::size_t j = 0; j < row.counts.size(); ++j) {
      if (row.available[j]) y_obs += row.counts[j];
    }
    for (int s = 0; s < s_use; ++s) {
      int draw = static_cast<int>(static_cast<long long>(s) * draws.n_draws / s_use);
      double e = rng.normal(0.0, draws.sigma_e(draw));
      auto probs = draws.probabilities(draw, e);
      double p_t = 0.0;
      for (std::size_t j = 0; j < row.counts.size(); ++j) {
        if (row.available[j]) p_t += probs[j];
      }
      pred.p_draws(s, r) = p_t;
      if (1.0 - p_t < 1e-12) {
        pred.y_draws(s, r) = static_cast<double>(y_obs);
        continue;
      }
      if (y_obs == 0) {
        throw ValidationError(
            "predict_national: month with zero observed subnational deaths and p < 1; "
            "route this month to the covariate model instead");
      }
      long long remainder = rng.neg_binomial_count(static_cast<double>(y_obs), p_t);
      pred.y_draws(s, r) = static_cast<double>(y_obs + remainder);
    }
  }
  return pred;
}

namespace {

// Scalar Kalman filter for the AR1-plus-noise model; returns the marginal
// log-likelihood and the final filtered state.
struct FilterResult {
  double log_lik;
  double mean_t;
  double var_t;
};

FilterResult ar1_filter(const std::vector<double>& d, const std::vector<double>& v, double mu,
                        double rho, double sigma) {
  double marg_var = sigma * sigma;
  double innov_var = marg_var * (1.0 - rho * rho);
  double m = mu, p = marg_var;
  double ll = 0.0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (t > 0) {
      m = mu + rho * (m - mu);
      p = rho * rho * p + innov_var;
    }
    double s = p + v[t];
    double resid = d[t] - m;
    ll += -0.5 * (std::log(2.0 * M_PI * s) + resid * resid / s);
    double gain = p / s;
    m += gain * resid;
    p *= (1.0 - gain);
  }
  return {ll, m, p};
}

}  // namespace

Ar1TailDraws ar1_tail_extrapolate(const std::vector<double>& log_ratio,
                                  const std::vector<double>& obs_variance, int horizon,
                                  const Ar1Options& options, std::uint64_t seed) {
  if (log_ratio.size() != obs_variance.size()) {
    throw ValidationError("ar1_tail_extrapolate: ratio/variance length mismatch");
  }
  if (log_ratio.size() < 12) {
    throw ValidationError("ar1_tail_extrapolate: need >= 12 leading months");
  }
  if (horizon < 1) throw ValidationError("ar1_tail_extrapolate: horizon must be >= 1");
  for (std::size_t i = 0; i < log_ratio.size(); ++i) {
    if (!std::isfinite(log_ratio[i]) || !std::isfinite(obs_variance[i]) || obs_variance[i] < 0.0) {
      throw ValidationError("ar1_tail_extrapolate: non-finite input at month " +
                            std::to_string(i + 1));
    }
  }
  std::vector<double> v(obs_variance);
  for (auto& x : v) x = std::max(x, 1e-12);

  const McmcConfig& mc = options.mcmc;
  const double pc_rate = pc_prior_rate(options.pc_u, options.pc_alpha);
  const int kept_per_chain = mc.keep / mc.thin;
  const int total_draws = mc.chains * kept_per_chain;

  Ar1TailDraws out;
  out.ratio_draws.resize(total_draws, horizon);
  out.ar_coefficient.resize(total_draws);
  out.marginal_sd.resize(total_draws);
  out.level.resize(total_draws);

  TraceSet traces({"mu", "rho", "sigma"}, mc.chains);

  for (int chain = 0; chain < mc.chains; ++chain) {
    Rng rng = Rng::stream(seed, "ar1_tail", "chain" + std::to_string(chain));
    // state: (mu, atanh(rho), log sigma)
    Eigen::VectorXd x(3);
    x << rng.normal(0.0, 0.2), rng.normal(0.0, 0.3), std::log(0.2) + rng.normal(0.0, 0.3);

    auto log_post = [&](const Eigen::VectorXd& s) {
      double mu = s(0);
      double rho = std::tanh(s(1));
      double ls = s(2);
      if (ls < -10.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
      double sigma = std::exp(ls);
      double lp = ar1_filter(log_ratio, v, mu, rho, sigma).log_lik;
      lp += -0.5 * mu * mu / (options.mean_prior_sd * options.mean_prior_sd);
      // uniform(-1,1) prior on rho with the tanh Jacobian
      lp += std::log(1.0 - rho * rho + 1e-300);
      lp += pc_prior_log_density(sigma, pc_rate) + ls;
      return lp;
    };

    double lp = log_post(x);
    BlockAdapter adapter(3, 0.3);
    const int total_iters = mc.warmup + mc.keep;
    for (int iter = 0; iter < total_iters; ++iter) {
      bool adapting = iter < mc.warmup;
      Eigen::VectorXd prop = adapter.propose(x, rng);
      double lp_new = log_post(prop);
      double alpha_acc = std::min(1.0, std::exp(std::min(lp_new - lp, 0.0)));
      if (std::log(rng.uniform() + 1e-300) < lp_new - lp) {
        x = prop;
        lp = lp_new;
      }
      adapter.record(alpha_acc, x, adapting);

      if (iter >= mc.warmup && (iter - mc.warmup) % mc.thin == 0) {
        int local = (iter - mc.warmup) / mc.thin;
        if (local < kept_per_chain) {
          int row = chain * kept_per_chain + local;
          double mu = x(0), rho = std::tanh(x(1)), sigma = std::exp(x(2));
          out.level(row) = mu;
          out.ar_coefficient(row) = rho;
          out.marginal_sd(row) = sigma;
          auto f = ar1_filter(log_ratio, v, mu, rho, sigma);
          double xt = f.mean_t + std::sqrt(std::max(f.var_t, 0.0)) * rng.normal();
          double innov_sd = sigma * std::sqrt(std::max(1.0 - rho * rho, 0.0));
          for (int h = 0; h < horizon; ++h) {
            xt = mu + rho * (xt - mu) + innov_sd * rng.normal();
            out.ratio_draws(row, h) = xt;
          }
          traces.record(chain, {mu, rho, sigma});
        }
      }
    }
  }

  out.diagnostics = traces.diagnostics();
  if (options.check_diagnostics) {
    traces.check(mc.rhat_max, mc.ess_min, "AR1 tail model");
  }
  return out;
}

ConstrainedCountResult constrained_count_mcmc(
    long long total, const std::vector<long long>& z, const std::vector<double>& anchors,
    const std::function<std::vector<double>(long long sweep, Rng&)>& p_supplier,
    const std::vector<long long>& start, const ConstrainedCountOptions& options,
    std::uint64_t seed, const LatentFractionModel* latent) {
  const int t_len = static_cast<int>(anchors.size());
  if (t_len < 2) throw ValidationError("constrained_count_mcmc: need >= 2 months");
  const bool have_z = !z.empty();
  if (have_z && static_cast<int>(z.size()) != t_len) {
    throw ValidationError("constrained_count_mcmc: z length mismatch");
  }
  if (static_cast<int>(start.size()) != t_len) {
    throw ValidationError("constrained_count_mcmc: start length mismatch");
  }
  long long start_sum = std::accumulate(start.begin(), start.end(), 0LL);
  if (start_sum != total) {
    throw ValidationError("constrained_count_mcmc: infeasible start (sum " +
                          std::to_string(start_sum) + " != total " + std::to_string(total) + ")");
  }
  double anchor_sum = 0.0;
  for (double a : anchors) {
    if (!(a > 0.0)) throw ValidationError("constrained_count_mcmc: anchors must be positive");
    anchor_sum += a;
  }
  std::vector<double> log_q(t_len);
  for (int t = 0; t < t_len; ++t) log_q[t] = std::log(anchors[t] / anchor_sum);

  Rng rng = Rng::stream(seed, "constrained_counts");
  std::vector<long long> y(start);

  double hyper_alpha = 0.0, hyper_sigma = 1.0;
  std::vector<double> eps_lat(t_len, 0.0);
  std::vector<double> p;
  if (latent != nullptr && have_z) {
    std::tie(hyper_alpha, hyper_sigma) = latent->hyper(0, rng);
    p.assign(t_len, 1.0 / (1.0 + std::exp(-hyper_alpha)));
  } else {
    p = p_supplier(0, rng);
    if (have_z && static_cast<int>(p.size()) != t_len) {
      throw ValidationError("constrained_count_mcmc: p supplier length mismatch");
    }
  }

  // per-month target term; -inf when the state is infeasible
  auto cell_term = [&](int t, long long yt) {
    if (yt < 0) return -std::numeric_limits<double>::infinity();
    if (have_z) {
      if (yt < z[t]) return -std::numeric_limits<double>::infinity();
      double rem = static_cast<double>(yt - z[t]);
      return static_cast<double>(yt) * log_q[t] - std::lgamma(rem + 1.0) +
             rem * std::log1p(-p[t]);
    }
    return static_cast<double>(yt) * log_q[t] - std::lgamma(static_cast<double>(yt) + 1.0);
  };

  std::vector<double> cell(t_len);
  auto refresh_cells = [&] {
    for (int t = 0; t < t_len; ++t) {
      cell[t] = cell_term(t, y[t]);
      if (!std::isfinite(cell[t])) {
        throw ValidationError("constrained_count_mcmc: infeasible start (y_t < z_t)");
      }
    }
  };
  refresh_cells();

  const int k_cap = std::max(1, std::min(options.k_max, t_len / 2));
  double j_weight_total = 0.0;
  for (const auto& [j, w] : options.j_mixture) j_weight_total += w;

  long long j_multiplier = 1;
  auto draw_j = [&] {
    double u = rng.uniform() * j_weight_total;
    for (const auto& [j, w] : options.j_mixture) {
      if (u < w) return j * j_multiplier;
      u -= w;
    }
    return options.j_mixture.back().first * j_multiplier;
  };

  std::vector<int> order(t_len);
  std::iota(order.begin(), order.end(), 0);

  // one Metropolis step; returns whether the proposal was accepted
  auto step = [&] {
    int k_move = 1 + static_cast<int>(rng.uniform_int(k_cap));
    long long j_step = draw_j();

    // partial Fisher-Yates: first k_move entries decrement, next k_move increment
    for (int i = 0; i < 2 * k_move; ++i) {
      int pick = i + static_cast<int>(rng.uniform_int(t_len - i));
      std::swap(order[i], order[pick]);
    }

    double delta = 0.0;
    bool feasible = true;
    std::array<double, 16> new_terms{};
    for (int i = 0; i < 2 * k_move && feasible; ++i) {
      int t = order[i];
      long long yt_new = y[t] + (i < k_move ? -j_step : j_step);
      double term = cell_term(t, yt_new);
      if (!std::isfinite(term)) {
        feasible = false;
        break;
      }
      new_terms[i] = term;
      delta += term - cell[t];
    }

    if (feasible && std::log(rng.uniform() + 1e-300) < delta) {
      for (int i = 0; i < 2 * k_move; ++i) {
        int t = order[i];
        y[t] += (i < k_move ? -j_step : j_step);
        cell[t] = new_terms[i];
      }
      return true;
    }
    return false;
  };

  // latent month effects: slice each eps_t given (z_t, Y_t) and the
  // current hypers, then refresh the cached fractions
  auto update_latents = [&] {
    for (int t = 0; t < t_len; ++t) {
      double yt = static_cast<double>(y[t]);
      double zt = static_cast<double>(z[t]);
      auto log_f = [&](double e) {
        double logit = hyper_alpha + e;
        // z log p + (Y - z) log(1 - p) in a stable softplus form
        double log_p = -std::log1p(std::exp(-logit));
        double log_1mp = -std::log1p(std::exp(logit));
        return zt * log_p + (yt - zt) * log_1mp -
               0.5 * e * e / (hyper_sigma * hyper_sigma);
      };
      eps_lat[t] = slice_sample_1d(log_f, eps_lat[t], 0.4, rng);
      p[t] = 1.0 / (1.0 + std::exp(-(hyper_alpha + eps_lat[t])));
      cell[t] = cell_term(t, y[t]);
    }
  };
  auto refresh_p = [&](long long sweep) {
    if (latent != nullptr) {
      std::tie(hyper_alpha, hyper_sigma) = latent->hyper(sweep, rng);
      update_latents();
    } else {
      p = p_supplier(sweep, rng);
      refresh_cells();
    }
  };
  if (latent != nullptr && have_z) update_latents();

  // pilot: scale the J mixture toward the middle of the acceptance band,
  // then freeze. Stopping at mid-band keeps the long run inside it.
  if (options.auto_tune_j) {
    const double mid = 0.5 * (options.band_lo + options.band_hi);
    for (int burst = 0; burst < 20; ++burst) {
      long long acc = 0;
      const long long pilot = 3000;
      for (long long i = 0; i < pilot; ++i) {
        if (have_z && i % 10 == 0) refresh_p(-1);
        acc += step() ? 1 : 0;
      }
      double rate = static_cast<double>(acc) / pilot;
      if (rate > mid + 0.02) {
        j_multiplier *= 2;
      } else if (rate < options.band_lo && j_multiplier > 1) {
        j_multiplier /= 2;
      } else {
        break;
      }
    }
  }

  const long long kept_target = (options.iterations - options.burnin) / options.thin;
  ConstrainedCountResult result;
  result.draws.resize(static_cast<Eigen::Index>(kept_target), t_len);

  long long accepted = 0;
  long long window_accepted = 0;
  const long long window = 10000;
  long long kept = 0;

  for (long long iter = 0; iter < options.iterations; ++iter) {
    if (have_z && iter % 10 == 0) refresh_p(iter);
    bool acc = step();
    if (acc) {
      ++accepted;
      ++window_accepted;
    }
    if ((iter + 1) % window == 0) {
      result.acceptance_trace.push_back(static_cast<double>(window_accepted) / window);
      window_accepted = 0;
    }
    if (iter >= options.burnin && (iter - options.burnin) % options.thin == 0 &&
        kept < kept_target) {
      for (int t = 0; t < t_len; ++t) {
        result.draws(static_cast<Eigen::Index>(kept), t) = static_cast<double>(y[t]);
      }
      ++kept;
    }
  }
  result.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(options.iterations);
  return result;
}

SubnationalPanel aggregate_historic_to_annual(const SubnationalPanel& panel,
                                              const std::map<int, long long>& annual_totals) {
  SubnationalPanel out;
  out.iso3 = panel.iso3;
  out.region_ids = panel.region_ids;
  out.pandemic = panel.pandemic;
  int k = panel.n_regions();

  std::map<int, SubnationalPanel::MonthRow> by_year;
  std::map<int, int> months_in_year;
  for (const auto& row : panel.historic) {
    if (row.year == 0) continue;
    int year = row.year;
    auto [it, inserted] = by_year.try_emplace(year);
    if (inserted) {
      it->second.counts.assign(k, 0);
      it->second.available.assign(k, true);
    }
    months_in_year[year] += 1;
    for (int j = 0; j < k; ++j) {
      if (row.available[j]) {
        it->second.counts[j] += row.counts[j];
      } else {
        it->second.available[j] = false;  // full-year availability required
      }
    }
  }
  int t = 0;
  for (auto& [year, row] : by_year) {
    if (months_in_year[year] < 12) continue;  // partial years are dropped
    auto total = annual_totals.find(year);
    if (total == annual_totals.end()) continue;
    row.t = ++t;
    row.national_total = total->second;
    row.national_observed = true;
    out.historic.push_back(row);
  }
  return out;
}

std::size_t single_region_tail_start(
    const std::vector<SubnationalPanel::MonthRow>& pandemic_rows) {
  if (pandemic_rows.empty()) return 0;
  // no tail if the panel never has more than one region reporting
  bool any_multi = false;
  for (const auto& row : pandemic_rows) {
    int avail = 0;
    for (bool a : row.available) avail += a ? 1 : 0;
    if (avail > 1) any_multi = true;
  }
  if (!any_multi) return pandemic_rows.size();

  std::size_t tail = pandemic_rows.size();
  for (std::size_t i = pandemic_rows.size(); i-- > 0;) {
    int avail = 0;
    for (bool a : pandemic_rows[i].available) avail += a ? 1 : 0;
    if (avail <= 1) {
      tail = i;
    } else {
      break;
    }
  }
  return tail;
}

}  // namespace excess
