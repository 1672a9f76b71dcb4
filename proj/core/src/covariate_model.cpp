#include "excess/covariate_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "excess/errors.hpp"
#include "excess/splines.hpp"

namespace excess {

namespace {

// Second-difference precision on a length-24 path; rank 22, null space
// {constant, linear}. The sum-to-zero constraint removes the constant;
// the remaining flat direction is identified by the likelihood.
Eigen::MatrixXd rw2_precision(int len) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(len - 2, len);
  for (int i = 0; i < len - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d.transpose() * d;
}

std::vector<std::string> expand_paths(const ModelSpec& spec) {
  std::vector<std::string> out;
  for (const auto& name : spec.time_varying) {
    if (spec.income_interaction) {
      out.push_back(name + ":high");
      out.push_back(name + ":low_middle");
    } else {
      out.push_back(name);
    }
  }
  return out;
}

double time_varying_value(const CovariatePanel& panel, const std::string& base,
                          const std::string& iso3, int t) {
  auto it = panel.time_varying.find(base);
  if (it == panel.time_varying.end()) {
    throw ValidationError("covariate panel missing time-varying covariate " + base);
  }
  auto ct = it->second.find(iso3);
  if (ct == it->second.end()) {
    throw ValidationError("covariate " + base + " missing for country " + iso3);
  }
  return ct->second[t - 1];
}

double constant_value(const CovariatePanel& panel, const std::string& name,
                      const std::string& iso3) {
  auto it = panel.constant.find(name);
  if (it == panel.constant.end()) {
    throw ValidationError("covariate panel missing constant covariate " + name);
  }
  auto ct = it->second.find(iso3);
  if (ct == it->second.end()) {
    throw ValidationError("constant covariate " + name + " missing for country " + iso3);
  }
  return ct->second;
}

// Path covariate value: base covariate gated by the income-group of the
// country when interactions are on.
double path_value(const CovariatePanel& panel, const PopulationTable& population,
                  const ModelSpec& spec, const std::string& path, const std::string& iso3, int t) {
  if (!spec.income_interaction) return time_varying_value(panel, path, iso3, t);
  auto pos = path.rfind(':');
  std::string base = path.substr(0, pos);
  std::string group = path.substr(pos + 1);
  IncomeGroup g = population.meta_of(iso3).income;
  bool match = (group == "high") == (g == IncomeGroup::High);
  return match ? time_varying_value(panel, base, iso3, t) : 0.0;
}

}  // namespace

int CovariateFitData::cell_index(const std::string& iso3, int t) const {
  auto it = cell_lookup_.find(iso3);
  if (it == cell_lookup_.end()) return -1;
  return it->second[t - 1];
}

CovariateFitData build_fit_data(const std::map<std::string, MortalitySeries>& observed,
                                const ExpectedDistribution& expected, const CovariatePanel& panel,
                                const PopulationTable& population, const ModelSpec& spec,
                                const std::vector<std::string>& fit_countries) {
  CovariateFitData data;
  data.path_names = expand_paths(spec);
  data.fixed_names = data.path_names;  // overall associations first
  for (const auto& c : spec.constant_covariates) data.fixed_names.push_back(c);
  if (spec.include_income_indicator) data.fixed_names.push_back("income_high");

  for (const auto& iso : fit_countries) {
    auto it = observed.find(iso);
    if (it == observed.end()) throw ValidationError("fit country has no mortality series: " + iso);
    const MortalitySeries& series = it->second;
    for (int t = 1; t <= kPandemicMonths; ++t) {
      if (!series.values[t - 1].observed) continue;
      CovariateCell cell;
      cell.country = static_cast<int>(data.countries.size());
      cell.t = t;
      cell.y = static_cast<double>(series.values[t - 1].count);
      const GammaMoment& g = expected.at(iso, t);  // throws if missing
      if (!(g.tau_hat > 0.0) || !(g.e_hat > 0.0)) {
        throw ValidationError("invalid expected-number distribution for " + iso + " month " +
                              std::to_string(t));
      }
      cell.log_e = std::log(g.e_hat);
      cell.tau = g.tau_hat;
      data.cells.push_back(cell);
    }
    data.countries.push_back(iso);
  }
  if (data.countries.size() < 2) {
    throw ValidationError("covariate model needs at least 2 observed countries");
  }

  for (const auto& iso : data.countries) data.cell_lookup_[iso].fill(-1);
  for (std::size_t i = 0; i < data.cells.size(); ++i) {
    const auto& cell = data.cells[i];
    data.cell_lookup_[data.countries[cell.country]][cell.t - 1] = static_cast<int>(i);
  }

  const int n = data.n_cells();
  const int p = data.n_paths();
  const int g_total = static_cast<int>(data.fixed_names.size());
  data.x_path.resize(n, p);
  data.design_fixed.resize(n, 1 + g_total);
  for (int i = 0; i < n; ++i) {
    const auto& cell = data.cells[i];
    const std::string& iso = data.countries[cell.country];
    data.design_fixed(i, 0) = 1.0;
    for (int j = 0; j < p; ++j) {
      double v = path_value(panel, population, spec, data.path_names[j], iso, cell.t);
      data.x_path(i, j) = v;
      data.design_fixed(i, 1 + j) = v;
    }
    int col = 1 + p;
    for (const auto& c : spec.constant_covariates) {
      data.design_fixed(i, col++) = constant_value(panel, c, iso);
    }
    if (spec.include_income_indicator) {
      data.design_fixed(i, col++) =
          population.meta_of(iso).income == IncomeGroup::High ? 1.0 : 0.0;
    }
  }
  return data;
}

CountryDesign build_country_design(const CovariatePanel& panel, const PopulationTable& population,
                                   const ModelSpec& spec, const std::string& iso3) {
  CountryDesign d;
  d.iso3 = iso3;
  auto paths = expand_paths(spec);
  int p = static_cast<int>(paths.size());
  int g_total = p + static_cast<int>(spec.constant_covariates.size()) +
                (spec.include_income_indicator ? 1 : 0);
  d.x_path.resize(kPandemicMonths, p);
  d.design_fixed.resize(kPandemicMonths, 1 + g_total);
  for (int t = 1; t <= kPandemicMonths; ++t) {
    d.design_fixed(t - 1, 0) = 1.0;
    for (int j = 0; j < p; ++j) {
      double v = path_value(panel, population, spec, paths[j], iso3, t);
      d.x_path(t - 1, j) = v;
      d.design_fixed(t - 1, 1 + j) = v;
    }
    int col = 1 + p;
    for (const auto& c : spec.constant_covariates) {
      d.design_fixed(t - 1, col++) = constant_value(panel, c, iso3);
    }
    if (spec.include_income_indicator) {
      d.design_fixed(t - 1, col++) =
          population.meta_of(iso3).income == IncomeGroup::High ? 1.0 : 0.0;
    }
  }
  return d;
}

namespace {

struct CellConstants {
  double y;
  double tau;
  double e_hat;
  double y_plus_tau;
};

// Variable part of the NB log pmf as a function of the linear predictor
// eta = log theta: y*eta - (y+tau)*log(tau + E*exp(eta)).
inline double cell_vll(const CellConstants& c, double eta) {
  if (eta > 40.0) eta = 40.0;
  if (eta < -40.0) eta = -40.0;
  return c.y * eta - c.y_plus_tau * std::log(c.tau + c.e_hat * std::exp(eta));
}

struct PathIndex {
  std::vector<int> cells;     // cells with nonzero covariate
  std::vector<double> value;  // covariate value at those cells
};

}  // namespace

std::vector<int> PosteriorDraws::thin_indices(int s_use) const {
  s_use = std::min(s_use, n_draws);
  std::vector<int> idx(s_use);
  for (int k = 0; k < s_use; ++k) {
    idx[k] = static_cast<int>(static_cast<long long>(k) * n_draws / s_use);
  }
  return idx;
}

double PosteriorDraws::linear_predictor(int s, const CountryDesign& design, int t) const {
  double lp = design.design_fixed.row(t - 1).dot(fixed.row(s));
  for (std::size_t p = 0; p < beta.size(); ++p) {
    double x = design.x_path(t - 1, static_cast<int>(p));
    if (x != 0.0) lp += x * beta[p](s, t - 1);
  }
  return lp;
}

PosteriorDraws fit_model(const CovariateFitData& data, const ModelSpec& spec,
                         const FitModelOptions& options, std::uint64_t seed) {
  const int n = data.n_cells();
  const int p = data.n_paths();
  const int g1 = static_cast<int>(data.fixed_names.size()) + 1;  // incl alpha
  const McmcConfig& mc = options.mcmc;
  const double pc_rate = pc_prior_rate(spec.pc_u, spec.pc_alpha);
  const double fixed_prec = 1.0 / (spec.fixed_effect_sd * spec.fixed_effect_sd);

  std::vector<CellConstants> cells(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = data.cells[i];
    cells[i] = {c.y, c.tau, std::exp(c.log_e), c.y + c.tau};
  }

  // Each time-varying path is carried as a full 24-vector v; its mean is
  // the overall association (reported as the fixed effect) and the
  // deviations v - mean(v) are the RW2 path with an exact sum-to-zero
  // constraint. Updating level and deviations jointly removes the
  // cross-block correlation that plagues an alternating scheme.
  Eigen::MatrixXd k_full = rw2_precision(kPandemicMonths);
  const int rw2_rank = kPandemicMonths - 2;
  const int dev_dim = kPandemicMonths - 1;

  // remaining fixed effects: alpha plus the constant covariates
  const int g_small = g1 - p;
  Eigen::MatrixXd design_small(n, g_small);
  design_small.col(0) = data.design_fixed.col(0);
  for (int c = 0; c < g_small - 1; ++c) {
    design_small.col(1 + c) = data.design_fixed.col(1 + p + c);
  }

  std::vector<PathIndex> path_index(p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) {
      double v = data.x_path(i, j);
      if (v != 0.0) {
        path_index[j].cells.push_back(i);
        path_index[j].value.push_back(v);
      }
    }
  }

  const int kept_per_chain = mc.keep / mc.thin;
  const int total_draws = mc.chains * kept_per_chain;

  // Penalized GLM fit of (alpha, gamma_path, gamma_const) with paths and
  // epsilon at zero: chains start near this mode and the inverse Fisher
  // information preconditions the proposals.
  Eigen::VectorXd fixed_map = Eigen::VectorXd::Zero(g1);
  Eigen::MatrixXd fixed_info_inv = Eigen::MatrixXd::Identity(g1, g1);
  {
    auto vll_sum = [&](const Eigen::VectorXd& f) {
      Eigen::VectorXd eta = data.design_fixed * f;
      double total = -0.5 * fixed_prec * f.squaredNorm();
      for (int i = 0; i < n; ++i) total += cell_vll(cells[i], eta(i));
      return total;
    };
    for (int it = 0; it < 30; ++it) {
      Eigen::VectorXd eta = data.design_fixed * fixed_map;
      Eigen::VectorXd g(n), w(n);
      for (int i = 0; i < n; ++i) {
        double mu = cells[i].e_hat * std::exp(std::clamp(eta(i), -40.0, 40.0));
        g(i) = cells[i].tau * (cells[i].y - mu) / (mu + cells[i].tau);
        w(i) = cells[i].tau * mu / (mu + cells[i].tau);
      }
      Eigen::VectorXd grad = data.design_fixed.transpose() * g - fixed_prec * fixed_map;
      Eigen::MatrixXd info = data.design_fixed.transpose() * w.asDiagonal() * data.design_fixed +
                             fixed_prec * Eigen::MatrixXd::Identity(g1, g1);
      Eigen::VectorXd delta = info.ldlt().solve(grad);
      double base = vll_sum(fixed_map);
      double step = 1.0;
      Eigen::VectorXd cand = fixed_map + delta;
      for (int half = 0; half < 30 && vll_sum(cand) < base; ++half) {
        step *= 0.5;
        cand = fixed_map + step * delta;
      }
      double move = (cand - fixed_map).lpNorm<Eigen::Infinity>();
      fixed_map = cand;
      if (move < 1e-9) break;
    }
    Eigen::VectorXd eta = data.design_fixed * fixed_map;
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      double mu = cells[i].e_hat * std::exp(std::clamp(eta(i), -40.0, 40.0));
      w(i) = cells[i].tau * mu / (mu + cells[i].tau);
    }
    Eigen::MatrixXd info = data.design_fixed.transpose() * w.asDiagonal() * data.design_fixed +
                           fixed_prec * Eigen::MatrixXd::Identity(g1, g1);
    fixed_info_inv = info.ldlt().solve(Eigen::MatrixXd::Identity(g1, g1));
  }
  Eigen::MatrixXd small_info_inv(g_small, g_small);
  {
    std::vector<int> idx = {0};
    for (int c = 0; c < g_small - 1; ++c) idx.push_back(1 + p + c);
    for (int a = 0; a < g_small; ++a) {
      for (int b = 0; b < g_small; ++b) small_info_inv(a, b) = fixed_info_inv(idx[a], idx[b]);
    }
  }

  PosteriorDraws out;
  out.n_draws = total_draws;
  out.path_names = data.path_names;
  out.fixed_names = data.fixed_names;
  out.fixed.resize(total_draws, g1);
  out.beta.assign(p, Eigen::MatrixXd(total_draws, kPandemicMonths));
  out.sigma_beta.resize(total_draws, p);
  out.sigma_eps.resize(total_draws);
  for (int cell : options.keep_eps_cells) {
    out.eps_draws[cell] = Eigen::VectorXd(total_draws);
  }
  out.theta_mean = Eigen::VectorXd::Zero(n);
  out.theta_sq_mean = Eigen::VectorXd::Zero(n);

  std::vector<std::string> trace_names = {"alpha"};
  for (const auto& f : data.fixed_names) trace_names.push_back(f);
  for (const auto& pn : data.path_names) trace_names.push_back("sigma_beta[" + pn + "]");
  trace_names.push_back("sigma_eps");
  TraceSet traces(trace_names, mc.chains);

  for (int chain = 0; chain < mc.chains; ++chain) {
    Rng rng = Rng::stream(seed, "covariate_fit", "chain" + std::to_string(chain));

    Eigen::VectorXd fixed_small(g_small);
    std::vector<Eigen::VectorXd> v(p, Eigen::VectorXd::Zero(kPandemicMonths));
    Eigen::VectorXd sigma_beta = Eigen::VectorXd::Constant(p, 0.3);
    double sigma_eps = 0.3;
    Eigen::VectorXd eps(n);

    if (options.warm_start != nullptr && options.warm_start->n_draws > 0) {
      const PosteriorDraws& w = *options.warm_start;
      int pick = static_cast<int>((static_cast<long long>(chain) + 1) * w.n_draws / mc.chains) - 1;
      fixed_small(0) = w.fixed(pick, 0);
      for (int c = 0; c < g_small - 1; ++c) fixed_small(1 + c) = w.fixed(pick, 1 + p + c);
      for (int j = 0; j < p && j < static_cast<int>(w.beta.size()); ++j) {
        v[j] = w.beta[j].row(pick).transpose().array() + w.fixed(pick, 1 + j);
        sigma_beta(j) = w.sigma_beta(pick, j);
      }
      sigma_eps = w.sigma_eps(pick);
      for (int i = 0; i < n; ++i) eps(i) = rng.normal(0.0, 0.05);
    } else {
      fixed_small(0) = fixed_map(0) + rng.normal(0.0, 0.3 * std::sqrt(fixed_info_inv(0, 0)));
      for (int c = 0; c < g_small - 1; ++c) {
        fixed_small(1 + c) = fixed_map(1 + p + c) +
                             rng.normal(0.0, 0.3 * std::sqrt(fixed_info_inv(1 + p + c, 1 + p + c)));
      }
      for (int j = 0; j < p; ++j) {
        v[j].setConstant(fixed_map(1 + j));
        for (int t = 0; t < kPandemicMonths; ++t) v[j](t) += rng.normal(0.0, 0.02);
        sigma_beta(j) *= std::exp(rng.normal(0.0, 0.3));
      }
      sigma_eps *= std::exp(rng.normal(0.0, 0.3));
      for (int i = 0; i < n; ++i) eps(i) = rng.normal(0.0, 0.1);
    }

    Eigen::VectorXd eta(n), vll(n);
    auto rebuild_cache = [&] {
      Eigen::VectorXd base = design_small * fixed_small;
      for (int i = 0; i < n; ++i) {
        double path_part = 0.0;
        for (int j = 0; j < p; ++j) {
          double x = data.x_path(i, j);
          if (x != 0.0) path_part += x * v[j](data.cells[i].t - 1);
        }
        eta(i) = base(i) + path_part + eps(i);
        vll(i) = cell_vll(cells[i], eta(i));
      }
    };
    rebuild_cache();
    double eps_sq_sum = eps.squaredNorm();

    Eigen::VectorXd small_center(g_small);
    small_center(0) = fixed_map(0);
    for (int c = 0; c < g_small - 1; ++c) small_center(1 + c) = fixed_map(1 + p + c);
    BlockAdapter small_adapter(g_small, 0.7);
    small_adapter.set_covariance(small_info_inv, small_center);


    std::vector<double> eps_steps(n, 0.2);
    std::vector<double> eps_acc(n, 0.0);
    int eps_batch_count = 0, eps_batches = 0;

    Eigen::VectorXd scratch_eta(n), scratch_vll(n);

    const int total_iters = mc.warmup + mc.keep;
    for (int iter = 0; iter < total_iters; ++iter) {
      bool adapting = iter < mc.warmup;

      // --- small fixed-effect block (alpha + constant covariates) ---
      {
        Eigen::VectorXd prop = small_adapter.propose(fixed_small, rng);
        Eigen::VectorXd delta_eta = design_small * (prop - fixed_small);
        double dll = 0.0;
        for (int i = 0; i < n; ++i) {
          scratch_eta(i) = eta(i) + delta_eta(i);
          scratch_vll(i) = cell_vll(cells[i], scratch_eta(i));
          dll += scratch_vll(i) - vll(i);
        }
        double dprior = -0.5 * fixed_prec * (prop.squaredNorm() - fixed_small.squaredNorm());
        double log_acc = dll + dprior;
        double alpha_acc = std::min(1.0, std::exp(std::min(log_acc, 0.0)));
        if (std::log(rng.uniform() + 1e-300) < log_acc) {
          fixed_small = prop;
          eta.swap(scratch_eta);
          vll.swap(scratch_vll);
        }
        small_adapter.record(alpha_acc, fixed_small, adapting);
      }

      // --- recenter alpha against the epsilon field (likelihood-free) ---
      {
        double s2 = sigma_eps * sigma_eps;
        double prec = n / s2 + fixed_prec;
        double mean_d = (eps.sum() / s2 - fixed_small(0) * fixed_prec) / prec;
        double d = mean_d + rng.normal() / std::sqrt(prec);
        fixed_small(0) += d;
        eps.array() -= d;
        eps_sq_sum = eps.squaredNorm();
      }

      // --- global level block: (alpha, path levels, constants) jointly,
      // via a Gaussian-approximation MH step (Fisher-scoring proposal with
      // a Hastings correction). Shifting a path by a constant leaves its
      // RW2 quadratic unchanged (K 1 = 0), so only the normal priors and
      // the likelihood enter. ---
      {
        Eigen::VectorXd composite(g1);
        composite(0) = fixed_small(0);
        for (int j = 0; j < p; ++j) composite(1 + j) = v[j].mean();
        for (int c = 0; c < g_small - 1; ++c) composite(1 + p + c) = fixed_small(1 + c);

        auto moments = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& eta_at) {
          Eigen::VectorXd gce(n), w(n);
          for (int i = 0; i < n; ++i) {
            double e = std::clamp(eta_at(i), -40.0, 40.0);
            double mu = cells[i].e_hat * std::exp(e);
            gce(i) = cells[i].tau * (cells[i].y - mu) / (mu + cells[i].tau);
            w(i) = cells[i].tau * mu / (mu + cells[i].tau);
          }
          Eigen::MatrixXd q = data.design_fixed.transpose() * w.asDiagonal() * data.design_fixed +
                              fixed_prec * Eigen::MatrixXd::Identity(g1, g1);
          Eigen::VectorXd rhs = data.design_fixed.transpose() * (gce + w.cwiseProduct(data.design_fixed * at));
          return std::pair<Eigen::LLT<Eigen::MatrixXd>, Eigen::VectorXd>(Eigen::LLT<Eigen::MatrixXd>(q),
                                                                          rhs);
        };
        auto log_q = [&](const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& m,
                         const Eigen::VectorXd& x) {
          Eigen::VectorXd diff = llt.matrixL().transpose() * (x - m);
          double log_det = 0.0;
          for (int i = 0; i < g1; ++i) log_det += std::log(llt.matrixL()(i, i));
          return -0.5 * diff.squaredNorm() + log_det;
        };

        auto [llt0, rhs0] = moments(composite, eta);
        Eigen::VectorXd m0 = llt0.solve(rhs0);
        Eigen::VectorXd z(g1);
        for (int i = 0; i < g1; ++i) z(i) = rng.normal();
        Eigen::VectorXd prop = m0 + llt0.matrixL().transpose().solve(z);

        Eigen::VectorXd delta_eta = data.design_fixed * (prop - composite);
        double dll = 0.0;
        for (int i = 0; i < n; ++i) {
          scratch_eta(i) = eta(i) + delta_eta(i);
          scratch_vll(i) = cell_vll(cells[i], scratch_eta(i));
          dll += scratch_vll(i) - vll(i);
        }
        double dprior = -0.5 * fixed_prec * (prop.squaredNorm() - composite.squaredNorm());

        auto [llt1, rhs1] = moments(prop, scratch_eta);
        Eigen::VectorXd m1 = llt1.solve(rhs1);
        double log_acc = dll + dprior + log_q(llt1, m1, composite) - log_q(llt0, m0, prop);
        if (std::log(rng.uniform() + 1e-300) < log_acc) {
          fixed_small(0) = prop(0);
          for (int j = 0; j < p; ++j) v[j].array() += prop(1 + j) - composite(1 + j);
          for (int c = 0; c < g_small - 1; ++c) fixed_small(1 + c) = prop(1 + p + c);
          eta.swap(scratch_eta);
          vll.swap(scratch_vll);
        }
      }

      // --- paths: Gaussian-approximation MH on the full 24-vector (level
      // plus deviations), then sigma and the funnel axis ---
      for (int j = 0; j < p; ++j) {
        const auto& idx = path_index[j];
        {
          double s2 = sigma_beta(j) * sigma_beta(j);
          Eigen::MatrixXd level_prior = Eigen::MatrixXd::Constant(
              kPandemicMonths, kPandemicMonths, fixed_prec / (kPandemicMonths * kPandemicMonths));
          Eigen::MatrixXd prior_q = k_full / s2 + level_prior;

          auto moments = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& eta_at) {
            Eigen::VectorXd g_t = Eigen::VectorXd::Zero(kPandemicMonths);
            Eigen::VectorXd w_t = Eigen::VectorXd::Zero(kPandemicMonths);
            for (std::size_t k = 0; k < idx.cells.size(); ++k) {
              int i = idx.cells[k];
              int t = data.cells[i].t - 1;
              double x = idx.value[k];
              double e = std::clamp(eta_at(i), -40.0, 40.0);
              double mu = cells[i].e_hat * std::exp(e);
              g_t(t) += x * cells[i].tau * (cells[i].y - mu) / (mu + cells[i].tau);
              w_t(t) += x * x * cells[i].tau * mu / (mu + cells[i].tau);
            }
            Eigen::MatrixXd q = prior_q;
            q.diagonal() += w_t;
            Eigen::VectorXd rhs = g_t + w_t.cwiseProduct(at);
            return std::pair<Eigen::LLT<Eigen::MatrixXd>, Eigen::VectorXd>(
                Eigen::LLT<Eigen::MatrixXd>(q), rhs);
          };
          auto log_q = [&](const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& m,
                           const Eigen::VectorXd& x) {
            Eigen::VectorXd diff = llt.matrixL().transpose() * (x - m);
            double log_det = 0.0;
            for (int i = 0; i < kPandemicMonths; ++i) log_det += std::log(llt.matrixL()(i, i));
            return -0.5 * diff.squaredNorm() + log_det;
          };

          auto [llt0, rhs0] = moments(v[j], eta);
          Eigen::VectorXd m0 = llt0.solve(rhs0);
          Eigen::VectorXd z(kPandemicMonths);
          for (int t = 0; t < kPandemicMonths; ++t) z(t) = rng.normal();
          Eigen::VectorXd prop = m0 + llt0.matrixL().transpose().solve(z);

          double dll = 0.0;
          for (std::size_t k = 0; k < idx.cells.size(); ++k) {
            int i = idx.cells[k];
            int t = data.cells[i].t - 1;
            double new_eta = eta(i) + idx.value[k] * (prop(t) - v[j](t));
            scratch_eta(i) = new_eta;
            scratch_vll(i) = cell_vll(cells[i], new_eta);
            dll += scratch_vll(i) - vll(i);
          }
          double mean_old = v[j].mean(), mean_new = prop.mean();
          double dprior = -0.5 / s2 * (prop.dot(k_full * prop) - v[j].dot(k_full * v[j])) -
                          0.5 * fixed_prec * (mean_new * mean_new - mean_old * mean_old);

          // reverse-move moments need eta at the proposal for the affected cells
          Eigen::VectorXd eta_prop = eta;
          for (std::size_t k = 0; k < idx.cells.size(); ++k) {
            eta_prop(idx.cells[k]) = scratch_eta(idx.cells[k]);
          }
          auto [llt1, rhs1] = moments(prop, eta_prop);
          Eigen::VectorXd m1 = llt1.solve(rhs1);
          double log_acc = dll + dprior + log_q(llt1, m1, v[j]) - log_q(llt0, m0, prop);
          if (std::log(rng.uniform() + 1e-300) < log_acc) {
            v[j] = prop;
            for (std::size_t k = 0; k < idx.cells.size(); ++k) {
              int i = idx.cells[k];
              eta(i) = scratch_eta(i);
              vll(i) = scratch_vll(i);
            }
          }
        }

        // sigma_beta[j] given the deviations: slice on log sigma
        {
          double quad = v[j].dot(k_full * v[j]);
          auto log_f = [&](double ls) {
            if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
            double s = std::exp(ls);
            return -0.5 * quad / (s * s) - (rw2_rank - 1.0) * ls - pc_rate * s;
          };
          double ls0 = std::clamp(std::log(sigma_beta(j)), -7.9, 2.9);
          sigma_beta(j) = std::exp(slice_sample_1d(log_f, ls0, 0.5, rng));
        }

        // funnel axis: scale the deviations and sigma together
        {
          double s_old = sigma_beta(j);
          double level = v[j].mean();
          auto log_f = [&](double d) {
            double ls = std::log(s_old) + d;
            if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
            double scale = std::exp(d);
            double ll = 0.0;
            for (std::size_t k = 0; k < idx.cells.size(); ++k) {
              int i = idx.cells[k];
              int t = data.cells[i].t - 1;
              double dev = v[j](t) - level;
              ll += cell_vll(cells[i], eta(i) + idx.value[k] * dev * (scale - 1.0));
            }
            return ll - pc_rate * s_old * scale + (1.0 - rw2_rank + dev_dim) * d;
          };
          double d = slice_sample_1d(log_f, 0.0, 0.8, rng);
          if (d != 0.0) {
            double scale = std::exp(d);
            sigma_beta(j) *= scale;
            for (int t = 0; t < kPandemicMonths; ++t) {
              v[j](t) = level + (v[j](t) - level) * scale;
            }
            for (std::size_t k = 0; k < idx.cells.size(); ++k) {
              int i = idx.cells[k];
              int t = data.cells[i].t - 1;
              eta(i) += idx.value[k] * (v[j](t) - level) * (1.0 - 1.0 / scale);
              vll(i) = cell_vll(cells[i], eta(i));
            }
          }
        }
      }

      // --- sigma_eps: slice, then the joint funnel axis with the field ---
      {
        auto log_f = [&](double ls) {
          if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
          double s = std::exp(ls);
          return -0.5 * eps_sq_sum / (s * s) - (n - 1.0) * ls - pc_rate * s;
        };
        double ls0 = std::clamp(std::log(sigma_eps), -7.9, 2.9);
        sigma_eps = std::exp(slice_sample_1d(log_f, ls0, 0.3, rng));
      }
      {
        double s_old = sigma_eps;
        auto log_f = [&](double d) {
          double ls = std::log(s_old) + d;
          if (ls < -8.0 || ls > 3.0) return -std::numeric_limits<double>::infinity();
          double scale = std::exp(d);
          double ll = 0.0;
          for (int i = 0; i < n; ++i) {
            ll += cell_vll(cells[i], eta(i) + eps(i) * (scale - 1.0));
          }
          return ll - pc_rate * s_old * scale + d;
        };
        double d = slice_sample_1d(log_f, 0.0, 0.5, rng);
        if (d != 0.0) {
          double scale = std::exp(d);
          sigma_eps *= scale;
          for (int i = 0; i < n; ++i) {
            eta(i) += eps(i) * (scale - 1.0);
            eps(i) *= scale;
            vll(i) = cell_vll(cells[i], eta(i));
          }
          eps_sq_sum = eps.squaredNorm();
        }
      }

      // --- epsilon field, single-site sweep ---
      {
        double inv_2s2 = 0.5 / (sigma_eps * sigma_eps);
        for (int i = 0; i < n; ++i) {
          double prop = eps(i) + eps_steps[i] * rng.normal();
          double new_eta = eta(i) + (prop - eps(i));
          double new_vll = cell_vll(cells[i], new_eta);
          double log_acc = new_vll - vll(i) - inv_2s2 * (prop * prop - eps(i) * eps(i));
          if (std::log(rng.uniform() + 1e-300) < log_acc) {
            eps_sq_sum += prop * prop - eps(i) * eps(i);
            eps(i) = prop;
            eta(i) = new_eta;
            vll(i) = new_vll;
            eps_acc[i] += 1.0;
          }
        }
        if (adapting && ++eps_batch_count == 50) {
          ++eps_batches;
          double delta = std::min(0.25, 2.0 / std::sqrt(static_cast<double>(eps_batches)));
          for (int i = 0; i < n; ++i) {
            double rate = eps_acc[i] / 50.0;
            eps_steps[i] *= std::exp(rate > 0.44 ? delta : -delta);
            eps_acc[i] = 0.0;
          }
          eps_batch_count = 0;
        }
      }

      // --- record ---
      if (iter >= mc.warmup && (iter - mc.warmup) % mc.thin == 0) {
        int local = (iter - mc.warmup) / mc.thin;
        if (local < kept_per_chain) {
          int row = chain * kept_per_chain + local;
          out.fixed(row, 0) = fixed_small(0);
          for (int j = 0; j < p; ++j) {
            double level = v[j].mean();
            out.fixed(row, 1 + j) = level;
            out.beta[j].row(row) = (v[j].array() - level).transpose();
            out.sigma_beta(row, j) = sigma_beta(j);
          }
          for (int c = 0; c < g_small - 1; ++c) out.fixed(row, 1 + p + c) = fixed_small(1 + c);
          out.sigma_eps(row) = sigma_eps;
          for (auto& [cell, vec] : out.eps_draws) vec(row) = eps(cell);
          for (int i = 0; i < n; ++i) {
            double theta = std::exp(eta(i));
            out.theta_mean(i) += theta;
            out.theta_sq_mean(i) += theta * theta;
          }

          std::vector<double> tr;
          tr.reserve(trace_names.size());
          for (int k = 0; k < g1; ++k) tr.push_back(out.fixed(row, k));
          for (int j = 0; j < p; ++j) tr.push_back(sigma_beta(j));
          tr.push_back(sigma_eps);
          traces.record(chain, tr);
        }
      }
    }
  }

  out.theta_mean /= static_cast<double>(total_draws);
  out.theta_sq_mean /= static_cast<double>(total_draws);
  out.diagnostics = traces.diagnostics();
  if (options.check_diagnostics) {
    traces.check(mc.rhat_max, mc.ess_min, "covariate model");
  }
  return out;
}

CountryPrediction predict_no_data(const PosteriorDraws& draws, const CountryDesign& design,
                                  const ExpectedDistribution& expected, int s_use, Rng& rng) {
  auto idx = draws.thin_indices(s_use);
  CountryPrediction pred;
  pred.iso3 = design.iso3;
  pred.y_draws.resize(static_cast<int>(idx.size()), kPandemicMonths);
  pred.theta_draws.resize(static_cast<int>(idx.size()), kPandemicMonths);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    int s = idx[k];
    double sigma_eps = draws.sigma_eps(s);
    for (int t = 1; t <= kPandemicMonths; ++t) {
      double lp = draws.linear_predictor(s, design, t) + rng.normal(0.0, sigma_eps);
      double theta = std::exp(lp);
      const GammaMoment& g = expected.at(design.iso3, t);
      pred.theta_draws(static_cast<int>(k), t - 1) = theta;
      pred.y_draws(static_cast<int>(k), t - 1) =
          static_cast<double>(rng.neg_binomial_mean_disp(g.e_hat * theta, g.tau_hat));
    }
  }
  return pred;
}

CountryPrediction benchmark_partial(const PosteriorDraws& draws, const CovariateFitData& fit_data,
                                    const MortalitySeries& observed, const CountryDesign& design,
                                    const ExpectedDistribution& expected, int s_use, Rng& rng) {
  int t1 = observed.observed_prefix();
  if (t1 < 1) throw ValidationError("benchmark_partial: no observed prefix for " + observed.iso3);
  auto idx = draws.thin_indices(s_use);
  CountryPrediction pred;
  pred.iso3 = observed.iso3;
  pred.benchmarked = true;
  pred.y_draws.resize(static_cast<int>(idx.size()), kPandemicMonths);
  pred.theta_draws.resize(static_cast<int>(idx.size()), kPandemicMonths);

  double y_t1 = static_cast<double>(observed.values[t1 - 1].count);
  const Eigen::VectorXd* eps_t1 = nullptr;
  int cell_t1 = fit_data.cell_index(observed.iso3, t1);
  if (cell_t1 >= 0) {
    auto it = draws.eps_draws.find(cell_t1);
    if (it != draws.eps_draws.end()) eps_t1 = &it->second;
  }
  if (y_t1 <= 0.0) {
    pred.benchmarked = false;
    pred.benchmark_skipped_zero = true;  // fall back to the plain prediction
  }

  const GammaMoment& g1 = expected.at(observed.iso3, t1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    int s = idx[k];
    double sigma_eps = draws.sigma_eps(s);
    double factor = 1.0;
    if (pred.benchmarked) {
      double eps_at_t1 = eps_t1 != nullptr ? (*eps_t1)(s) : rng.normal(0.0, sigma_eps);
      double theta_t1 = std::exp(draws.linear_predictor(s, design, t1) + eps_at_t1);
      factor = y_t1 / (g1.e_hat * theta_t1);
    }
    for (int t = 1; t <= kPandemicMonths; ++t) {
      if (t <= t1) {
        pred.y_draws(static_cast<int>(k), t - 1) =
            static_cast<double>(observed.values[t - 1].count);
        pred.theta_draws(static_cast<int>(k), t - 1) = 1.0;
        continue;
      }
      double lp = draws.linear_predictor(s, design, t) + rng.normal(0.0, sigma_eps);
      double theta = std::exp(lp);
      const GammaMoment& g = expected.at(observed.iso3, t);
      pred.theta_draws(static_cast<int>(k), t - 1) = theta;
      pred.y_draws(static_cast<int>(k), t - 1) =
          static_cast<double>(rng.neg_binomial_mean_disp(g.e_hat * theta * factor, g.tau_hat));
    }
  }
  return pred;
}

CountryPrediction apportion_annual_country(const PosteriorDraws& draws,
                                           const CountryDesign& design,
                                           const std::map<int, long long>& annual_totals,
                                           const ExpectedDistribution& expected, int s_use,
                                           Rng& rng) {
  auto idx = draws.thin_indices(s_use);
  CountryPrediction pred;
  pred.iso3 = design.iso3;
  pred.y_draws.setConstant(static_cast<int>(idx.size()), kPandemicMonths,
                           std::numeric_limits<double>::quiet_NaN());
  pred.theta_draws.setConstant(static_cast<int>(idx.size()), kPandemicMonths, 1.0);
  for (const auto& [year, total] : annual_totals) {
    if (total < 0) {
      throw ValidationError("apportion_annual_country: negative annual total for " + design.iso3);
    }
    int v = year - kFirstPandemicYear + 1;
    if (v < 1 || v > 2) continue;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      int s = idx[k];
      double sigma_eps = draws.sigma_eps(s);
      std::array<double, 12> weight{};
      for (int m = 1; m <= 12; ++m) {
        int t = CountryMonthKey::t_of(v, m);
        double lp = draws.linear_predictor(s, design, t) + rng.normal(0.0, sigma_eps);
        double theta = std::exp(lp);
        const GammaMoment& g = expected.at(design.iso3, t);
        double e_draw = rng.gamma(g.tau_hat, g.rate());
        pred.theta_draws(static_cast<int>(k), t - 1) = theta;
        weight[m - 1] = e_draw * theta;
      }
      auto counts = rng.multinomial(total, weight);
      for (int m = 1; m <= 12; ++m) {
        int t = CountryMonthKey::t_of(v, m);
        pred.y_draws(static_cast<int>(k), t - 1) = static_cast<double>(counts[m - 1]);
      }
    }
  }
  return pred;
}

}  // namespace excess
