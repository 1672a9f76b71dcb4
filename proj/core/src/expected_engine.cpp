#include "excess/expected_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "excess/errors.hpp"

namespace excess {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double nb_log_lik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double phi) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double mu = std::exp(eta(i));
    ll += std::lgamma(y(i) + phi) - std::lgamma(phi) - std::lgamma(y(i) + 1.0) +
          phi * std::log(phi) + y(i) * eta(i) - (y(i) + phi) * std::log(phi + mu);
  }
  return ll;
}

struct PenaltyBlock {
  int start = 0;
  int dim = 0;
  Eigen::MatrixXd s;       // unit-lambda penalty on this block
  double log_gdet = 0.0;   // generalized log-determinant of s
  int rank = 0;
  double lambda = 1.0;
};

struct InnerFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd hessian;  // X'WX + S_lambda (penalized Fisher information)
  double phi = 0.0;
  double penalized_ll = 0.0;
  double log_lik = 0.0;
  bool converged = false;
  double grad_norm = 0.0;
};

Eigen::MatrixXd assemble_penalty(int p, const std::vector<PenaltyBlock>& blocks) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const auto& b : blocks) {
    s.block(b.start, b.start, b.dim, b.dim) += b.lambda * b.s;
  }
  return s;
}

// Fisher-scoring fit of the penalized NB model for fixed lambda, with phi
// profiled by golden-section on the NB likelihood.
InnerFit fit_inner(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                   const std::vector<PenaltyBlock>& blocks, const ExpectedOptions& opts,
                   Eigen::VectorXd coef_start, double phi_start) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = x.cols();
  Eigen::MatrixXd s = assemble_penalty(static_cast<int>(p), blocks);

  InnerFit fit;
  if (coef_start.size() == p) {
    fit.coef = std::move(coef_start);
  } else {
    fit.coef = Eigen::VectorXd::Zero(p);
    fit.coef(0) = std::log(std::max(y.mean(), 0.5));
  }
  fit.phi = phi_start;

  auto penalized = [&](const Eigen::VectorXd& c, double phi) {
    Eigen::VectorXd eta = x * c;
    return nb_log_lik(y, eta, phi) - 0.5 * c.dot(s * c);
  };

  auto profile_phi = [&](const Eigen::VectorXd& c) {
    Eigen::VectorXd eta = x * c;
    auto f = [&](double log_phi) { return nb_log_lik(y, eta, std::exp(log_phi)); };
    double lo = std::log(1e-2), hi = std::log(opts.phi_max);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
    double f1 = f(c1), f2 = f(c2);
    for (int it = 0; it < 80 && (b - a) > 1e-4; ++it) {
      if (f1 < f2) {
        a = c1;
        c1 = c2;
        f1 = f2;
        c2 = a + gr * (b - a);
        f2 = f(c2);
      } else {
        b = c2;
        c2 = c1;
        f2 = f1;
        c1 = b - gr * (b - a);
        f1 = f(c1);
      }
    }
    return std::exp(0.5 * (a + b));
  };

  double prev_pll = -std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < 40; ++outer) {
    // coefficient step: Fisher scoring with step halving
    for (int it = 0; it < opts.max_inner_iterations; ++it) {
      Eigen::VectorXd eta = x * fit.coef;
      Eigen::VectorXd mu = eta.array().exp();
      Eigen::VectorXd g(n), w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        g(i) = fit.phi * (y(i) - mu(i)) / (mu(i) + fit.phi);
        w(i) = fit.phi * mu(i) / (mu(i) + fit.phi);
      }
      Eigen::VectorXd grad = x.transpose() * g - s * fit.coef;
      fit.grad_norm = grad.lpNorm<Eigen::Infinity>();
      Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x + s;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() != Eigen::Success) {
        throw ConvergenceError("expected model: information matrix not positive definite",
                               fit.grad_norm);
      }
      Eigen::VectorXd delta = ldlt.solve(grad);
      double base = penalized(fit.coef, fit.phi);
      double step = 1.0;
      Eigen::VectorXd cand;
      bool improved = false;
      for (int half = 0; half < 30; ++half) {
        cand = fit.coef + step * delta;
        if (penalized(cand, fit.phi) >= base - 1e-12) {
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
      double move = (cand - fit.coef).lpNorm<Eigen::Infinity>();
      fit.coef = cand;
      if (move < 1e-10 && fit.grad_norm < 1e-6 * (1.0 + std::abs(base))) break;
    }
    double new_phi = profile_phi(fit.coef);
    double rel = std::abs(std::log(new_phi) - std::log(fit.phi));
    fit.phi = new_phi;
    double pll = penalized(fit.coef, fit.phi);
    if (rel < 1e-6 && std::abs(pll - prev_pll) < 1e-9 * (1.0 + std::abs(pll))) {
      fit.converged = true;
      prev_pll = pll;
      break;
    }
    prev_pll = pll;
  }
  fit.penalized_ll = prev_pll;
  fit.log_lik = nb_log_lik(y, x * fit.coef, fit.phi);

  // final information matrix at the optimum
  Eigen::VectorXd eta = x * fit.coef;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = std::exp(eta(i));
    w(i) = fit.phi * mu / (mu + fit.phi);
  }
  fit.hessian = x.transpose() * w.asDiagonal() * x + s;
  return fit;
}

// Laplace-approximate restricted marginal likelihood for the smoothing
// parameters, with phi at its profiled value.
double reml_criterion(const InnerFit& fit, const std::vector<PenaltyBlock>& blocks, Eigen::Index p) {
  double log_pen_det = 0.0;
  int pen_rank = 0;
  for (const auto& b : blocks) {
    log_pen_det += b.rank * std::log(b.lambda) + b.log_gdet;
    pen_rank += b.rank;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.hessian);
  double log_h_det = 0.0;
  for (Eigen::Index i = 0; i < fit.hessian.rows(); ++i) {
    log_h_det += std::log(std::max(ldlt.vectorD()(i), 1e-300));
  }
  double null_dim = static_cast<double>(p - pen_rank);
  return fit.penalized_ll + 0.5 * log_pen_det - 0.5 * log_h_det + 0.5 * null_dim * std::log(2.0 * kPi);
}

struct RemlResult {
  InnerFit fit;
  std::vector<double> lambda;
};

RemlResult select_smoothing(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                            std::vector<PenaltyBlock> blocks, const ExpectedOptions& opts,
                            const std::vector<std::optional<double>>& fixed) {
  RemlResult best;
  if (blocks.empty()) {
    best.fit = fit_inner(y, x, blocks, opts, Eigen::VectorXd(), 10.0);
    return best;
  }

  std::vector<bool> is_fixed(blocks.size(), false);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b < fixed.size() && fixed[b].has_value()) {
      blocks[b].lambda = *fixed[b];
      is_fixed[b] = true;
    }
  }

  auto evaluate = [&](const std::vector<double>& log10_lambda, Eigen::VectorXd warm,
                      double phi_warm) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (!is_fixed[b]) blocks[b].lambda = std::pow(10.0, log10_lambda[b]);
    }
    InnerFit f = fit_inner(y, x, blocks, opts, std::move(warm), phi_warm);
    return std::pair<double, InnerFit>(reml_criterion(f, blocks, x.cols()), std::move(f));
  };

  std::vector<double> grid = {-2.0, 0.0, 2.0, 4.0, 6.0, 8.0};
  std::vector<std::size_t> free_idx;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!is_fixed[b]) free_idx.push_back(b);
  }

  std::vector<double> cur(blocks.size(), 2.0);
  double best_v = -std::numeric_limits<double>::infinity();
  InnerFit best_fit;
  if (free_idx.empty()) {
    auto [v, f] = evaluate(cur, Eigen::VectorXd(), 10.0);
    best_v = v;
    best_fit = std::move(f);
  } else if (free_idx.size() == 1) {
    for (double g : grid) {
      cur[free_idx[0]] = g;
      auto [v, f] = evaluate(cur, Eigen::VectorXd(), 10.0);
      if (v > best_v) {
        best_v = v;
        best_fit = std::move(f);
        best.lambda = cur;
      }
    }
    cur = best.lambda;
  } else {
    for (double g0 : grid) {
      for (double g1 : grid) {
        cur[free_idx[0]] = g0;
        cur[free_idx[1]] = g1;
        auto [v, f] = evaluate(cur, Eigen::VectorXd(), 10.0);
        if (v > best_v) {
          best_v = v;
          best_fit = std::move(f);
          best.lambda = cur;
        }
      }
    }
    cur = best.lambda;
  }

  // golden-section refinement, coordinate-wise
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<double> best_cur = cur;
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (std::size_t bi : free_idx) {
      double a = cur[bi] - 1.5, b = cur[bi] + 1.5;
      double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
      auto val_at = [&](double g) {
        auto tmp = cur;
        tmp[bi] = g;
        return evaluate(tmp, best_fit.coef, best_fit.phi).first;
      };
      double f1 = val_at(c1), f2 = val_at(c2);
      for (int it = 0; it < 40 && (b - a) > 0.02; ++it) {
        if (f1 < f2) {
          a = c1;
          c1 = c2;
          f1 = f2;
          c2 = a + gr * (b - a);
          f2 = val_at(c2);
        } else {
          b = c2;
          c2 = c1;
          f2 = f1;
          c1 = b - gr * (b - a);
          f1 = val_at(c1);
        }
      }
      cur[bi] = 0.5 * (a + b);
      auto [v, f] = evaluate(cur, best_fit.coef, best_fit.phi);
      if (v > best_v) {
        best_v = v;
        best_fit = std::move(f);
        best_cur = cur;
      } else {
        cur = best_cur;
      }
    }
  }

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!is_fixed[b]) blocks[b].lambda = std::pow(10.0, best_cur[b]);
  }
  best.fit = std::move(best_fit);
  best.lambda.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) best.lambda[b] = blocks[b].lambda;
  return best;
}

struct DesignInfo {
  Eigen::MatrixXd x;
  std::vector<PenaltyBlock> blocks;
  std::optional<BSplineBasis> trend_basis;
  Eigen::MatrixXd trend_z;
  std::optional<CyclicSplineBasis> seasonal_basis;
  Eigen::MatrixXd seasonal_z;
  int trend_col = 1;
  int seasonal_col = 0;
  double trend_center = 0.0;
  std::optional<std::size_t> trend_block_index;  // index into blocks
};

// Build [intercept | trend | seasonal] with sum-to-zero constraints on
// each smooth over the data rows.
DesignInfo build_design(const Eigen::VectorXd& year_idx, const Eigen::VectorXd* months,
                        double max_pred_year, TrendKind trend_kind, const ExpectedOptions& opts) {
  DesignInfo d;
  const Eigen::Index n = year_idx.size();
  int p_total = 1;

  Eigen::MatrixXd trend_cols;
  if (trend_kind == TrendKind::Spline) {
    double lo = 1.0;
    double hi = std::max(max_pred_year, lo + 1.0);
    int n_seg = std::min(static_cast<int>(std::lround(hi - lo)) + 1, opts.max_trend_segments);
    n_seg = std::max(n_seg, 2);
    d.trend_basis.emplace(lo, hi, n_seg);
    Eigen::MatrixXd b = d.trend_basis->design(year_idx);
    Eigen::VectorXd w = b.colwise().sum();
    d.trend_z = constraint_null_basis(w);
    trend_cols = b * d.trend_z;
    PenaltyBlock blk;
    blk.s = d.trend_z.transpose() * d.trend_basis->penalty() * d.trend_z;
    auto gd = generalized_log_det(blk.s);
    blk.log_gdet = gd.log_det;
    blk.rank = gd.rank;
    blk.dim = static_cast<int>(trend_cols.cols());
    d.trend_block_index = 0;
    d.blocks.push_back(std::move(blk));
  } else {
    d.trend_center = year_idx.mean();
    trend_cols = year_idx.array() - d.trend_center;
  }
  d.trend_col = p_total;
  p_total += static_cast<int>(trend_cols.cols());

  Eigen::MatrixXd seasonal_cols;
  if (months != nullptr) {
    d.seasonal_basis.emplace(12.0, opts.seasonal_basis_dim);
    Eigen::VectorXd mx = months->array() - 1.0;  // month m -> position in [0, 12)
    Eigen::MatrixXd b = d.seasonal_basis->design(mx);
    Eigen::VectorXd w = b.colwise().sum();
    d.seasonal_z = constraint_null_basis(w);
    seasonal_cols = b * d.seasonal_z;
    PenaltyBlock blk;
    blk.s = d.seasonal_z.transpose() * d.seasonal_basis->penalty() * d.seasonal_z;
    auto gd = generalized_log_det(blk.s);
    blk.log_gdet = gd.log_det;
    blk.rank = gd.rank;
    blk.dim = static_cast<int>(seasonal_cols.cols());
    d.blocks.push_back(std::move(blk));
    d.seasonal_col = p_total;
    p_total += static_cast<int>(seasonal_cols.cols());
  }

  d.x = Eigen::MatrixXd::Zero(n, p_total);
  d.x.col(0).setOnes();
  d.x.block(0, d.trend_col, n, trend_cols.cols()) = trend_cols;
  if (months != nullptr) {
    d.x.block(0, d.seasonal_col, n, seasonal_cols.cols()) = seasonal_cols;
  }
  int col = 0;
  for (auto& blk : d.blocks) {
    blk.start = (col == 0 && d.trend_block_index.has_value()) ? d.trend_col : d.seasonal_col;
    ++col;
  }
  return d;
}

Eigen::RowVectorXd prediction_row(const ExpectedFit& fit, double year_index, double month) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(fit.coef.size());
  row(0) = 1.0;
  if (fit.trend_kind == TrendKind::Spline) {
    Eigen::RowVectorXd b = fit.trend_basis->eval(year_index);
    row.segment(fit.trend_col, fit.trend_z.cols()) = b * fit.trend_z;
  } else {
    row(fit.trend_col) = year_index - fit.trend_center;
  }
  if (fit.seasonal_basis.has_value()) {
    Eigen::RowVectorXd b = fit.seasonal_basis->eval(month - 1.0);
    row.segment(fit.seasonal_col, fit.seasonal_z.cols()) = b * fit.seasonal_z;
  }
  return row;
}

ExpectedFit finish_fit(const std::string& iso3, Granularity gran, TrendKind trend_kind,
                       DesignInfo&& design, RemlResult&& reml, int first_year,
                       const std::vector<std::pair<double, double>>& pred_points) {
  if (!reml.fit.converged) {
    throw ConvergenceError("expected model did not converge for " + iso3, reml.fit.grad_norm);
  }
  ExpectedFit fit;
  fit.iso3 = iso3;
  fit.granularity = gran;
  fit.trend_kind = trend_kind;
  fit.overdispersion = reml.fit.phi;
  fit.log_likelihood = reml.fit.log_lik;
  fit.coef = reml.fit.coef;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reml.fit.hessian);
  fit.coef_cov = ldlt.solve(Eigen::MatrixXd::Identity(fit.coef.size(), fit.coef.size()));
  fit.first_year = first_year;
  fit.trend_center = design.trend_center;
  fit.trend_basis = design.trend_basis;
  fit.trend_z = design.trend_z;
  fit.seasonal_basis = design.seasonal_basis;
  fit.seasonal_z = design.seasonal_z;
  fit.trend_col = design.trend_col;
  fit.seasonal_col = design.seasonal_col;
  std::size_t li = 0;
  if (design.trend_block_index.has_value()) {
    fit.lambda_trend = li < reml.lambda.size() ? reml.lambda[li] : 0.0;
    ++li;
  }
  if (design.seasonal_basis.has_value()) {
    fit.lambda_seasonal = li < reml.lambda.size() ? reml.lambda[li] : 0.0;
  }

  for (const auto& [year_index, month] : pred_points) {
    Eigen::RowVectorXd row = prediction_row(fit, year_index, month);
    double eta = row.dot(fit.coef);
    double var = row * fit.coef_cov * row.transpose();
    fit.eta_hat.push_back(eta);
    fit.sigma_hat.push_back(std::sqrt(std::max(var, 0.0)));
  }
  return fit;
}

}  // namespace

ExpectedFit fit_monthly_expected(const HistoricSeries& history, const ExpectedOptions& opts) {
  const int n = history.n_monthly();
  if (n < 24) {
    throw ValidationError("country " + history.iso3 + ": need >= 24 historic months, have " +
                          std::to_string(n));
  }
  TrendKind kind = opts.trend_kind;
  if (opts.trend_kind == TrendKind::Spline && n < 36) kind = TrendKind::Linear;

  int first_year = history.monthly.front().year;
  Eigen::VectorXd y(n), year_idx(n), months(n);
  double y_max = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& m = history.monthly[i];
    y(i) = static_cast<double>(m.count);
    year_idx(i) = m.year - first_year + 1;
    months(i) = m.month;
    y_max = std::max(y_max, y(i));
  }
  if (y_max <= 0.0) throw ValidationError("country " + history.iso3 + ": all-zero history");

  double max_pred_year = (opts.prediction_start_year + 1) - first_year + 1;
  DesignInfo design = build_design(year_idx, &months, max_pred_year, kind, opts);

  std::vector<std::optional<double>> fixed;
  if (kind == TrendKind::Spline) {
    fixed.push_back(opts.fixed_lambda_trend);
  }
  fixed.push_back(opts.fixed_lambda_seasonal);
  RemlResult reml = select_smoothing(y, design.x, design.blocks, opts, fixed);

  std::vector<std::pair<double, double>> pred_points;
  for (int t = 1; t <= kPandemicMonths; ++t) {
    double yi = (opts.prediction_start_year + CountryMonthKey::year_index_of(t) - 1) - first_year + 1;
    pred_points.emplace_back(yi, static_cast<double>(CountryMonthKey::month_of(t)));
  }
  return finish_fit(history.iso3, Granularity::Monthly, kind, std::move(design), std::move(reml),
                    first_year, pred_points);
}

ExpectedFit fit_annual_expected(const HistoricSeries& history, const ExpectedOptions& opts) {
  const int n_years = static_cast<int>(history.annual.size());
  if (n_years < 2) {
    throw ValidationError("country " + history.iso3 + ": need >= 2 historic years, have " +
                          std::to_string(n_years));
  }
  TrendKind kind = opts.trend_kind;
  if (opts.trend_kind == TrendKind::Spline && n_years < 3) kind = TrendKind::Linear;

  int first_year = history.annual.begin()->first;
  Eigen::VectorXd y(n_years), year_idx(n_years);
  double y_max = 0.0;
  int i = 0;
  for (const auto& [year, count] : history.annual) {
    y(i) = static_cast<double>(count);
    year_idx(i) = year - first_year + 1;
    y_max = std::max(y_max, y(i));
    ++i;
  }
  if (y_max <= 0.0) throw ValidationError("country " + history.iso3 + ": all-zero history");

  double max_pred_year = (opts.prediction_start_year + 1) - first_year + 1;
  DesignInfo design = build_design(year_idx, nullptr, max_pred_year, kind, opts);

  std::vector<std::optional<double>> fixed;
  if (kind == TrendKind::Spline) fixed.push_back(opts.fixed_lambda_trend);
  RemlResult reml = select_smoothing(y, design.x, design.blocks, opts, fixed);

  std::vector<std::pair<double, double>> pred_points;
  for (int v = 1; v <= 2; ++v) {
    double yi = (opts.prediction_start_year + v - 1) - first_year + 1;
    pred_points.emplace_back(yi, 1.0);
  }
  return finish_fit(history.iso3, Granularity::Annual, kind, std::move(design), std::move(reml),
                    first_year, pred_points);
}

LogPrediction predict_log_expected(const ExpectedFit& fit, int index) {
  int n = static_cast<int>(fit.eta_hat.size());
  if (index < 1 || index > n) {
    throw std::out_of_range("prediction index " + std::to_string(index) + " outside 1.." +
                            std::to_string(n));
  }
  return {fit.eta_hat[index - 1], fit.sigma_hat[index - 1]};
}

double seasonal_component(const ExpectedFit& fit, double m) {
  if (!fit.seasonal_basis.has_value()) return 0.0;
  Eigen::RowVectorXd b = fit.seasonal_basis->eval(m - 1.0);
  Eigen::RowVectorXd row = b * fit.seasonal_z;
  return row.dot(fit.coef.segment(fit.seasonal_col, fit.seasonal_z.cols()));
}

double trend_component(const ExpectedFit& fit, double year_index) {
  if (fit.trend_kind == TrendKind::Spline) {
    Eigen::RowVectorXd b = fit.trend_basis->eval(year_index);
    Eigen::RowVectorXd row = b * fit.trend_z;
    return row.dot(fit.coef.segment(fit.trend_col, fit.trend_z.cols()));
  }
  return fit.coef(fit.trend_col) * (year_index - fit.trend_center);
}

}  // namespace excess
