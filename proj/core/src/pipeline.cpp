#include "excess/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "excess/draws_io.hpp"
#include "excess/errors.hpp"
#include "excess/expected_engine.hpp"
#include "excess/seasonal.hpp"
#include "excess/stats.hpp"
#include "excess/validation.hpp"

namespace excess {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_file_bytes(path)); }

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  Dataset data;
  auto region_table = CsvTable::read_file(dir + "/region.csv");
  data.population = ingest_population(CsvTable::read_file(dir + "/population.csv"), region_table);
  for (const auto& [iso, meta] : data.population.meta) data.countries.push_back(iso);

  data.mortality = ingest_mortality(CsvTable::read_file(dir + "/mortality.csv"), data.countries);
  data.covariates = ingest_covariates(CsvTable::read_file(dir + "/covariates.csv"));
  data.temperature = ingest_temperature(CsvTable::read_file(dir + "/temperature.csv"));
  if (fs::exists(dir + "/covid_reported.csv")) {
    data.reported = ingest_reported_covid(CsvTable::read_file(dir + "/covid_reported.csv"));
  }

  if (fs::exists(dir + "/subnational.csv")) {
    auto table = CsvTable::read_file(dir + "/subnational.csv");
    std::size_t c_iso = table.col("iso3");
    std::size_t c_region = table.col("region_id");
    std::size_t c_year = table.col("year");
    std::size_t c_month = table.col("month");
    std::size_t c_deaths = table.col("deaths");

    struct Cell {
      int year, month;
      std::string region;
      long long deaths;
    };
    std::map<std::string, std::vector<Cell>> cells;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
      long long deaths = table.int_field(i, c_deaths);
      if (deaths < 0) {
        throw ValidationError(table.source() + ":" + std::to_string(table.line_of(i)) +
                              ": negative subnational count");
      }
      cells[table.field(i, c_iso)].push_back({static_cast<int>(table.int_field(i, c_year)),
                                              static_cast<int>(table.int_field(i, c_month)),
                                              table.field(i, c_region), deaths});
    }
    for (auto& [iso, rows] : cells) {
      SubnationalPanel panel;
      panel.iso3 = iso;
      std::set<std::string> region_set;
      for (const auto& c : rows) region_set.insert(c.region);
      panel.region_ids.assign(region_set.begin(), region_set.end());
      std::map<std::string, int> region_index;
      for (std::size_t j = 0; j < panel.region_ids.size(); ++j) {
        region_index[panel.region_ids[j]] = static_cast<int>(j);
      }
      int k = panel.n_regions();

      std::map<std::pair<int, int>, SubnationalPanel::MonthRow> by_month;
      for (const auto& c : rows) {
        auto key = std::make_pair(c.year, c.month);
        auto [it, inserted] = by_month.try_emplace(key);
        if (inserted) {
          it->second.counts.assign(k, 0);
          it->second.available.assign(k, false);
        }
        it->second.counts[region_index[c.region]] = c.deaths;
        it->second.available[region_index[c.region]] = true;
      }

      // historic national totals come from the monthly mortality history
      std::map<std::pair<int, int>, long long> national;
      auto hist_it = data.mortality.historic.find(iso);
      if (hist_it != data.mortality.historic.end()) {
        for (const auto& m : hist_it->second.monthly) national[{m.year, m.month}] = m.count;
      }

      int hist_t = 0;
      for (auto& [ym, row] : by_month) {
        row.year = ym.first;
        row.month = ym.second;
        if (ym.first >= kFirstPandemicYear) {
          row.t = CountryMonthKey::t_of(ym.first - kFirstPandemicYear + 1, ym.second);
          panel.pandemic.push_back(row);
        } else {
          row.t = ++hist_t;
          auto nat = national.find(ym);
          if (nat != national.end()) {
            row.national_total = nat->second;
            row.national_observed = true;
          }
          panel.historic.push_back(row);
        }
      }
      data.subnational[iso] = std::move(panel);
    }
  }
  return data;
}

ModelSpec model_spec_from_config(const RunConfig& config) {
  ModelSpec spec;
  spec.time_varying = config.split_list(config.time_varying);
  spec.constant_covariates = config.split_list(config.constant_covariates);
  spec.income_interaction = config.income_interaction;
  spec.include_income_indicator = config.include_income_indicator;
  spec.pc_u = config.pc_u;
  spec.pc_alpha = config.pc_alpha;
  spec.fixed_effect_sd = config.fixed_effect_sd;
  return spec;
}

McmcConfig mcmc_from_config(const RunConfig& config) {
  McmcConfig mc;
  mc.chains = config.chains;
  mc.warmup = config.warmup;
  mc.keep = config.keep;
  mc.thin = config.thin;
  mc.rhat_max = config.rhat_max;
  mc.ess_min = config.ess_min;
  return mc;
}

void stage_expected(const Dataset& data, const RunConfig& config, const std::string& out_csv) {
  auto linear_override = config.linear_trend_list();
  CsvWriter out(out_csv);
  out.write_header({"iso3", "t", "eta_hat", "sigma_hat", "trend_kind", "granularity"});

  for (const auto& iso : data.countries) {
    auto hist_it = data.mortality.historic.find(iso);
    if (hist_it == data.mortality.historic.end()) {
      throw ValidationError("stage expected: no historic mortality for " + iso);
    }
    const HistoricSeries& hist = hist_it->second;
    ExpectedOptions opts;
    opts.seasonal_basis_dim = config.seasonal_basis_dim;
    opts.max_trend_segments = config.max_trend_segments;
    if (std::find(linear_override.begin(), linear_override.end(), iso) != linear_override.end()) {
      opts.trend_kind = TrendKind::Linear;
    }
    try {
      ExpectedFit fit = hist.granularity == Granularity::Monthly ? fit_monthly_expected(hist, opts)
                                                                 : fit_annual_expected(hist, opts);
      for (std::size_t i = 0; i < fit.eta_hat.size(); ++i) {
        out.write_row({iso, std::to_string(i + 1), CsvWriter::format_double(fit.eta_hat[i]),
                       CsvWriter::format_double(fit.sigma_hat[i]), to_string(fit.trend_kind),
                       fit.granularity == Granularity::Monthly ? "monthly" : "annual"});
      }
    } catch (const std::exception& e) {
      throw ValidationError("stage expected: country " + iso + ": " + e.what());
    }
  }
  out.close();
}

void stage_seasonal(const Dataset& data, const RunConfig& config, const std::string& out_json) {
  (void)config;
  std::vector<CountryYearCells> cells;
  for (const auto& [iso, hist] : data.mortality.historic) {
    if (hist.granularity != Granularity::Monthly) continue;
    auto temp_it = data.temperature.by_country_year.find(iso);
    if (temp_it == data.temperature.by_country_year.end()) continue;
    std::map<int, CountryYearCells> by_year;
    for (const auto& m : hist.monthly) {
      auto ty = temp_it->second.find(m.year);
      if (ty == temp_it->second.end()) continue;
      auto present_it = data.temperature.present.at(iso).find(m.year);
      if (present_it == data.temperature.present.at(iso).end() ||
          !present_it->second[m.month - 1]) {
        continue;
      }
      auto& cy = by_year[m.year];
      cy.iso3 = iso;
      cy.year = m.year;
      cy.temperature[m.month - 1] = ty->second[m.month - 1];
      cy.count[m.month - 1] = m.count;
      cy.active[m.month - 1] = true;
    }
    for (auto& [year, cy] : by_year) cells.push_back(cy);
  }

  bool annual_countries_present = false;
  for (const auto& [iso, hist] : data.mortality.historic) {
    if (hist.granularity == Granularity::Annual) annual_countries_present = true;
  }

  json out;
  if (cells.empty()) {
    if (annual_countries_present) {
      throw ValidationError(
          "stage seasonal: no monthly country-years with temperatures, but annual-history "
          "countries need the temperature model");
    }
    out = {{"beta", 0.0}, {"beta_sd", 0.0}, {"country_years", 0}};
  } else {
    TemperatureModel model = fit_temperature_model(cells);
    out = {{"beta", model.beta}, {"beta_sd", model.beta_sd}, {"country_years", model.country_years}};
  }
  std::ofstream f(out_json);
  f << out.dump(2) << "\n";
}

ExpectedDistribution stage_gamma(const Dataset& data, const RunConfig& config,
                                 const std::string& expected_csv, const std::string& seasonal_json,
                                 const std::string& out_csv) {
  auto table = CsvTable::read_file(expected_csv);
  std::size_t c_iso = table.col("iso3");
  std::size_t c_t = table.col("t");
  std::size_t c_eta = table.col("eta_hat");
  std::size_t c_sigma = table.col("sigma_hat");
  std::size_t c_kind = table.col("trend_kind");
  std::size_t c_gran = table.col("granularity");

  json seasonal = json::parse(read_file_bytes(seasonal_json));
  TemperatureModel temp_model;
  temp_model.beta = seasonal.at("beta").get<double>();
  temp_model.beta_sd = seasonal.at("beta_sd").get<double>();

  struct Row {
    int t;
    double eta, sigma;
    std::string kind;
    bool annual;
  };
  std::map<std::string, std::vector<Row>> rows;
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    rows[table.field(i, c_iso)].push_back({static_cast<int>(table.int_field(i, c_t)),
                                           table.double_field(i, c_eta),
                                           table.double_field(i, c_sigma), table.field(i, c_kind),
                                           table.field(i, c_gran) == "annual"});
  }

  GammaOptions gopts;
  gopts.samples = config.gamma_samples;

  ExpectedDistribution dist;
  CsvWriter out(out_csv);
  out.write_header({"iso3", "t", "eta_hat", "sigma_hat", "trend_kind", "granularity", "E_hat",
                    "tau_hat"});
  for (const auto& [iso, country_rows] : rows) {
    Rng rng = Rng::stream(config.seed, "gamma", iso);
    auto& arr = dist.by_country[iso];
    if (!country_rows.front().annual) {
      if (country_rows.size() != kPandemicMonths) {
        throw ValidationError("stage gamma: " + iso + ": expected 24 monthly rows");
      }
      for (const auto& row : country_rows) {
        arr[row.t - 1] = gamma_from_monthly(row.eta, row.sigma, gopts, rng);
        out.write_row({iso, std::to_string(row.t), CsvWriter::format_double(row.eta),
                       CsvWriter::format_double(row.sigma), row.kind, "monthly",
                       CsvWriter::format_double(arr[row.t - 1].e_hat),
                       CsvWriter::format_double(arr[row.t - 1].tau_hat)});
      }
    } else {
      if (country_rows.size() != 2) {
        throw ValidationError("stage gamma: " + iso + ": expected 2 annual rows");
      }
      auto temp_it = data.temperature.by_country_year.find(iso);
      for (const auto& row : country_rows) {
        int year = kFirstPandemicYear + row.t - 1;
        if (temp_it == data.temperature.by_country_year.end() ||
            !temp_it->second.count(year)) {
          throw ValidationError("stage gamma: " + iso + ": missing pandemic temperatures for " +
                                std::to_string(year));
        }
        auto months = gamma_from_annual(row.eta, row.sigma, temp_model,
                                        temp_it->second.at(year), gopts, rng);
        for (int m = 1; m <= 12; ++m) {
          int t = CountryMonthKey::t_of(row.t, m);
          arr[t - 1] = months[m - 1];
          out.write_row({iso, std::to_string(t), CsvWriter::format_double(row.eta),
                         CsvWriter::format_double(row.sigma), row.kind, "annual",
                         CsvWriter::format_double(arr[t - 1].e_hat),
                         CsvWriter::format_double(arr[t - 1].tau_hat)});
        }
      }
    }
  }
  out.close();
  return dist;
}

ExpectedDistribution load_expected_gamma(const std::string& csv_path) {
  auto table = CsvTable::read_file(csv_path);
  std::size_t c_iso = table.col("iso3");
  std::size_t c_t = table.col("t");
  std::size_t c_e = table.col("E_hat");
  std::size_t c_tau = table.col("tau_hat");
  ExpectedDistribution dist;
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    int t = static_cast<int>(table.int_field(i, c_t));
    auto& g = dist.by_country[table.field(i, c_iso)][t - 1];
    g.e_hat = table.double_field(i, c_e);
    g.tau_hat = table.double_field(i, c_tau);
  }
  return dist;
}

namespace {

struct PipelineContext {
  const RunConfig& config;
  Dataset& data;
  std::string run_dir;
  ExpectedDistribution expected;
  CovariatePanel standardized;  // covariates after imputation/scaling
  std::vector<std::string> fit_countries;
  CovariateFitData fit_data;
  PosteriorDraws draws;
  AcmDraws acm;
  std::ofstream log;
};

// deterministic, cheap preprocessing shared by the fit and its reload path
void prepare_covariate_inputs(PipelineContext& ctx) {
  ModelSpec spec = model_spec_from_config(ctx.config);
  ctx.standardized = ctx.data.covariates;

  StandardizeOptions sopts;
  for (const auto& [iso, series] : ctx.data.mortality.pandemic) {
    if (series.tier == Tier::FullNational || series.tier == Tier::PartialNational) {
      sopts.fitting_countries.push_back(iso);
      if (series.tier == Tier::PartialNational) {
        sopts.observed_prefix[iso] = series.observed_prefix();
      }
    }
  }
  std::sort(sopts.fitting_countries.begin(), sopts.fitting_countries.end());
  ctx.fit_countries = sopts.fitting_countries;
  auto report = standardize_covariates(ctx.standardized, ctx.data.population, sopts);
  for (const auto& w : report.warnings) ctx.log << "warning: " << w << "\n";

  ctx.fit_data = build_fit_data(ctx.data.mortality.pandemic, ctx.expected, ctx.standardized,
                                ctx.data.population, spec, ctx.fit_countries);
}

void load_covariate_draws(PipelineContext& ctx) {
  DrawsFile df = DrawsFile::read(ctx.run_dir + "/draws.bin");
  json meta = json::parse(read_file_bytes(ctx.run_dir + "/draws_meta.json"));
  PosteriorDraws d;
  d.path_names = meta.at("path_names").get<std::vector<std::string>>();
  d.fixed_names = meta.at("fixed_names").get<std::vector<std::string>>();
  d.fixed = df.matrix("fixed");
  d.n_draws = static_cast<int>(d.fixed.rows());
  d.sigma_beta = df.matrix("sigma_beta");
  d.sigma_eps = df.vector("sigma_eps");
  for (const auto& p : d.path_names) d.beta.push_back(df.matrix("beta/" + p));
  d.theta_mean = df.vector("theta_mean");
  d.theta_sq_mean = df.vector("theta_sq_mean");
  for (const auto& name : df.names()) {
    if (name.rfind("eps/", 0) != 0) continue;
    auto at = name.find('@');
    std::string iso = name.substr(4, at - 4);
    int t = std::stoi(name.substr(at + 1));
    int cell = ctx.fit_data.cell_index(iso, t);
    if (cell >= 0) d.eps_draws[cell] = df.matrix(name).transpose();
  }
  ctx.draws = std::move(d);
}

void covariate_stage(PipelineContext& ctx) {
  ModelSpec spec = model_spec_from_config(ctx.config);
  FitModelOptions fopts;
  fopts.mcmc = mcmc_from_config(ctx.config);
  for (const auto& iso : ctx.fit_countries) {
    const auto& series = ctx.data.mortality.pandemic.at(iso);
    if (series.tier == Tier::PartialNational) {
      int cell = ctx.fit_data.cell_index(iso, series.observed_prefix());
      if (cell >= 0) fopts.keep_eps_cells.push_back(cell);
    }
  }
  ctx.draws = fit_model(ctx.fit_data, spec, fopts, ctx.config.seed);

  // persist draws + metadata
  DrawsFile df;
  df.put_matrix("fixed", ctx.draws.fixed);
  df.put_matrix("sigma_beta", ctx.draws.sigma_beta);
  df.put_vector("sigma_eps", ctx.draws.sigma_eps);
  for (std::size_t p = 0; p < ctx.draws.beta.size(); ++p) {
    df.put_matrix("beta/" + ctx.draws.path_names[p], ctx.draws.beta[p]);
  }
  for (const auto& [cell, vec] : ctx.draws.eps_draws) {
    const auto& c = ctx.fit_data.cells[cell];
    df.put_matrix("eps/" + ctx.fit_data.countries[c.country] + "@" + std::to_string(c.t),
                  vec.transpose());
  }
  df.put_vector("theta_mean", ctx.draws.theta_mean);
  df.put_vector("theta_sq_mean", ctx.draws.theta_sq_mean);
  df.write(ctx.run_dir + "/draws.bin");

  json meta;
  meta["path_names"] = ctx.draws.path_names;
  meta["fixed_names"] = ctx.draws.fixed_names;
  json diag = json::array();
  for (const auto& d : ctx.draws.diagnostics) {
    diag.push_back({{"name", d.name}, {"rhat", d.rhat}, {"ess", d.ess}});
  }
  meta["diagnostics"] = diag;
  std::ofstream mf(ctx.run_dir + "/draws_meta.json");
  mf << meta.dump(2) << "\n";
}

void predict_stage(PipelineContext& ctx) {
  ModelSpec spec = model_spec_from_config(ctx.config);
  const int s_use = ctx.config.summary_draws;
  ctx.acm.n_draws = s_use;

  for (const auto& iso : ctx.data.countries) {
    const MortalitySeries& series = ctx.data.mortality.pandemic.at(iso);
    Rng rng = Rng::stream(ctx.config.seed, "predict", iso);
    try {
      switch (series.tier) {
        case Tier::FullNational: {
          Eigen::MatrixXd y(kPandemicMonths, s_use);
          for (int t = 1; t <= kPandemicMonths; ++t) {
            y.row(t - 1).setConstant(static_cast<double>(series.values[t - 1].count));
          }
          ctx.acm.y[iso] = y;
          break;
        }
        case Tier::PartialNational: {
          CountryDesign design =
              build_country_design(ctx.standardized, ctx.data.population, spec, iso);
          auto pred = benchmark_partial(ctx.draws, ctx.fit_data, series, design, ctx.expected,
                                        s_use, rng);
          if (pred.benchmark_skipped_zero) {
            ctx.log << "warning: " << iso << ": last observed count is 0, benchmark skipped\n";
          }
          ctx.acm.y[iso] = pred.y_draws.transpose();
          break;
        }
        case Tier::NoData: {
          CountryDesign design =
              build_country_design(ctx.standardized, ctx.data.population, spec, iso);
          auto pred = predict_no_data(ctx.draws, design, ctx.expected, s_use, rng);
          ctx.acm.y[iso] = pred.y_draws.transpose();
          break;
        }
        case Tier::SubnationalOrAnnual: {
          CountryDesign design =
              build_country_design(ctx.standardized, ctx.data.population, spec, iso);
          auto base = predict_no_data(ctx.draws, design, ctx.expected, s_use, rng);
          Eigen::MatrixXd y = base.y_draws.transpose();  // fallback for uncovered months

          bool have_panel = ctx.data.subnational.count(iso) != 0;
          bool have_annual = !series.annual_totals.empty();

          if (have_panel && have_annual) {
            // China-style: anchors from the covariate prediction, DSP
            // fractions from the historic share fit, total preserved
            const SubnationalPanel& panel = ctx.data.subnational.at(iso);
            ShareModelOptions sh;
            sh.mcmc.chains = ctx.config.share_chains;
            sh.mcmc.warmup = ctx.config.share_warmup;
            sh.mcmc.keep = ctx.config.share_keep;
            auto share = fit_share_model(panel, sh, splitmix64(ctx.config.seed ^ fnv1a64(iso)));
            std::map<int, const SubnationalPanel::MonthRow*> pandemic_rows;
            for (const auto& row : panel.pandemic) pandemic_rows[row.t] = &row;

            for (const auto& [year, total] : series.annual_totals) {
              int v = year - kFirstPandemicYear + 1;
              if (v < 1 || v > 2) continue;
              std::vector<long long> z(12, 0);
              std::vector<double> anchors(12);
              bool have_z = false;
              for (int m = 1; m <= 12; ++m) {
                int t = CountryMonthKey::t_of(v, m);
                anchors[m - 1] = std::max(1.0, base.y_draws.col(t - 1).mean());
                auto row_it = pandemic_rows.find(t);
                if (row_it != pandemic_rows.end()) {
                  for (std::size_t j = 0; j < row_it->second->counts.size(); ++j) {
                    if (row_it->second->available[j]) {
                      z[m - 1] += row_it->second->counts[j];
                      have_z = true;
                    }
                  }
                }
              }
              std::vector<long long> start(12, total / 12);
              start[11] += total - 12 * (total / 12);
              double anchor_total = 0.0;
              for (double a : anchors) anchor_total += a;
              for (int m = 0; m < 12; ++m) {
                start[m] = std::max(z[m], static_cast<long long>(std::llround(
                                              total * anchors[m] / anchor_total)));
              }
              // repair the sum after the max() clamps
              long long drift = std::accumulate(start.begin(), start.end(), 0LL) - total;
              for (int m = 0; m < 12 && drift != 0; ++m) {
                long long room = start[m] - z[m];
                long long take = std::min(room, drift);
                if (drift > 0 && take > 0) {
                  start[m] -= take;
                  drift -= take;
                } else if (drift < 0) {
                  start[m] -= drift;  // add the deficit to this month
                  drift = 0;
                }
              }
              // logit share of the observed regions, with hyper draws
              // from the historic share posterior and latent month
              // effects inside the chain
              LatentFractionModel latent;
              latent.hyper = [&share](long long, Rng& r) {
                int pick = static_cast<int>(r.uniform_int(share.n_draws));
                auto probs = share.probabilities(pick, 0.0);
                double p_t = 0.0;
                for (std::size_t j = 0; j + 1 < probs.size(); ++j) p_t += probs[j];
                p_t = std::clamp(p_t, 1e-9, 1.0 - 1e-9);
                return std::make_pair(std::log(p_t / (1.0 - p_t)), share.sigma_e(pick));
              };
              auto supplier = [](long long, Rng&) { return std::vector<double>{}; };
              ConstrainedCountOptions cc;
              cc.iterations = ctx.config.constrained_iterations;
              cc.burnin = ctx.config.constrained_iterations / 10;
              cc.thin = std::max<long long>(1, (cc.iterations - cc.burnin) / (2 * s_use));
              auto res = constrained_count_mcmc(total, have_z ? z : std::vector<long long>{},
                                                anchors, supplier, start, cc,
                                                splitmix64(ctx.config.seed ^ (fnv1a64(iso) + v)),
                                                have_z ? &latent : nullptr);
              for (int m = 1; m <= 12; ++m) {
                int t = CountryMonthKey::t_of(v, m);
                for (int s = 0; s < s_use; ++s) {
                  int row = static_cast<int>(static_cast<long long>(s) * res.draws.rows() / s_use);
                  y(t - 1, s) = res.draws(row, m - 1);
                }
              }
            }
          } else if (have_panel) {
            const SubnationalPanel& full_panel = ctx.data.subnational.at(iso);
            ShareModelOptions sh;
            sh.mcmc.chains = ctx.config.share_chains;
            sh.mcmc.warmup = ctx.config.share_warmup;
            sh.mcmc.keep = ctx.config.share_keep;

            // annual-aggregate variant: historic national series is
            // annual-only, so the shares are fitted on yearly aggregates
            int monthly_rows = 0;
            for (const auto& row : full_panel.historic) {
              monthly_rows += row.national_observed ? 1 : 0;
            }
            SubnationalPanel panel = full_panel;
            if (monthly_rows < 12) {
              auto hist_it = ctx.data.mortality.historic.find(iso);
              if (hist_it == ctx.data.mortality.historic.end() || hist_it->second.annual.empty()) {
                throw ValidationError(iso + ": subnational panel without historic national totals");
              }
              panel = aggregate_historic_to_annual(full_panel, hist_it->second.annual);
              sh.min_historic_rows = 3;
            }
            auto share = fit_share_model(panel, sh, splitmix64(ctx.config.seed ^ fnv1a64(iso)));

            // trailing single-region months route to the AR1 tail model
            std::size_t tail_start = single_region_tail_start(panel.pandemic);
            std::vector<SubnationalPanel::MonthRow> head(panel.pandemic.begin(),
                                                         panel.pandemic.begin() + tail_start);
            // drop head months with no observed regions (covariate fallback)
            std::vector<SubnationalPanel::MonthRow> usable;
            for (const auto& row : head) {
              int avail = 0;
              for (bool a : row.available) avail += a ? 1 : 0;
              long long y_obs = 0;
              for (std::size_t j = 0; j < row.counts.size(); ++j) {
                if (row.available[j]) y_obs += row.counts[j];
              }
              if (avail > 0 && y_obs > 0) usable.push_back(row);
            }
            if (!usable.empty()) {
              auto pred = predict_national(share, usable, s_use, rng);
              for (std::size_t r = 0; r < usable.size(); ++r) {
                for (int s = 0; s < s_use; ++s) y(usable[r].t - 1, s) = pred.y_draws(s, r);
              }

              if (tail_start < panel.pandemic.size() && usable.size() >= 12) {
                // AR1 on log(Y/E) of the predicted head months
                std::vector<double> ratio, var;
                for (std::size_t r = 0; r < usable.size(); ++r) {
                  int t = usable[r].t;
                  double e_hat = ctx.expected.at(iso, t).e_hat;
                  std::vector<double> logs(s_use);
                  for (int s = 0; s < s_use; ++s) {
                    logs[s] = std::log(std::max(pred.y_draws(s, r), 1.0) / e_hat);
                  }
                  ratio.push_back(mean(logs));
                  var.push_back(sample_variance(logs));
                }
                int horizon = static_cast<int>(panel.pandemic.size() - tail_start);
                Ar1Options ar;
                ar.check_diagnostics = false;
                auto tail = ar1_tail_extrapolate(ratio, var, horizon, ar,
                                                 splitmix64(ctx.config.seed ^ fnv1a64(iso + "#ar1")));
                for (int h = 0; h < horizon; ++h) {
                  int t = panel.pandemic[tail_start + h].t;
                  double e_hat = ctx.expected.at(iso, t).e_hat;
                  for (int s = 0; s < s_use; ++s) {
                    int row = static_cast<int>(static_cast<long long>(s) * tail.ratio_draws.rows() /
                                               s_use);
                    y(t - 1, s) = std::round(e_hat * std::exp(tail.ratio_draws(row, h)));
                  }
                }
              }
            }
          } else if (have_annual) {
            auto pred = apportion_annual_country(ctx.draws, design, series.annual_totals,
                                                 ctx.expected, s_use, rng);
            for (int t = 1; t <= kPandemicMonths; ++t) {
              for (int s = 0; s < s_use; ++s) {
                double v = pred.y_draws(s, t - 1);
                if (!std::isnan(v)) y(t - 1, s) = v;
              }
            }
          }
          ctx.acm.y[iso] = y;
          break;
        }
      }
    } catch (const DiagnosticsError&) {
      throw;
    } catch (const std::exception& e) {
      throw ValidationError("stage predict: country " + iso + ": " + e.what());
    }
  }

  DrawsFile df;
  for (const auto& [iso, y] : ctx.acm.y) df.put_matrix("Y/" + iso, y);
  df.write(ctx.run_dir + "/predictions.bin");
}

void excess_stage(PipelineContext& ctx) {
  SummaryOptions sopts;
  sopts.point = ctx.config.point_estimate == "mean" ? PointEstimate::Mean : PointEstimate::Median;

  ExcessDraws excess = compute_excess(ctx.acm, ctx.expected, splitmix64(ctx.config.seed ^ 0xeeee));
  SummaryTable table =
      aggregate(excess, ctx.data.population,
                {GroupingLevel::Country, GroupingLevel::Region, GroupingLevel::Income,
                 GroupingLevel::Global},
                sopts);
  for (GroupingLevel level : {GroupingLevel::Country, GroupingLevel::Region, GroupingLevel::Global}) {
    table.append(excess_rate(excess, ctx.data.population, level, sopts));
    table.append(ratio_to_reported(excess, ctx.data.reported, ctx.data.population, level, sopts));
  }

  CsvWriter out(ctx.run_dir + "/summary.csv");
  out.write_header({"level", "key", "period", "point", "lo50", "hi50", "lo80", "hi80", "lo95",
                    "hi95"});
  for (const auto& row : table.rows) {
    if (!row.defined) {
      out.write_row({row.level, row.key, row.period, "", "", "", "", "", "", ""});
      continue;
    }
    out.write_row({row.level, row.key, row.period, CsvWriter::format_double(row.point),
                   CsvWriter::format_double(row.lo50), CsvWriter::format_double(row.hi50),
                   CsvWriter::format_double(row.lo80), CsvWriter::format_double(row.hi80),
                   CsvWriter::format_double(row.lo95), CsvWriter::format_double(row.hi95)});
  }
  out.close();

  // plot-ready long-format tables
  std::string plots = ctx.run_dir + "/plots";
  fs::create_directories(plots);
  {
    CsvWriter ts(plots + "/timeseries.csv");
    ts.write_header({"level", "key", "t", "point", "lo95", "hi95"});
    for (const auto& row : table.rows) {
      if (row.period == "cumulative" || !row.defined) continue;
      ts.write_row({row.level, row.key, row.period, CsvWriter::format_double(row.point),
                    CsvWriter::format_double(row.lo95), CsvWriter::format_double(row.hi95)});
    }
    ts.close();
  }
  {
    CsvWriter cum(plots + "/cumulative.csv");
    cum.write_header({"level", "key", "point", "lo95", "hi95"});
    for (const auto& row : table.rows) {
      if (row.period != "cumulative" || !row.defined) continue;
      cum.write_row({row.level, row.key, CsvWriter::format_double(row.point),
                     CsvWriter::format_double(row.lo95), CsvWriter::format_double(row.hi95)});
    }
    cum.close();
  }
  {
    auto rank = rank_countries(excess, ctx.data.population);
    CsvWriter rk(plots + "/rank_heatmap.csv");
    rk.write_header({"iso3", "rank", "probability"});
    for (std::size_t i = 0; i < rank.countries.size(); ++i) {
      for (int r = 0; r < rank.probability.cols(); ++r) {
        rk.write_row({rank.countries[i], std::to_string(r + 1),
                      CsvWriter::format_double(rank.probability(static_cast<int>(i), r))});
      }
    }
    rk.close();
  }

  json meta;
  meta["point_estimate"] = ctx.config.point_estimate;
  meta["draws"] = ctx.config.summary_draws;
  meta["rate_convention"] =
      "annualized: cumulative excess / person-years * 100000; person-years = sum of monthly "
      "population / 12";
  meta["variance_convention"] = "unbiased sample variance (n-1)";
  std::ofstream mf(ctx.run_dir + "/summary_meta.json");
  mf << meta.dump(2) << "\n";
}

}  // namespace

bool RunResult::stage_ran(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return !s.cached;
  }
  return false;
}

RunResult run_pipeline(const RunConfig& config) {
  RunResult result;
  result.run_dir = config.output_dir;
  fs::create_directories(result.run_dir);
  fs::create_directories(result.run_dir + "/logs");

  Dataset data = load_dataset(config.input_dir);

  PipelineContext ctx{config, data, result.run_dir, {}, {}, {}, {}, {}, {}, {}};
  ctx.log.open(result.run_dir + "/logs/stages.log", std::ios::app);

  // input hashes and the config snapshot
  std::map<std::string, std::uint64_t> input_hash;
  for (const char* name : {"mortality.csv", "covariates.csv", "population.csv", "region.csv",
                           "temperature.csv", "covid_reported.csv", "subnational.csv"}) {
    std::string path = config.input_dir + "/" + name;
    if (fs::exists(path)) input_hash[name] = file_hash(path);
  }
  {
    std::ofstream cf(result.run_dir + "/config.toml");
    cf << config.to_toml();
  }

  json manifest;
  std::string manifest_path = result.run_dir + "/manifest.json";
  if (fs::exists(manifest_path)) {
    manifest = json::parse(read_file_bytes(manifest_path));
  }
  json new_manifest;
  new_manifest["seed"] = config.seed;
  for (const auto& [name, h] : input_hash) new_manifest["inputs"][name] = hex(h);

  auto stage_fp = [&](const std::string& name, const std::vector<std::string>& files,
                      const std::string& cfg_bits, const std::string& upstream) {
    std::uint64_t h = fnv1a64(name);
    for (const auto& f : files) {
      h = fnv1a64(f, h);
      auto it = input_hash.find(f);
      h = splitmix64(h ^ (it != input_hash.end() ? it->second : 0));
    }
    h = fnv1a64(cfg_bits, h);
    h = fnv1a64(upstream, h);
    return hex(h);
  };
  auto cached_ok = [&](const std::string& stage, const std::string& fp,
                       const std::vector<std::string>& outputs) {
    if (!manifest.contains("stages") || !manifest["stages"].contains(stage)) return false;
    if (manifest["stages"][stage].get<std::string>() != fp) return false;
    for (const auto& out : outputs) {
      if (!fs::exists(result.run_dir + "/" + out)) return false;
    }
    return true;
  };
  auto note = [&](const std::string& stage, bool cached, const std::string& fp) {
    result.stages.push_back({stage, cached, fp});
    new_manifest["stages"][stage] = fp;
    ctx.log << stage << (cached ? " cached " : " run ") << fp << "\n";
  };

  // --- expected ---
  std::string fp_expected = stage_fp(
      "expected", {"mortality.csv"},
      std::to_string(config.seasonal_basis_dim) + "|" + std::to_string(config.max_trend_segments) +
          "|" + config.linear_trend_countries,
      "");
  if (cached_ok("expected", fp_expected, {"expected.csv"})) {
    note("expected", true, fp_expected);
  } else {
    stage_expected(data, config, result.run_dir + "/expected.csv");
    note("expected", false, fp_expected);
  }

  // --- seasonal ---
  std::string fp_seasonal = stage_fp("seasonal", {"mortality.csv", "temperature.csv"}, "", "");
  if (cached_ok("seasonal", fp_seasonal, {"seasonal.json"})) {
    note("seasonal", true, fp_seasonal);
  } else {
    stage_seasonal(data, config, result.run_dir + "/seasonal.json");
    note("seasonal", false, fp_seasonal);
  }

  // --- gamma ---
  std::string fp_gamma =
      stage_fp("gamma", {"temperature.csv"},
               std::to_string(config.gamma_samples) + "|" + std::to_string(config.seed),
               fp_expected + fp_seasonal);
  if (cached_ok("gamma", fp_gamma, {"expected_gamma.csv"})) {
    ctx.expected = load_expected_gamma(result.run_dir + "/expected_gamma.csv");
    note("gamma", true, fp_gamma);
  } else {
    ctx.expected = stage_gamma(data, config, result.run_dir + "/expected.csv",
                               result.run_dir + "/seasonal.json",
                               result.run_dir + "/expected_gamma.csv");
    note("gamma", false, fp_gamma);
  }

  // --- covariate fit + predictions + excess ---
  // The covariate fit and everything downstream share in-memory state;
  // caching operates on the whole chain.
  std::string cov_cfg = config.time_varying + "|" + config.constant_covariates + "|" +
                        std::to_string(config.chains) + "|" + std::to_string(config.warmup) + "|" +
                        std::to_string(config.keep) + "|" + std::to_string(config.seed) + "|" +
                        std::to_string(config.income_interaction);
  std::string fp_covariate = stage_fp(
      "covariate_fit", {"mortality.csv", "covariates.csv", "population.csv", "region.csv"},
      cov_cfg, fp_gamma);
  std::string fp_predict =
      stage_fp("predict", {"subnational.csv"},
               std::to_string(config.summary_draws) + "|" +
                   std::to_string(config.constrained_iterations),
               fp_covariate);
  std::string fp_excess = stage_fp("excess", {"covid_reported.csv", "population.csv"},
                                   config.point_estimate, fp_predict);

  bool cov_cached = cached_ok("covariate_fit", fp_covariate, {"draws.bin", "draws_meta.json"});
  bool pred_cached = cov_cached && cached_ok("predict", fp_predict, {"predictions.bin"});
  bool exc_cached = pred_cached && cached_ok("excess", fp_excess, {"summary.csv"});

  if (!(cov_cached && pred_cached && exc_cached)) {
    prepare_covariate_inputs(ctx);
  }
  if (cov_cached) {
    note("covariate_fit", true, fp_covariate);
  } else {
    covariate_stage(ctx);
    note("covariate_fit", false, fp_covariate);
  }
  if (pred_cached) {
    note("predict", true, fp_predict);
  } else {
    if (cov_cached) load_covariate_draws(ctx);
    predict_stage(ctx);
    note("predict", false, fp_predict);
  }
  if (exc_cached) {
    note("excess", true, fp_excess);
  } else {
    if (pred_cached) {
      DrawsFile df = DrawsFile::read(result.run_dir + "/predictions.bin");
      ctx.acm.n_draws = config.summary_draws;
      for (const auto& name : df.names()) {
        if (name.rfind("Y/", 0) == 0) ctx.acm.y[name.substr(2)] = df.matrix(name);
      }
    }
    excess_stage(ctx);
    note("excess", false, fp_excess);
  }

  std::ofstream mf(manifest_path);
  mf << new_manifest.dump(2) << "\n";
  return result;
}

}  // namespace excess
