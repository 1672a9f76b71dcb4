// excess-engine: estimate country-level excess mortality from
// heterogeneous ACM data. Subcommands mirror the pipeline stages; `run`
// executes the whole thing with stage caching.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "excess/csv.hpp"
#include "excess/draws_io.hpp"
#include "excess/errors.hpp"
#include "excess/pipeline.hpp"
#include "excess/synthetic.hpp"
#include "excess/validation.hpp"

namespace fs = std::filesystem;
using namespace excess;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDiagnostics = 3;

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::from_file(path);
}

int cmd_expected_fit(const std::string& history, const std::string& config_path,
                     const std::string& out) {
  RunConfig config = load_config(config_path);
  Dataset data;
  // a standalone invocation only needs mortality + the per-country option
  auto table = CsvTable::read_file(history);
  data.mortality = ingest_mortality(table);
  for (const auto& [iso, hist] : data.mortality.historic) data.countries.push_back(iso);
  stage_expected(data, config, out);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

int cmd_seasonal_fit(const std::string& history, const std::string& temps,
                     const std::string& config_path, const std::string& out) {
  RunConfig config = load_config(config_path);
  Dataset data;
  data.mortality = ingest_mortality(CsvTable::read_file(history));
  data.temperature = ingest_temperature(CsvTable::read_file(temps));
  stage_seasonal(data, config, out);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

int cmd_covariate_fit(const std::string& input_dir, const std::string& config_path,
                      const std::string& draws_out) {
  RunConfig config = load_config(config_path);
  config.input_dir = input_dir;
  config.output_dir = fs::path(draws_out).parent_path().empty()
                          ? "."
                          : fs::path(draws_out).parent_path().string();
  RunResult result = run_pipeline(config);
  fs::copy_file(result.run_dir + "/draws.bin", draws_out, fs::copy_options::overwrite_existing);
  std::printf("wrote %s\n", draws_out.c_str());
  return kExitOk;
}

int cmd_subnational_fit(const std::string& panel_path, const std::string& national_path,
                        const std::string& country, const std::string& config_path,
                        const std::string& out) {
  RunConfig config = load_config(config_path);
  Dataset data;
  data.mortality = ingest_mortality(CsvTable::read_file(national_path));

  // reuse the dataset loader's panel assembly through a scratch dir view
  auto table = CsvTable::read_file(panel_path);
  std::size_t c_iso = table.col("iso3");
  (void)c_iso;
  // assemble via load_dataset-equivalent path: simplest is a small local parse
  Dataset full;
  full.mortality = data.mortality;
  {
    std::size_t ci = table.col("iso3"), cr = table.col("region_id"), cy = table.col("year"),
                cm = table.col("month"), cd = table.col("deaths");
    std::map<std::string, int> region_index;
    SubnationalPanel panel;
    panel.iso3 = country;
    std::map<std::pair<int, int>, SubnationalPanel::MonthRow> by_month;
    std::vector<std::tuple<int, int, std::string, long long>> rows;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
      if (table.field(i, ci) != country) continue;
      rows.emplace_back(static_cast<int>(table.int_field(i, cy)),
                        static_cast<int>(table.int_field(i, cm)), table.field(i, cr),
                        table.int_field(i, cd));
      if (!region_index.count(table.field(i, cr))) {
        int idx = static_cast<int>(region_index.size());
        region_index[table.field(i, cr)] = idx;
        panel.region_ids.push_back(table.field(i, cr));
      }
    }
    if (rows.empty()) throw ValidationError("no subnational rows for " + country);
    int k = panel.n_regions();
    std::map<std::pair<int, int>, long long> national;
    auto hist_it = full.mortality.historic.find(country);
    if (hist_it != full.mortality.historic.end()) {
      for (const auto& m : hist_it->second.monthly) national[{m.year, m.month}] = m.count;
    }
    for (const auto& [year, month, region, deaths] : rows) {
      auto [it, inserted] = by_month.try_emplace({year, month});
      if (inserted) {
        it->second.counts.assign(k, 0);
        it->second.available.assign(k, false);
      }
      it->second.counts[region_index[region]] = deaths;
      it->second.available[region_index[region]] = true;
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

    ShareModelOptions sh;
    sh.mcmc.chains = config.share_chains;
    sh.mcmc.warmup = config.share_warmup;
    sh.mcmc.keep = config.share_keep;
    auto share = fit_share_model(panel, sh, config.seed);

    Rng rng = Rng::stream(config.seed, "subnational_cli", country);
    std::vector<SubnationalPanel::MonthRow> usable;
    for (const auto& row : panel.pandemic) {
      long long y_obs = 0;
      int avail = 0;
      for (std::size_t j = 0; j < row.counts.size(); ++j) {
        if (row.available[j]) {
          y_obs += row.counts[j];
          ++avail;
        }
      }
      if (avail > 0 && y_obs > 0) usable.push_back(row);
    }
    auto pred = predict_national(share, usable, config.summary_draws, rng);

    DrawsFile df;
    Eigen::MatrixXd y(kPandemicMonths, pred.y_draws.rows());
    y.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < usable.size(); ++r) {
      for (int s = 0; s < pred.y_draws.rows(); ++s) y(usable[r].t - 1, s) = pred.y_draws(s, r);
    }
    df.put_matrix("Y/" + country, y);
    df.put_matrix("alpha", share.alpha);
    df.put_vector("sigma_e", share.sigma_e);
    df.write(out);
    std::printf("wrote %s\n", out.c_str());
  }
  return kExitOk;
}

int cmd_excess_summarize(const std::string& input_dir, const std::string& config_path,
                         const std::string& out, const std::string& plots) {
  RunConfig config = load_config(config_path);
  config.input_dir = input_dir;
  if (!plots.empty()) {
    config.output_dir = fs::path(out).parent_path().empty()
                            ? "."
                            : fs::path(out).parent_path().string();
  }
  RunResult result = run_pipeline(config);
  if (fs::path(result.run_dir + "/summary.csv") != fs::path(out)) {
    fs::copy_file(result.run_dir + "/summary.csv", out, fs::copy_options::overwrite_existing);
  }
  if (!plots.empty()) {
    fs::create_directories(plots);
    for (const auto& entry : fs::directory_iterator(result.run_dir + "/plots")) {
      fs::copy_file(entry.path(), fs::path(plots) / entry.path().filename(),
                    fs::copy_options::overwrite_existing);
    }
  }
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

int cmd_validate_cv(const std::string& input_dir, const std::string& config_path,
                    const std::string& scheme_name, const std::string& out) {
  RunConfig config = load_config(config_path);
  config.input_dir = input_dir;
  CvScheme scheme;
  if (scheme_name == "country") {
    scheme = CvScheme::Country;
  } else if (scheme_name == "month") {
    scheme = CvScheme::Month;
  } else {
    throw ValidationError("unknown cv scheme: " + scheme_name + " (expected country|month)");
  }

  Dataset data = load_dataset(config.input_dir);
  RunConfig stage_cfg = config;
  stage_cfg.output_dir = out.empty() ? "cv_run" : out;
  fs::create_directories(stage_cfg.output_dir);
  stage_expected(data, stage_cfg, stage_cfg.output_dir + "/expected.csv");
  stage_seasonal(data, stage_cfg, stage_cfg.output_dir + "/seasonal.json");
  ExpectedDistribution expected =
      stage_gamma(data, stage_cfg, stage_cfg.output_dir + "/expected.csv",
                  stage_cfg.output_dir + "/seasonal.json", stage_cfg.output_dir + "/expected_gamma.csv");

  CovariatePanel panel = data.covariates;
  StandardizeOptions sopts;
  for (const auto& [iso, series] : data.mortality.pandemic) {
    if (series.tier == Tier::FullNational || series.tier == Tier::PartialNational) {
      sopts.fitting_countries.push_back(iso);
      if (series.tier == Tier::PartialNational) {
        sopts.observed_prefix[iso] = series.observed_prefix();
      }
    }
  }
  standardize_covariates(panel, data.population, sopts);

  CvOptions cv;
  cv.full_mcmc = mcmc_from_config(config);
  cv.fold_mcmc = cv.full_mcmc;
  cv.fold_mcmc.warmup = std::max(200, config.warmup / 5);
  cv.fold_mcmc.keep = std::max(500, config.keep / 2);
  cv.s_use = config.summary_draws;
  cv.max_folds = config.cv_max_folds;
  auto report = run_cv(data.mortality.pandemic, expected, panel, data.population,
                       model_spec_from_config(config), scheme, cv, config.seed);

  nlohmann::json j;
  j["scheme"] = scheme_name;
  j["coverage50"] = report.coverage50;
  j["coverage80"] = report.coverage80;
  j["coverage95"] = report.coverage95;
  j["relative_bias"] = report.relative_bias;
  j["absolute_relative_bias"] = report.absolute_relative_bias;
  j["rmse_x1000"] = report.rmse_x1000;
  j["skipped_folds"] = report.skipped_folds;
  std::ofstream jf(stage_cfg.output_dir + "/cv_report.json");
  jf << j.dump(2) << "\n";

  CsvWriter w(stage_cfg.output_dir + "/cv_cells.csv");
  w.write_header({"iso3", "t", "observed_rate", "predicted_rate", "lo95", "hi95", "hit95"});
  for (const auto& rec : report.records) {
    w.write_row({rec.iso3, std::to_string(rec.t), CsvWriter::format_double(rec.observed_rate),
                 CsvWriter::format_double(rec.predicted_rate),
                 CsvWriter::format_double(rec.lo95), CsvWriter::format_double(rec.hi95),
                 rec.hit95 ? "1" : "0"});
  }
  w.close();
  std::printf("cv %s: coverage50=%.3f coverage80=%.3f coverage95=%.3f rel_bias=%.4f rmse=%.4f\n",
              scheme_name.c_str(), report.coverage50, report.coverage80, report.coverage95,
              report.relative_bias, report.rmse_x1000);
  return kExitOk;
}

int cmd_validate_sims(const std::string& config_path, const std::string& out) {
  RunConfig config = load_config(config_path);
  SimulationSuiteOptions opts;
  opts.subnational_replications = config.sim_subnational_replications;
  opts.constrained_replications = config.sim_constrained_replications;
  opts.seed = config.seed;
  auto report = run_simulation_suite(opts);

  nlohmann::json j;
  j["subnational"] = {{"coverage95", report.subnational_coverage95},
                      {"cells", report.subnational_cells},
                      {"pass", report.subnational_pass}};
  j["constrained"] = {{"covered_median", report.constrained_covered_median},
                      {"acceptance", report.constrained_acceptance},
                      {"pass", report.constrained_pass}};
  j["gamma"] = {{"worst_ks", report.gamma_worst_ks}, {"pass", report.gamma_pass}};
  j["all_pass"] = report.all_pass();
  if (!out.empty()) {
    std::ofstream jf(out);
    jf << j.dump(2) << "\n";
  }
  std::printf("%s\n", j.dump(2).c_str());
  return report.all_pass() ? kExitOk : kExitDiagnostics;
}

int cmd_run(const std::string& config_path, const std::string& input_dir,
            const std::string& out_dir) {
  RunConfig config = load_config(config_path);
  if (!input_dir.empty()) config.input_dir = input_dir;
  if (!out_dir.empty()) config.output_dir = out_dir;
  RunResult result = run_pipeline(config);
  for (const auto& s : result.stages) {
    std::printf("%-14s %s\n", s.name.c_str(), s.cached ? "cached" : "run");
  }
  std::printf("run directory: %s\n", result.run_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"excess-engine: excess mortality estimation pipeline"};
  app.require_subcommand(1);

  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the default configuration and exit");

  // expected fit
  auto* expected = app.add_subcommand("expected", "no-crisis baseline models");
  auto* expected_fit = expected->add_subcommand("fit", "fit expected-death models");
  std::string ef_history, ef_config, ef_out = "expected.csv";
  expected_fit->add_option("--history", ef_history, "mortality.csv")->required();
  expected_fit->add_option("--config", ef_config, "run.toml");
  expected_fit->add_option("--out", ef_out, "output csv");

  // seasonal fit
  auto* seasonal = app.add_subcommand("seasonal", "temperature seasonality model");
  auto* seasonal_fit = seasonal->add_subcommand("fit", "fit the temperature model");
  std::string sf_history, sf_temps, sf_config, sf_out = "seasonal.json";
  seasonal_fit->add_option("--history", sf_history, "mortality.csv")->required();
  seasonal_fit->add_option("--temps", sf_temps, "temperature.csv")->required();
  seasonal_fit->add_option("--config", sf_config, "run.toml");
  seasonal_fit->add_option("--out", sf_out, "output json");

  // covariate fit
  auto* covariate = app.add_subcommand("covariate", "hierarchical covariate model");
  auto* covariate_fit_cmd = covariate->add_subcommand("fit", "fit and write posterior draws");
  std::string cf_inputs, cf_config, cf_draws = "draws.bin";
  covariate_fit_cmd->add_option("--inputs", cf_inputs, "input directory with all csv files")
      ->required();
  covariate_fit_cmd->add_option("--config", cf_config, "run.toml");
  covariate_fit_cmd->add_option("--draws", cf_draws, "output draws file");

  // subnational fit
  auto* subnational = app.add_subcommand("subnational", "subnational share models");
  auto* subnational_fit_cmd = subnational->add_subcommand("fit", "fit and predict one country");
  std::string sn_panel, sn_national, sn_country, sn_config, sn_out = "subnational_draws.bin";
  subnational_fit_cmd->add_option("--panel", sn_panel, "subnational.csv")->required();
  subnational_fit_cmd->add_option("--national", sn_national, "mortality.csv")->required();
  subnational_fit_cmd->add_option("--country", sn_country, "ISO3 code")->required();
  subnational_fit_cmd->add_option("--config", sn_config, "run.toml");
  subnational_fit_cmd->add_option("--out", sn_out, "output draws file");

  // excess summarize
  auto* excess_cmd = app.add_subcommand("excess", "excess summaries");
  auto* summarize = excess_cmd->add_subcommand("summarize", "aggregate excess draws");
  std::string ex_inputs, ex_config, ex_out = "summary.csv", ex_plots;
  summarize->add_option("--inputs", ex_inputs, "input directory with all csv files")->required();
  summarize->add_option("--config", ex_config, "run.toml");
  summarize->add_option("--out", ex_out, "summary csv");
  summarize->add_option("--plots", ex_plots, "directory for plot-ready tables");

  // validate
  auto* validate = app.add_subcommand("validate", "cross-validation and simulation checks");
  auto* validate_cv = validate->add_subcommand("cv", "leave-one-out cross-validation");
  std::string vc_inputs, vc_config, vc_scheme = "country", vc_out = "cv_run";
  validate_cv->add_option("--inputs", vc_inputs, "input directory")->required();
  validate_cv->add_option("--scheme", vc_scheme, "country|month");
  validate_cv->add_option("--config", vc_config, "run.toml");
  validate_cv->add_option("--out", vc_out, "output directory");
  auto* validate_sims = validate->add_subcommand("sims", "simulation study suite");
  std::string vs_config, vs_out;
  validate_sims->add_option("--config", vs_config, "run.toml");
  validate_sims->add_option("--out", vs_out, "report json");

  // run
  auto* run_cmd = app.add_subcommand("run", "full pipeline with stage caching");
  std::string r_config, r_inputs, r_out;
  run_cmd->add_option("--config", r_config, "run.toml");
  run_cmd->add_option("--inputs", r_inputs, "input directory (overrides config)");
  run_cmd->add_option("--out", r_out, "run directory (overrides config)");

  // draws export
  auto* draws_cmd = app.add_subcommand("draws", "draw-file utilities");
  auto* draws_export = draws_cmd->add_subcommand("export", "export draws.bin arrays to csv");
  std::string de_in, de_out = "draws_csv";
  draws_export->add_option("--in", de_in, "draws.bin")->required();
  draws_export->add_option("--out", de_out, "output directory");

  // synth (demo data)
  auto* synth = app.add_subcommand("synth", "generate a synthetic input directory");
  std::string sy_out = "synthetic_world";
  std::uint64_t sy_seed = 42;
  int sy_countries = 30;
  synth->add_option("--out", sy_out, "output directory");
  synth->add_option("--seed", sy_seed, "generator seed");
  synth->add_option("--countries", sy_countries, "approximate country count");

  try {
    app.parse(argc, argv);
    if (print_config) {
      std::printf("%s", RunConfig{}.to_toml().c_str());
      return kExitOk;
    }
    if (expected_fit->parsed()) return cmd_expected_fit(ef_history, ef_config, ef_out);
    if (seasonal_fit->parsed()) return cmd_seasonal_fit(sf_history, sf_temps, sf_config, sf_out);
    if (covariate_fit_cmd->parsed()) return cmd_covariate_fit(cf_inputs, cf_config, cf_draws);
    if (subnational_fit_cmd->parsed()) {
      return cmd_subnational_fit(sn_panel, sn_national, sn_country, sn_config, sn_out);
    }
    if (summarize->parsed()) return cmd_excess_summarize(ex_inputs, ex_config, ex_out, ex_plots);
    if (validate_cv->parsed()) return cmd_validate_cv(vc_inputs, vc_config, vc_scheme, vc_out);
    if (validate_sims->parsed()) return cmd_validate_sims(vs_config, vs_out);
    if (run_cmd->parsed()) return cmd_run(r_config, r_inputs, r_out);
    if (draws_export->parsed()) {
      DrawsFile::read(de_in).export_csv(de_out);
      std::printf("wrote %s/\n", de_out.c_str());
      return kExitOk;
    }
    if (synth->parsed()) {
      SyntheticWorldConfig cfg;
      cfg.seed = sy_seed;
      int extra = std::max(0, sy_countries - 30);
      cfg.no_data += extra;
      write_synthetic_world(sy_out, cfg);
      std::printf("wrote %s/\n", sy_out.c_str());
      return kExitOk;
    }
    std::fprintf(stderr, "no subcommand action\n");
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const DiagnosticsError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(), e.table().c_str());
    return kExitDiagnostics;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
