#pragma once

#include <map>
#include <string>
#include <vector>

#include "excess/aggregation.hpp"
#include "excess/covariate_model.hpp"
#include "excess/data_model.hpp"
#include "excess/run_config.hpp"
#include "excess/subnational.hpp"

namespace excess {

/// All ingested inputs for a run.
struct Dataset {
  MortalityData mortality;
  CovariatePanel covariates;  // raw at load time; standardized in-stage
  PopulationTable population;
  ReportedCovidDeaths reported;
  TemperatureData temperature;
  std::map<std::string, SubnationalPanel> subnational;
  std::vector<std::string> countries;  // from region.csv, the country universe
};

Dataset load_dataset(const std::string& dir);

struct StageStatus {
  std::string name;
  bool cached = false;
  std::string fingerprint;
};

struct RunResult {
  std::string run_dir;
  std::vector<StageStatus> stages;

  bool stage_ran(const std::string& name) const;
};

/// Executes the full pipeline: expected -> seasonal -> gamma ->
/// covariate fit -> per-tier predictions -> excess summaries. Stages are
/// cached by input/config fingerprints inside the run directory; a stage
/// re-runs only when something upstream of it changed.
RunResult run_pipeline(const RunConfig& config);

/// Helpers shared between the pipeline and the CLI subcommands.
ModelSpec model_spec_from_config(const RunConfig& config);
McmcConfig mcmc_from_config(const RunConfig& config);

/// Stage entry points (each loads what it needs and writes its outputs).
void stage_expected(const Dataset& data, const RunConfig& config, const std::string& out_csv);
void stage_seasonal(const Dataset& data, const RunConfig& config, const std::string& out_json);
ExpectedDistribution stage_gamma(const Dataset& data, const RunConfig& config,
                                 const std::string& expected_csv, const std::string& seasonal_json,
                                 const std::string& out_csv);
ExpectedDistribution load_expected_gamma(const std::string& csv_path);

}  // namespace excess
