#include "excess/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "excess/errors.hpp"

namespace excess {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return from_toml(text, path);
}

RunConfig RunConfig::from_toml(const std::string& text, const std::string& source) {
  RunConfig cfg;
  using Setter = std::function<void(const std::string&)>;
  auto set_int = [&](int* p) {
    return Setter([p](const std::string& v) { *p = std::stoi(v); });
  };
  auto set_ll = [&](long long* p) {
    return Setter([p](const std::string& v) { *p = std::stoll(v); });
  };
  auto set_u64 = [&](std::uint64_t* p) {
    return Setter([p](const std::string& v) { *p = std::stoull(v); });
  };
  auto set_double = [&](double* p) {
    return Setter([p](const std::string& v) { *p = std::stod(v); });
  };
  auto set_string = [&](std::string* p) {
    return Setter([p](const std::string& v) { *p = unquote(v); });
  };
  auto set_bool = [&](bool* p) {
    return Setter([p](const std::string& v) {
      if (v == "true") {
        *p = true;
      } else if (v == "false") {
        *p = false;
      } else {
        throw ValidationError("expected true/false, got " + v);
      }
    });
  };

  std::map<std::string, Setter> keys = {
      {"run.seed", set_u64(&cfg.seed)},
      {"run.input_dir", set_string(&cfg.input_dir)},
      {"run.output_dir", set_string(&cfg.output_dir)},
      {"run.summary_draws", set_int(&cfg.summary_draws)},
      {"expected.gamma_samples", set_int(&cfg.gamma_samples)},
      {"expected.seasonal_basis_dim", set_int(&cfg.seasonal_basis_dim)},
      {"expected.max_trend_segments", set_int(&cfg.max_trend_segments)},
      {"expected.linear_trend_countries", set_string(&cfg.linear_trend_countries)},
      {"covariate.time_varying", set_string(&cfg.time_varying)},
      {"covariate.constant_covariates", set_string(&cfg.constant_covariates)},
      {"covariate.income_interaction", set_bool(&cfg.income_interaction)},
      {"covariate.include_income_indicator", set_bool(&cfg.include_income_indicator)},
      {"covariate.chains", set_int(&cfg.chains)},
      {"covariate.warmup", set_int(&cfg.warmup)},
      {"covariate.keep", set_int(&cfg.keep)},
      {"covariate.thin", set_int(&cfg.thin)},
      {"covariate.rhat_max", set_double(&cfg.rhat_max)},
      {"covariate.ess_min", set_double(&cfg.ess_min)},
      {"covariate.pc_u", set_double(&cfg.pc_u)},
      {"covariate.pc_alpha", set_double(&cfg.pc_alpha)},
      {"covariate.fixed_effect_sd", set_double(&cfg.fixed_effect_sd)},
      {"subnational.share_chains", set_int(&cfg.share_chains)},
      {"subnational.share_warmup", set_int(&cfg.share_warmup)},
      {"subnational.share_keep", set_int(&cfg.share_keep)},
      {"subnational.constrained_iterations", set_ll(&cfg.constrained_iterations)},
      {"excess.point_estimate", set_string(&cfg.point_estimate)},
      {"validate.cv_max_folds", set_int(&cfg.cv_max_folds)},
      {"validate.sim_subnational_replications", set_int(&cfg.sim_subnational_replications)},
      {"validate.sim_constrained_replications", set_int(&cfg.sim_constrained_replications)},
  };

  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;
    auto it = keys.find(full);
    if (it == keys.end()) throw ParseError(source, line_no, "unknown config key '" + full + "'");
    try {
      it->second(value);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(source, line_no, "bad value for '" + full + "': " + value);
    }
  }
  return cfg;
}

std::string RunConfig::to_toml() const {
  std::ostringstream os;
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  os << "input_dir = \"" << input_dir << "\"\n";
  os << "output_dir = \"" << output_dir << "\"\n";
  os << "summary_draws = " << summary_draws << "\n\n";
  os << "[expected]\n";
  os << "gamma_samples = " << gamma_samples << "\n";
  os << "seasonal_basis_dim = " << seasonal_basis_dim << "\n";
  os << "max_trend_segments = " << max_trend_segments << "\n";
  os << "linear_trend_countries = \"" << linear_trend_countries << "\"\n\n";
  os << "[covariate]\n";
  os << "time_varying = \"" << time_varying << "\"\n";
  os << "constant_covariates = \"" << constant_covariates << "\"\n";
  os << "income_interaction = " << (income_interaction ? "true" : "false") << "\n";
  os << "include_income_indicator = " << (include_income_indicator ? "true" : "false") << "\n";
  os << "chains = " << chains << "\n";
  os << "warmup = " << warmup << "\n";
  os << "keep = " << keep << "\n";
  os << "thin = " << thin << "\n";
  os << "rhat_max = " << rhat_max << "\n";
  os << "ess_min = " << ess_min << "\n";
  os << "pc_u = " << pc_u << "\n";
  os << "pc_alpha = " << pc_alpha << "\n";
  os << "fixed_effect_sd = " << fixed_effect_sd << "\n\n";
  os << "[subnational]\n";
  os << "share_chains = " << share_chains << "\n";
  os << "share_warmup = " << share_warmup << "\n";
  os << "share_keep = " << share_keep << "\n";
  os << "constrained_iterations = " << constrained_iterations << "\n\n";
  os << "[excess]\n";
  os << "point_estimate = \"" << point_estimate << "\"\n\n";
  os << "[validate]\n";
  os << "cv_max_folds = " << cv_max_folds << "\n";
  os << "sim_subnational_replications = " << sim_subnational_replications << "\n";
  os << "sim_constrained_replications = " << sim_constrained_replications << "\n";
  return os.str();
}

std::vector<std::string> RunConfig::split_list(const std::string& csv) const {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

std::vector<std::string> RunConfig::linear_trend_list() const {
  return split_list(linear_trend_countries);
}

}  // namespace excess
