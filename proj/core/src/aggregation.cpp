#include "excess/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "excess/errors.hpp"
#include "excess/stats.hpp"

namespace excess {

const Eigen::MatrixXd& ExcessDraws::of(const std::string& iso3) const {
  auto it = delta.find(iso3);
  if (it == delta.end()) throw ValidationError("no excess draws for " + iso3);
  return it->second;
}

void SummaryTable::append(const SummaryTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

ExcessDraws compute_excess(const AcmDraws& acm, const ExpectedDistribution& expected,
                           std::uint64_t seed) {
  ExcessDraws out;
  out.n_draws = acm.n_draws;
  for (const auto& [iso, y] : acm.y) {
    if (y.rows() != kPandemicMonths || y.cols() != acm.n_draws) {
      throw ValidationError("misaligned ACM draw matrix for " + iso);
    }
    Rng rng = Rng::stream(seed, "expected_draws", iso);
    Eigen::MatrixXd e(kPandemicMonths, acm.n_draws);
    for (int t = 1; t <= kPandemicMonths; ++t) {
      const GammaMoment& g = expected.at(iso, t);
      for (int s = 0; s < acm.n_draws; ++s) {
        e(t - 1, s) = g.tau_hat >= 1e7 ? g.e_hat : rng.gamma(g.tau_hat, g.rate());
      }
    }
    out.e_draws[iso] = e;
    out.delta[iso] = y - e;
  }
  return out;
}

namespace {

SummaryRow quantile_row(const std::string& level, const std::string& key,
                        const std::string& period, std::vector<double> draws,
                        PointEstimate point) {
  SummaryRow row;
  row.level = level;
  row.key = key;
  row.period = period;
  std::sort(draws.begin(), draws.end());
  row.point = point == PointEstimate::Median ? quantile_sorted(draws, 0.5) : mean(draws);
  row.lo50 = quantile_sorted(draws, 0.25);
  row.hi50 = quantile_sorted(draws, 0.75);
  row.lo80 = quantile_sorted(draws, 0.10);
  row.hi80 = quantile_sorted(draws, 0.90);
  row.lo95 = quantile_sorted(draws, 0.025);
  row.hi95 = quantile_sorted(draws, 0.975);
  return row;
}

std::string level_name(GroupingLevel level) {
  switch (level) {
    case GroupingLevel::Country: return "country";
    case GroupingLevel::Region: return "region";
    case GroupingLevel::Income: return "income";
    case GroupingLevel::Global: return "global";
  }
  return "?";
}

std::string group_key(GroupingLevel level, const CountryMeta& meta) {
  switch (level) {
    case GroupingLevel::Country: return meta.iso3;
    case GroupingLevel::Region: return to_string(meta.region);
    case GroupingLevel::Income: return to_string(meta.income);
    case GroupingLevel::Global: return "global";
  }
  return "?";
}

}  // namespace

std::map<std::string, Eigen::MatrixXd> group_delta(const ExcessDraws& draws,
                                                   const PopulationTable& population,
                                                   GroupingLevel level) {
  std::map<std::string, Eigen::MatrixXd> out;
  for (const auto& [iso, delta] : draws.delta) {
    std::string key = group_key(level, population.meta_of(iso));
    auto [it, inserted] = out.try_emplace(key);
    if (inserted) it->second = Eigen::MatrixXd::Zero(kPandemicMonths, draws.n_draws);
    it->second += delta;
  }
  return out;
}

SummaryTable aggregate(const ExcessDraws& draws, const PopulationTable& population,
                       const std::vector<GroupingLevel>& levels, const SummaryOptions& opts) {
  SummaryTable table;
  for (GroupingLevel level : levels) {
    auto groups = group_delta(draws, population, level);
    for (const auto& [key, delta] : groups) {
      for (int t = 1; t <= kPandemicMonths; ++t) {
        std::vector<double> col(delta.row(t - 1).begin(), delta.row(t - 1).end());
        table.rows.push_back(
            quantile_row(level_name(level), key, std::to_string(t), std::move(col), opts.point));
      }
      Eigen::RowVectorXd cumulative = delta.colwise().sum();
      std::vector<double> cum(cumulative.begin(), cumulative.end());
      table.rows.push_back(
          quantile_row(level_name(level), key, "cumulative", std::move(cum), opts.point));
    }
  }
  return table;
}

namespace {

// person-years over the pandemic window (monthly populations / 12)
double person_years(const PopulationTable& population, const std::string& iso) {
  auto it = population.population.find(iso);
  if (it == population.population.end()) throw ValidationError("no population for " + iso);
  double total = 0.0;
  for (double n : it->second) {
    if (n <= 0.0) throw ValidationError("nonpositive population for " + iso);
    total += n / 12.0;
  }
  return total;
}

std::map<std::string, double> group_person_years(const ExcessDraws& draws,
                                                 const PopulationTable& population,
                                                 GroupingLevel level) {
  std::map<std::string, double> out;
  for (const auto& [iso, delta] : draws.delta) {
    out[group_key(level, population.meta_of(iso))] += person_years(population, iso);
  }
  return out;
}

}  // namespace

SummaryTable excess_rate(const ExcessDraws& draws, const PopulationTable& population,
                         GroupingLevel level, const SummaryOptions& opts) {
  SummaryTable table;
  auto groups = group_delta(draws, population, level);
  auto years = group_person_years(draws, population, level);
  for (const auto& [key, delta] : groups) {
    double py = years.at(key);
    Eigen::RowVectorXd cumulative = delta.colwise().sum() / py * 1e5;
    std::vector<double> rate(cumulative.begin(), cumulative.end());
    table.rows.push_back(
        quantile_row(level_name(level) + "_rate", key, "cumulative", std::move(rate), opts.point));
  }
  return table;
}

RankMatrix rank_countries(const ExcessDraws& draws, const PopulationTable& population) {
  RankMatrix out;
  for (const auto& [iso, delta] : draws.delta) out.countries.push_back(iso);
  std::sort(out.countries.begin(), out.countries.end());
  int c = static_cast<int>(out.countries.size());
  out.probability = Eigen::MatrixXd::Zero(c, c);

  Eigen::MatrixXd rates(c, draws.n_draws);
  for (int i = 0; i < c; ++i) {
    const auto& delta = draws.of(out.countries[i]);
    double py = person_years(population, out.countries[i]);
    rates.row(i) = delta.colwise().sum() / py * 1e5;
  }

  std::vector<int> order(c);
  for (int s = 0; s < draws.n_draws; ++s) {
    std::iota(order.begin(), order.end(), 0);
    // rank 1 = highest rate; equal rates resolve by country code order
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rates(a, s) > rates(b, s); });
    for (int r = 0; r < c; ++r) out.probability(order[r], r) += 1.0;
  }
  out.probability /= static_cast<double>(draws.n_draws);
  return out;
}

SummaryTable ratio_to_reported(const ExcessDraws& draws, const ReportedCovidDeaths& reported,
                               const PopulationTable& population, GroupingLevel level,
                               const SummaryOptions& opts) {
  SummaryTable table;
  auto groups = group_delta(draws, population, level);

  std::map<std::string, double> reported_totals;
  for (const auto& [iso, delta] : draws.delta) {
    std::string key = group_key(level, population.meta_of(iso));
    auto it = reported.counts.find(iso);
    if (it != reported.counts.end()) {
      for (long long v : it->second) reported_totals[key] += static_cast<double>(v);
    }
  }

  for (const auto& [key, delta] : groups) {
    double denom = reported_totals.count(key) ? reported_totals.at(key) : 0.0;
    if (denom <= 0.0) {
      SummaryRow row;
      row.level = level_name(level) + "_ratio";
      row.key = key;
      row.period = "cumulative";
      row.defined = false;
      table.rows.push_back(row);
      continue;
    }
    Eigen::RowVectorXd ratio = delta.colwise().sum() / denom;
    std::vector<double> r(ratio.begin(), ratio.end());
    table.rows.push_back(
        quantile_row(level_name(level) + "_ratio", key, "cumulative", std::move(r), opts.point));
  }
  return table;
}

}  // namespace excess
