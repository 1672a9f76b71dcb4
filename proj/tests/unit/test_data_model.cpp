#include <sstream>

#include "doctest.h"
#include "excess/data_model.hpp"
#include "excess/stats.hpp"

using namespace excess;

namespace {

std::string monthly_rows(const std::string& iso, int year_from, int year_to, long long deaths) {
  std::ostringstream os;
  for (int y = year_from; y <= year_to; ++y) {
    for (int m = 1; m <= 12; ++m) {
      os << iso << ',' << y << ',' << m << ',' << deaths << '\n';
    }
  }
  return os.str();
}

CsvTable region_table(const std::vector<std::string>& rows) {
  std::string text = "iso3,who_region,income_group\n";
  for (const auto& r : rows) text += r + "\n";
  return CsvTable::from_string(text, "region.csv");
}

}  // namespace

TEST_CASE("month index mapping is bijective") {
  for (int t = 1; t <= kPandemicMonths; ++t) {
    int v = CountryMonthKey::year_index_of(t);
    int m = CountryMonthKey::month_of(t);
    CHECK(v >= 1);
    CHECK(v <= 2);
    CHECK(m >= 1);
    CHECK(m <= 12);
    CHECK(CountryMonthKey::t_of(v, m) == t);
  }
}

TEST_CASE("tier inference from observation pattern") {
  std::string csv = "iso3,year,month,deaths\n";
  csv += monthly_rows("PER", 2020, 2021, 1000);  // 24 observed months
  for (int t = 1; t <= 18; ++t) {
    int year = 2020 + (t - 1) / 12;
    int month = (t - 1) % 12 + 1;
    csv += "ARG," + std::to_string(year) + "," + std::to_string(month) + ",900\n";
  }
  csv += "VNM,2020,,12000\nVNM,2021,,12500\n";

  auto data = ingest_mortality(CsvTable::from_string(csv), {"PER", "ARG", "VNM", "TCD"});
  CHECK(data.pandemic.at("PER").tier == Tier::FullNational);
  CHECK(data.pandemic.at("ARG").tier == Tier::PartialNational);
  CHECK(data.pandemic.at("ARG").observed_prefix() == 18);
  CHECK(data.pandemic.at("VNM").tier == Tier::SubnationalOrAnnual);
  CHECK(data.pandemic.at("TCD").tier == Tier::NoData);

  // partition: every listed country got exactly one tier
  CHECK(data.pandemic.size() == 4);
}

TEST_CASE("ingestion rejects bad rows") {
  CHECK_THROWS_AS(ingest_mortality(CsvTable::from_string(
                      "iso3,year,month,deaths\nPER,2020,1,100\nPER,2020,1,100\n")),
                  ValidationError);
  CHECK_THROWS_AS(
      ingest_mortality(CsvTable::from_string("iso3,year,month,deaths\nPER,2020,1,-5\n")),
      ValidationError);
  CHECK_THROWS_AS(
      ingest_mortality(CsvTable::from_string("iso3,year,month,deaths\nPER,2020,1\n")),
      ParseError);
  // parse errors carry the line number
  try {
    ingest_mortality(CsvTable::from_string("iso3,year,month,deaths\nPER,2020,1,abc\n"));
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("non-contiguous observed months are rejected") {
  std::string csv = "iso3,year,month,deaths\nPER,2020,1,100\nPER,2020,3,100\n";
  CHECK_THROWS_AS(ingest_mortality(CsvTable::from_string(csv)), ValidationError);
}

TEST_CASE("ingest(serialize(x)) round-trips") {
  std::string csv = "iso3,year,month,deaths\n";
  csv += monthly_rows("PER", 2015, 2019, 950);
  csv += monthly_rows("PER", 2020, 2021, 1200);
  csv += "VNM,2018,,11800\nVNM,2019,,11900\nVNM,2020,,12000\n";
  auto a = ingest_mortality(CsvTable::from_string(csv));
  auto b = ingest_mortality(CsvTable::from_string(serialize_mortality(a)));
  CHECK(serialize_mortality(a) == serialize_mortality(b));
  CHECK(b.pandemic.at("PER").tier == Tier::FullNational);
  CHECK(b.historic.at("PER").n_monthly() == 60);
  CHECK(b.historic.at("VNM").annual.size() == 2);
}

TEST_CASE("standardization: {1,2,3} column becomes {-1,0,1}") {
  // three countries, one constant covariate with values 1,2,3
  std::string cov = "iso3,year,month,name,value\nAAA,,,x,1\nBBB,,,x,2\nCCC,,,x,3\n";
  auto panel = ingest_covariates(CsvTable::from_string(cov));
  auto pop = ingest_population(
      CsvTable::from_string("iso3,year,population\nAAA,2020,1000\nBBB,2020,1000\nCCC,2020,1000\n"),
      region_table({"AAA,EURO,high", "BBB,EURO,high", "CCC,EURO,high"}));
  standardize_covariates(panel, pop);
  CHECK(panel.constant.at("x").at("AAA") == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(panel.constant.at("x").at("BBB") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(panel.constant.at("x").at("CCC") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("indicator covariates pass through unchanged") {
  std::string cov =
      "iso3,year,month,name,value\nAAA,,,income_high,0\nBBB,,,income_high,1\nCCC,,,income_high,1\n";
  auto panel = ingest_covariates(CsvTable::from_string(cov));
  panel.indicator_names.push_back("income_high");
  auto pop = ingest_population(
      CsvTable::from_string("iso3,year,population\nAAA,2020,1000\nBBB,2020,1000\nCCC,2020,1000\n"),
      region_table({"AAA,EURO,high", "BBB,EURO,high", "CCC,EURO,high"}));
  standardize_covariates(panel, pop);
  CHECK(panel.constant.at("income_high").at("AAA") == 0.0);
  CHECK(panel.constant.at("income_high").at("BBB") == 1.0);
}

TEST_CASE("missing cell imputed with regional median") {
  std::ostringstream cov;
  cov << "iso3,year,month,name,value\n";
  // four regional peers with temperature at month 1; E-country missing
  const char* isos[] = {"AAA", "BBB", "CCC", "DDD"};
  double temps[] = {5.0, 7.0, 9.0, 20.0};
  for (int i = 0; i < 4; ++i) {
    for (int t = 1; t <= 24; ++t) {
      int year = 2020 + (t - 1) / 12, month = (t - 1) % 12 + 1;
      cov << isos[i] << ',' << year << ',' << month << ",temp," << temps[i] << "\n";
    }
  }
  // EEE present at all months except month 1
  for (int t = 2; t <= 24; ++t) {
    int year = 2020 + (t - 1) / 12, month = (t - 1) % 12 + 1;
    cov << "EEE," << year << ',' << month << ",temp,6\n";
  }
  auto panel = ingest_covariates(CsvTable::from_string(cov.str()));
  auto pop = ingest_population(
      CsvTable::from_string("iso3,year,population\nAAA,2020,1\nBBB,2020,1\nCCC,2020,1\nDDD,2020,"
                            "1\nEEE,2020,1\n"),
      region_table({"AAA,EURO,high", "BBB,EURO,high", "CCC,EURO,high", "DDD,EURO,high",
                    "EEE,EURO,high"}));

  // capture the raw value the median should hit: median of {5,7,9,20} = 8
  auto report = standardize_covariates(panel, pop);
  CHECK(panel.imputed_mask.at("temp").at("EEE")[0]);
  double m = report.column_mean.at("temp");
  double sd = report.column_sd.at("temp");
  CHECK(panel.time_varying.at("temp").at("EEE")[0] == doctest::Approx((8.0 - m) / sd).epsilon(1e-12));
  CHECK(report.warnings.empty());
}

TEST_CASE("standardized columns have mean 0 sd 1 over fitting cells") {
  std::ostringstream cov;
  cov << "iso3,year,month,name,value\n";
  unsigned state = 12345;
  auto next = [&] {
    state = state * 1664525u + 1013904223u;
    return (state >> 8) % 1000 / 100.0;
  };
  const char* isos[] = {"AAA", "BBB", "CCC"};
  for (const char* iso : isos) {
    for (int t = 1; t <= 24; ++t) {
      int year = 2020 + (t - 1) / 12, month = (t - 1) % 12 + 1;
      cov << iso << ',' << year << ',' << month << ",x," << next() << "\n";
    }
  }
  auto panel = ingest_covariates(CsvTable::from_string(cov.str()));
  auto pop = ingest_population(
      CsvTable::from_string("iso3,year,population\nAAA,2020,1\nBBB,2020,1\nCCC,2020,1\n"),
      region_table({"AAA,EURO,high", "BBB,EURO,high", "CCC,EURO,high"}));
  standardize_covariates(panel, pop);

  std::vector<double> all;
  for (const auto& [iso, vals] : panel.time_varying.at("x")) {
    for (double v : vals) all.push_back(v);
  }
  CHECK(std::abs(mean(all)) < 1e-12);
  CHECK(std::abs(sample_sd(all) - 1.0) < 1e-12);
}

TEST_CASE("population interpolation is linear in month") {
  auto pop = ingest_population(
      CsvTable::from_string(
          "iso3,year,population\nAAA,2019,1000000\nAAA,2020,1012000\nAAA,2021,1024000\nAAA,2022,"
          "1036000\n"),
      region_table({"AAA,EURO,high"}));
  // mid-2020 (t=6/7 boundary) should be near the 2020 annual value
  double jun = pop.at("AAA", 6);
  double jul = pop.at("AAA", 7);
  CHECK(jun == doctest::Approx(1012000).epsilon(1e-3));
  CHECK(jul == doctest::Approx(1012000).epsilon(1e-3));
  // equal spacing month to month within a linear segment
  double d1 = pop.at("AAA", 8) - pop.at("AAA", 7);
  double d2 = pop.at("AAA", 9) - pop.at("AAA", 8);
  CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
  CHECK(pop.at("AAA", 24) > pop.at("AAA", 1));
}
