#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecodyn/data_pipeline.hpp"

using namespace ecodyn;

namespace {

ExportTable two_by_two() {
  return {{{"A", 2000, "a", 8.0}, {"A", 2000, "b", 2.0}, {"B", 2000, "a", 2.0}, {"B", 2000, "b", 8.0}}};
}

// one country, one activity, exports in the given years
Dataset single(const std::string& country, std::vector<int> years, double value = 1.0) {
  Dataset d;
  d.country = country;
  d.years = std::move(years);
  d.activity_labels = {"a"};
  d.observations = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(d.years.size()), 1, value);
  return d;
}

std::map<RcaKey, double> rca_above(const std::string& country, const std::vector<int>& years) {
  std::map<RcaKey, double> out;
  for (int y : years) out[{country, y, "a"}] = 1.5;
  return out;
}

}  // namespace

TEST_CASE("Balassa index") {
  const auto r = rca(two_by_two());
  CHECK(r.at({"A", 2000, "a"}) == doctest::Approx(1.6));
  CHECK(r.at({"A", 2000, "b"}) == doctest::Approx(0.4));
  CHECK(r.at({"B", 2000, "b"}) == doctest::Approx(1.6));
}

TEST_CASE("Balassa index invariants") {
  SUBCASE("a single exporter of everything has index one") {
    const auto r = rca({{{"A", 2000, "a", 3.0}, {"A", 2000, "b", 5.0}}});
    for (const auto& [k, v] : r) CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("scaling all exports leaves the index unchanged") {
    auto t = two_by_two();
    t.records.push_back({"C", 2000, "a", 1.0});
    const auto base = rca(t);
    for (auto& rec : t.records) rec.value *= 37.0;
    const auto scaled = rca(t);
    for (const auto& [k, v] : base) CHECK(scaled.at(k) == doctest::Approx(v));
  }
  SUBCASE("share-weighted indices sum to one") {
    // sum_i RCA_ic * (world share of i) = 1 for each country
    ExportTable t{{{"A", 2001, "a", 3.0}, {"A", 2001, "b", 1.0}, {"A", 2001, "c", 6.0},
                   {"B", 2001, "a", 2.0}, {"B", 2001, "c", 4.0}}};
    const auto r = rca(t);
    const double world = 16.0;
    const std::map<std::string, double> totals{{"a", 5.0}, {"b", 1.0}, {"c", 10.0}};
    for (const std::string c : {"A", "B"}) {
      double s = 0.0;
      for (const auto& [k, v] : r)
        if (std::get<0>(k) == c) s += v * totals.at(std::get<2>(k)) / world;
      CHECK(s == doctest::Approx(1.0));
    }
  }
  SUBCASE("zero exports of an activity worldwide are left out") {
    const auto r = rca({{{"A", 2000, "a", 0.0}, {"A", 2000, "b", 1.0}}});
    CHECK(r.count({"A", 2000, "a"}) == 0);
  }
}

TEST_CASE("activity filter year count") {
  const auto d = single("A", {2000, 2001, 2002, 2003, 2004});
  FilterLog log;
  auto kept = filter_activities({d}, rca_above("A", {2000, 2001, 2002}), {}, &log);
  CHECK(kept[0].activities() == 0);
  CHECK(log.dropped.size() == 1);
  kept = filter_activities({d}, rca_above("A", {2000, 2001, 2002, 2004}), {});
  CHECK(kept[0].activities() == 1);
  // RCA years outside the kept data still count
  kept = filter_activities({d}, rca_above("A", {1990, 1991, 1992, 1993}), {});
  CHECK(kept[0].activities() == 1);
}

TEST_CASE("activity filter consecutive option") {
  const auto d = single("A", {2000, 2001, 2002, 2003, 2004, 2005});
  ActivityFilter f;
  f.consecutive = true;
  CHECK(filter_activities({d}, rca_above("A", {2000, 2001, 2003, 2004}), f)[0].activities() == 0);
  CHECK(filter_activities({d}, rca_above("A", {2001, 2002, 2003, 2004}), f)[0].activities() == 1);
  f.consecutive = false;
  f.excluded = {"a"};
  CHECK(filter_activities({d}, rca_above("A", {2001, 2002, 2003, 2004}), f)[0].activities() == 0);
}

TEST_CASE("country filter boundary") {
  std::vector<int> y19, y20;
  for (int k = 0; k < 19; ++k) y19.push_back(2000 + k);
  y20 = y19;
  y20.push_back(2019);
  FilterLog log;
  const auto kept = filter_countries({single("A", y19), single("B", y20)}, 20, &log);
  CHECK(kept.size() == 1);
  CHECK(kept[0].country == "B");
  REQUIRE(log.dropped.size() == 1);
  CHECK(log.dropped[0].country == "A");
  CHECK(log.dropped[0].reason.find("below K") != std::string::npos);
}

TEST_CASE("per-capita conversion") {
  ExportTable ex{{{"A", 2000, "a", 1000.0}, {"A", 2000, "b", 0.0}, {"A", 2001, "a", 500.0}}};
  PopulationTable pop{{{"A", 2000, 100.0}, {"A", 2001, 50.0}}};
  const auto d = per_capita(ex, pop);
  REQUIRE(d.size() == 1);
  CHECK(d[0].observations(0, 0) == 10.0);
  CHECK(d[0].observations(1, 0) == 10.0);
  CHECK(d[0].activities() == 1);  // activity b never had a positive value
  pop.records.pop_back();
  try {
    per_capita(ex, pop);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("2001") != std::string::npos);
  }
}

TEST_CASE("input validation") {
  ExportTable dup{{{"A", 2000, "a", 1.0}, {"A", 2000, "a", 2.0}}};
  CHECK_THROWS_AS(validate(dup), DataError);
  ExportTable neg{{{"A", 2000, "a", -1.0}}};
  CHECK_THROWS_AS(validate(neg), DataError);
  PopulationTable zero{{{"A", 2000, 0.0}}};
  CHECK_THROWS_AS(validate(zero), DataError);
  std::istringstream bad("country,year,activity_code,value\nA,2000,a,1\n");
  CHECK_THROWS_AS(exports_from_csv(csv::read(bad)), DataError);
}

TEST_CASE("global field excludes the target and ignores source order") {
  auto a = single("A", {2000, 2001}, 100.0);
  auto b = single("B", {2000, 2001}, 2.0);
  auto c = single("C", {2000, 2001}, 4.0);
  const auto f1 = build_global_field({a, b, c}, a);
  const auto f2 = build_global_field({c, a, b}, a);
  CHECK(f1.at(2000.0)(0) == 3.0);
  CHECK(f2.at(2001.0)(0) == f1.at(2001.0)(0));
  CHECK_THROWS_AS(build_global_field({a}, a), DataError);
}

TEST_CASE("global field interpolates gaps") {
  auto a = single("A", {2000, 2001, 2002, 2003}, 1.0);
  Dataset b = single("B", {2000, 2002}, 0.0);
  b.observations << 2.0, 6.0;
  const auto f = build_global_field({a, b}, a);
  CHECK(f.at(2001.0)(0) == doctest::Approx(4.0));
  CHECK(f.at(2003.0)(0) == doctest::Approx(6.0));
}

TEST_CASE("ingest is idempotent through its own output") {
  ExportTable ex;
  PopulationTable pop;
  for (int y = 2000; y < 2006; ++y) {
    pop.records.push_back({"A", y, 10.0});
    pop.records.push_back({"B", y, 20.0});
    ex.records.push_back({"A", y, "a", 8.0 + y % 3});
    ex.records.push_back({"A", y, "b", 2.0});
    ex.records.push_back({"B", y, "a", 2.0});
    ex.records.push_back({"B", y, "b", 8.0});
  }
  IngestOptions opt;
  opt.min_country_years = 5;
  const auto first = ingest(ex, pop, opt);
  REQUIRE(first.datasets.size() == 2);
  CHECK(first.datasets[0].activity_labels == std::vector<std::string>{"a"});
  std::stringstream s;
  csv::write(s, datasets_to_csv(first.datasets));
  const auto back = datasets_from_csv(csv::read(s));
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].years == first.datasets[k].years);
    CHECK(back[k].observations == first.datasets[k].observations);
  }
  // ingesting twice gives the same thing
  const auto second = ingest(ex, pop, opt);
  CHECK(second.datasets[1].observations == first.datasets[1].observations);
}
