#include <doctest.h>

#include <cmath>

#include "ecodyn/selection.hpp"

using namespace ecodyn;

namespace {

// builds entries directly from BIC values
std::vector<SelectionEntry> from_bics(std::vector<std::pair<ModelKind, double>> bics) {
  std::vector<double> raw;
  for (auto& [k, b] : bics) raw.push_back(b);
  const auto d = delta_bic(raw);
  std::vector<SelectionEntry> out;
  for (std::size_t i = 0; i < bics.size(); ++i) {
    SelectionEntry e;
    e.kind = bics[i].first;
    e.bic = bics[i].second;
    e.delta_bic = d[i];
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("bic value") {
  CHECK(bic(-100.0, 19, 531) == doctest::Approx(200.0 + 19.0 * std::log(531.0)));
  CHECK(bic(-100.0, 19, 531) == doctest::Approx(319.221).epsilon(1e-5));
}

TEST_CASE("parameter counts") {
  CHECK(parameter_count(ModelKind::Null, 9) == 18);
  for (auto k : {ModelKind::AlphaPositive, ModelKind::AlphaNegative, ModelKind::Delta, ModelKind::Mu})
    CHECK(parameter_count(k, 9) == 19);
  CHECK(parameter_count_with_initial_conditions(ModelKind::Mu, 9, 3) == 19 + 27);
}

TEST_CASE("delta bic") {
  const std::vector<double> b{5.0, 3.0, 9.0};
  CHECK(delta_bic(b) == std::vector<double>{2.0, 0.0, 6.0});
  CHECK_THROWS(delta_bic(std::vector<double>{}));
}

TEST_CASE("null model within the threshold is best") {
  auto e = from_bics({{ModelKind::Null, 110.0}, {ModelKind::AlphaPositive, 100.0}});
  auto c = classify(e);
  CHECK(c[0] == Support::Best);
  CHECK(c[1] == Support::NoSupport);  // exactly -10 against null is not enough

  e = from_bics({{ModelKind::Null, 110.1}, {ModelKind::AlphaPositive, 100.0}});
  c = classify(e);
  CHECK(c[0] == Support::NoSupport);
  CHECK(c[1] == Support::Best);
}

TEST_CASE("clear winner and runner-up") {
  auto e = from_bics({{ModelKind::Null, 0.0},
                      {ModelKind::AlphaPositive, 15.0},
                      {ModelKind::AlphaNegative, 20.0},
                      {ModelKind::Delta, 30.0},
                      {ModelKind::Mu, 12.0}});
  auto c = classify(e);
  CHECK(c[0] == Support::Best);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] == Support::NoSupport);

  e = from_bics({{ModelKind::Null, 20.0}, {ModelKind::AlphaPositive, 0.0}, {ModelKind::Delta, 4.0}});
  c = classify(e);
  CHECK(c[0] == Support::NoSupport);
  CHECK(c[1] == Support::Supported);
  CHECK(c[2] == Support::Supported);
}

TEST_CASE("supported against null") {
  // -12 against null: supported; -10 exactly: not
  auto e = from_bics({{ModelKind::Null, 12.0}, {ModelKind::AlphaPositive, 0.0}, {ModelKind::Mu, 2.0}});
  auto c = classify(e);
  CHECK(c[1] == Support::Supported);
  CHECK(c[2] == Support::NoSupport);
}

TEST_CASE("classification needs a null entry") {
  auto e = from_bics({{ModelKind::AlphaPositive, 0.0}});
  CHECK_THROWS_AS(classify(e), std::invalid_argument);
}

TEST_CASE("select_models fills the report") {
  const std::vector<ModelLikelihood> fits{{ModelKind::Null, -100.0}, {ModelKind::Delta, -80.0}};
  const auto r = select_models("AA", fits, 9, 531, 3);
  CHECK(r.entries.size() == 2);
  CHECK(r.entry(ModelKind::Null).bic == doctest::Approx(200.0 + 18.0 * std::log(531.0)));
  CHECK(r.entry(ModelKind::Delta).delta_bic == 0.0);
  CHECK(r.best() == ModelKind::Delta);
  CHECK(r.entry(ModelKind::Delta).supported_against_null);
  CHECK_FALSE(r.entry(ModelKind::Null).supported_against_null);
  CHECK(to_string(Support::Best) == "best");
}
