#pragma once

// Small synthetic trade panel: 3 countries, 4 activities, 25 years. Each
// country grows logistically in every activity but is strong in a few of
// them, so the RCA filter keeps a different subset per country.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ecodyn/csv.hpp"
#include "ecodyn/integrator.hpp"
#include "ecodyn/rng.hpp"

namespace fixture {

inline constexpr int kFirstYear = 1990;
inline constexpr int kYears = 25;
inline const char* const kCountries[] = {"AAA", "BBB", "CCC"};
inline const char* const kActivities[] = {"p01", "p02", "p03", "p04"};

inline void write(const std::filesystem::path& dir) {
  using ecodyn::csv::format_double;
  std::filesystem::create_directories(dir);
  ecodyn::Rng rng(20240501);
  std::vector<double> times;
  for (int t = 0; t < kYears; ++t) times.push_back(t);

  ecodyn::csv::Table ex, pop, gdp;
  ex.header = {"country_code", "year", "activity_code", "value"};
  pop.header = {"country_code", "year", "population"};
  gdp.header = {"country_code", "gdp"};
  const std::vector<std::vector<int>> strong{{0}, {1, 2}, {0, 2, 3}};
  for (int c = 0; c < 3; ++c) {
    ecodyn::MeanFieldParams<> p{Eigen::VectorXd(4), Eigen::VectorXd(4), 0.0};
    Eigen::VectorXd x0(4);
    for (int i = 0; i < 4; ++i) {
      p.growth(i) = rng.uniform(0.12, 0.25);
      p.self_limitation(i) = rng.uniform(0.5, 1.5);
      x0(i) = rng.uniform(0.05, 0.2) / p.self_limitation(i);
    }
    for (int i : strong[c]) p.self_limitation(i) *= 0.2;  // five times the carrying capacity
    const auto traj = ecodyn::integrate(ecodyn::ModelKind::Null, p, x0, times);
    const double population0 = 1e6 * (1 + c);
    for (int t = 0; t < kYears; ++t) {
      const double population = population0 * std::pow(1.01, t);
      pop.rows.push_back({kCountries[c], std::to_string(kFirstYear + t), format_double(population)});
      for (int i = 0; i < 4; ++i) {
        const double y = traj.states(t, i) * std::exp(rng.normal(0.0, 0.1));
        ex.rows.push_back({kCountries[c], std::to_string(kFirstYear + t), kActivities[i],
                           format_double(std::round(y * population))});
      }
    }
    gdp.rows.push_back({kCountries[c], format_double(1e4 * (1 + 2 * c))});
  }
  ecodyn::csv::write_file((dir / "exports.csv").string(), ex);
  ecodyn::csv::write_file((dir / "population.csv").string(), pop);
  ecodyn::csv::write_file((dir / "gdp.csv").string(), gdp);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
