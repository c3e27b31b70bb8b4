#include "ecodyn/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecodyn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_header(const csv::Table& table, const std::vector<std::string>& expected,
                    const char* what) {
  if (table.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw DataError(std::string(what) + ": header must be exactly " + want);
  }
}

int parse_year(const std::string& text, std::size_t row) {
  try {
    return static_cast<int>(csv::parse_long(text));
  } catch (const std::invalid_argument&) {
    throw DataError("row " + std::to_string(row + 1) + ": bad year '" + text + "'");
  }
}

double parse_value(const std::string& text, std::size_t row) {
  try {
    return csv::parse_double(text);
  } catch (const std::invalid_argument&) {
    throw DataError("row " + std::to_string(row + 1) + ": bad number '" + text + "'");
  }
}

}  // namespace

void validate(const ExportTable& table) {
  std::set<RcaKey> seen;
  for (const auto& r : table.records) {
    const RcaKey key{r.country, r.year, r.activity};
    if (!seen.insert(key).second)
      throw DataError("duplicate export record " + r.country + "/" + std::to_string(r.year) + "/" +
                      r.activity);
    if (!(r.value >= 0.0) || !std::isfinite(r.value))
      throw DataError("export value for " + r.country + "/" + std::to_string(r.year) + "/" +
                      r.activity + " must be finite and non-negative");
  }
}

void validate(const PopulationTable& table) {
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : table.records) {
    if (!seen.insert({r.country, r.year}).second)
      throw DataError("duplicate population record " + r.country + "/" + std::to_string(r.year));
    if (!(r.population > 0.0) || !std::isfinite(r.population))
      throw DataError("population for " + r.country + "/" + std::to_string(r.year) +
                      " must be finite and positive");
  }
}

ExportTable exports_from_csv(const csv::Table& table) {
  require_header(table, {"country_code", "year", "activity_code", "value"}, "export table");
  ExportTable out;
  out.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    out.records.push_back({row[0], parse_year(row[1], i), row[2], parse_value(row[3], i)});
  }
  validate(out);
  return out;
}

PopulationTable population_from_csv(const csv::Table& table) {
  require_header(table, {"country_code", "year", "population"}, "population table");
  PopulationTable out;
  out.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    out.records.push_back({row[0], parse_year(row[1], i), parse_value(row[2], i)});
  }
  validate(out);
  return out;
}

csv::Table to_csv(const ExportTable& table) {
  csv::Table out;
  out.header = {"country_code", "year", "activity_code", "value"};
  for (const auto& r : table.records)
    out.rows.push_back({r.country, std::to_string(r.year), r.activity, csv::format_double(r.value)});
  return out;
}

namespace {

// country -> year -> activity -> value, ordered.
using Cube = std::map<std::string, std::map<int, std::map<std::string, double>>>;

std::vector<Dataset> cube_to_datasets(const Cube& cube) {
  std::vector<Dataset> out;
  for (const auto& [country, by_year] : cube) {
    std::set<std::string> activities;
    for (const auto& [year, by_activity] : by_year)
      for (const auto& [activity, v] : by_activity) activities.insert(activity);
    Dataset d;
    d.country = country;
    d.activity_labels.assign(activities.begin(), activities.end());
    for (const auto& [year, by_activity] : by_year) d.years.push_back(year);
    d.observations = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(d.years.size()),
                                               static_cast<Eigen::Index>(activities.size()), kNaN);
    Eigen::Index t = 0;
    for (const auto& [year, by_activity] : by_year) {
      for (const auto& [activity, v] : by_activity) {
        const auto col = std::lower_bound(d.activity_labels.begin(), d.activity_labels.end(), activity) -
                         d.activity_labels.begin();
        d.observations(t, col) = v;
      }
      ++t;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<Dataset> per_capita(const ExportTable& exports, const PopulationTable& population) {
  std::map<std::pair<std::string, int>, double> pop;
  for (const auto& r : population.records) pop[{r.country, r.year}] = r.population;

  std::set<std::pair<std::string, int>> missing;
  Cube cube;
  for (const auto& r : exports.records) {
    const auto it = pop.find({r.country, r.year});
    if (it == pop.end()) {
      missing.insert({r.country, r.year});
      continue;
    }
    if (r.value == 0.0) continue;  // log-space likelihood: zero exports are dropped
    cube[r.country][r.year][r.activity] = r.value / it->second;
  }
  if (!missing.empty()) {
    std::string keys;
    for (const auto& [c, y] : missing) keys += (keys.empty() ? "" : ", ") + c + "/" + std::to_string(y);
    throw DataError("missing population for " + keys);
  }
  return cube_to_datasets(cube);
}

std::map<RcaKey, double> rca(const ExportTable& exports) {
  std::map<std::pair<std::string, int>, double> country_total;
  std::map<std::pair<int, std::string>, double> activity_total;
  std::map<int, double> world_total;
  for (const auto& r : exports.records) {
    country_total[{r.country, r.year}] += r.value;
    activity_total[{r.year, r.activity}] += r.value;
    world_total[r.year] += r.value;
  }
  std::map<RcaKey, double> out;
  for (const auto& r : exports.records) {
    const double ct = country_total[{r.country, r.year}];
    const double at = activity_total[{r.year, r.activity}];
    const double wt = world_total[r.year];
    if (!(ct > 0.0) || !(at > 0.0) || !(wt > 0.0)) continue;
    out[{r.country, r.year, r.activity}] = (r.value / ct) / (at / wt);
  }
  return out;
}

namespace {

Dataset drop_empty_years(const Dataset& d) {
  Dataset out;
  out.country = d.country;
  out.activity_labels = d.activity_labels;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < d.observations.rows(); ++t)
    if (d.observations.cols() > 0 && (d.observations.row(t).array() == d.observations.row(t).array()).any())
      keep.push_back(t);
  out.observations.resize(static_cast<Eigen::Index>(keep.size()), d.observations.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.years.push_back(d.years[static_cast<std::size_t>(keep[k])]);
    out.observations.row(static_cast<Eigen::Index>(k)) = d.observations.row(keep[k]);
  }
  return out;
}

bool passes_rca(const std::vector<int>& years_above, const ActivityFilter& f) {
  if (!f.consecutive) return static_cast<int>(years_above.size()) >= f.min_years;
  int run = 0;
  for (std::size_t k = 0; k < years_above.size(); ++k) {
    run = (k > 0 && years_above[k] == years_above[k - 1] + 1) ? run + 1 : 1;
    if (run >= f.min_years) return true;
  }
  return false;
}

}  // namespace

std::vector<Dataset> filter_activities(const std::vector<Dataset>& datasets,
                                       const std::map<RcaKey, double>& rca_values,
                                       const ActivityFilter& filter, FilterLog* log) {
  std::vector<Dataset> out;
  for (const auto& d : datasets) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < d.activities(); ++i) {
      const std::string& a = d.activity_labels[static_cast<std::size_t>(i)];
      if (filter.excluded.count(a)) {
        if (log) log->dropped.push_back({d.country, a, "excluded activity code"});
        continue;
      }
      // RCA years are looked up from the whole table, not only the years kept here.
      std::vector<int> above;
      for (auto it = rca_values.lower_bound({d.country, std::numeric_limits<int>::min(), ""});
           it != rca_values.end() && std::get<0>(it->first) == d.country; ++it)
        if (std::get<2>(it->first) == a && it->second > 1.0) above.push_back(std::get<1>(it->first));
      if (passes_rca(above, filter)) {
        keep.push_back(i);
      } else if (log) {
        log->dropped.push_back({d.country, a,
                                "RCA > 1 in " + std::to_string(above.size()) + " years (need " +
                                    std::to_string(filter.min_years) +
                                    (filter.consecutive ? " consecutive)" : ")")});
      }
    }
    Dataset kept;
    kept.country = d.country;
    kept.years = d.years;
    kept.observations.resize(d.observations.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      kept.activity_labels.push_back(d.activity_labels[static_cast<std::size_t>(keep[k])]);
      kept.observations.col(static_cast<Eigen::Index>(k)) = d.observations.col(keep[k]);
    }
    out.push_back(drop_empty_years(kept));
  }
  return out;
}

std::vector<Dataset> filter_countries(const std::vector<Dataset>& datasets, int min_years,
                                      FilterLog* log) {
  std::vector<Dataset> out;
  for (const auto& d : datasets) {
    if (d.activities() == 0) {
      if (log) log->dropped.push_back({d.country, "", "no activity passed the RCA filter"});
      continue;
    }
    if (d.time_points() < min_years) {
      if (log)
        log->dropped.push_back({d.country, "",
                                "below K: " + std::to_string(d.time_points()) + " years < " +
                                    std::to_string(min_years)});
      continue;
    }
    out.push_back(d);
  }
  return out;
}

GlobalField build_global_field(const std::vector<Dataset>& sources, const Dataset& target) {
  const auto years = target.years;
  if (years.empty()) throw DataError("global field: target '" + target.country + "' has no years");
  Eigen::MatrixXd field(static_cast<Eigen::Index>(years.size()), target.activities());

  for (Eigen::Index i = 0; i < target.activities(); ++i) {
    const std::string& label = target.activity_labels[static_cast<std::size_t>(i)];
    // year -> (sum, count) over other countries
    std::map<int, std::pair<double, int>> acc;
    for (const auto& src : sources) {
      if (src.country == target.country) continue;
      const auto it = std::find(src.activity_labels.begin(), src.activity_labels.end(), label);
      if (it == src.activity_labels.end()) continue;
      const auto col = it - src.activity_labels.begin();
      for (Eigen::Index t = 0; t < src.time_points(); ++t)
        if (src.observed(t, col)) {
          auto& a = acc[src.years[static_cast<std::size_t>(t)]];
          a.first += src.observations(t, col);
          ++a.second;
        }
    }
    if (acc.empty())
      throw DataError("global field: activity '" + label + "' of '" + target.country +
                      "' is reported by no other country");
    std::vector<double> ys;
    std::vector<double> means;
    for (const auto& [y, a] : acc) {
      ys.push_back(y);
      means.push_back(a.first / a.second);
    }
    for (std::size_t t = 0; t < years.size(); ++t) {
      const double y = years[t];
      double v;
      if (y <= ys.front()) {
        v = means.front();
      } else if (y >= ys.back()) {
        v = means.back();
      } else {
        const auto k = static_cast<std::size_t>(std::upper_bound(ys.begin(), ys.end(), y) - ys.begin());
        const double w = (y - ys[k - 1]) / (ys[k] - ys[k - 1]);
        v = (1.0 - w) * means[k - 1] + w * means[k];
      }
      field(static_cast<Eigen::Index>(t), i) = v;
    }
  }
  return GlobalField(std::vector<double>(years.begin(), years.end()), std::move(field));
}

csv::Table datasets_to_csv(const std::vector<Dataset>& datasets) {
  csv::Table out;
  out.header = {"country_code", "year", "activity_code", "value"};
  for (const auto& d : datasets)
    for (Eigen::Index t = 0; t < d.time_points(); ++t)
      for (Eigen::Index i = 0; i < d.activities(); ++i)
        if (d.observed(t, i))
          out.rows.push_back({d.country, std::to_string(d.years[static_cast<std::size_t>(t)]),
                              d.activity_labels[static_cast<std::size_t>(i)],
                              csv::format_double(d.observations(t, i))});
  return out;
}

std::vector<Dataset> datasets_from_csv(const csv::Table& table) {
  require_header(table, {"country_code", "year", "activity_code", "value"}, "dataset table");
  Cube cube;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    const double v = parse_value(row[3], k);
    if (!(v > 0.0) || !std::isfinite(v))
      throw DataError("dataset table row " + std::to_string(k + 1) + ": value must be positive");
    auto& slot = cube[row[0]][parse_year(row[1], k)];
    if (!slot.emplace(row[2], v).second)
      throw DataError("dataset table row " + std::to_string(k + 1) + ": duplicate key");
  }
  return cube_to_datasets(cube);
}

IngestResult ingest(const ExportTable& exports, const PopulationTable& population,
                    const IngestOptions& options) {
  IngestResult out;
  out.per_capita = per_capita(exports, population);
  const auto rca_values = rca(exports);
  const auto by_activity = filter_activities(out.per_capita, rca_values, options.activities, &out.log);
  out.datasets = filter_countries(by_activity, options.min_country_years, &out.log);
  return out;
}

}  // namespace ecodyn
