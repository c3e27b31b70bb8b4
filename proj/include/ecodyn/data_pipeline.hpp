#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ecodyn/csv.hpp"
#include "ecodyn/inference.hpp"
#include "ecodyn/model.hpp"

namespace ecodyn {

/// Input that breaks a data contract (schema, duplicates, missing keys).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExportRecord {
  std::string country;
  int year = 0;
  std::string activity;
  double value = 0.0;  ///< current currency units, >= 0
};

struct PopulationRecord {
  std::string country;
  int year = 0;
  double population = 0.0;  ///< > 0
};

struct ExportTable {
  std::vector<ExportRecord> records;
};

struct PopulationTable {
  std::vector<PopulationRecord> records;
};

/// Duplicate keys, negative or non-finite values throw DataError.
void validate(const ExportTable& table);
void validate(const PopulationTable& table);

/// Columns exactly country_code,year,activity_code,value.
ExportTable exports_from_csv(const csv::Table& table);
/// Columns exactly country_code,year,population.
PopulationTable population_from_csv(const csv::Table& table);
csv::Table to_csv(const ExportTable& table);

/// y = X / P for every record, one Dataset per country with activities and
/// years sorted. Zero exports become missing entries; years left with no
/// positive value are dropped. Missing population is a DataError listing the
/// offending (country, year) keys.
std::vector<Dataset> per_capita(const ExportTable& exports, const PopulationTable& population);

using RcaKey = std::tuple<std::string, int, std::string>;  ///< (country, year, activity)
/// Balassa index (X_ic / sum_i X_ic) / (sum_c X_ic / sum_ci X_ic). Keys with a
/// zero denominator are left out.
std::map<RcaKey, double> rca(const ExportTable& exports);

struct FilterDecision {
  std::string country;
  std::string activity;  ///< empty for country-level decisions
  std::string reason;
};

struct FilterLog {
  std::vector<FilterDecision> dropped;
};

struct ActivityFilter {
  int min_years = 4;
  /// When set the years with RCA > 1 must form one unbroken run of min_years.
  bool consecutive = false;
  std::set<std::string> excluded;  ///< activity codes removed outright
};

/// Keeps activity i of country c when RCA > 1 in at least `min_years` years.
/// Years left without any observation are removed. A country may come out
/// with no activities at all.
std::vector<Dataset> filter_activities(const std::vector<Dataset>& datasets,
                                       const std::map<RcaKey, double>& rca_values,
                                       const ActivityFilter& filter, FilterLog* log = nullptr);

/// Keeps countries with at least one activity and at least K years of data.
std::vector<Dataset> filter_countries(const std::vector<Dataset>& datasets, int min_years,
                                      FilterLog* log = nullptr);

/// Per year of `target`, the mean of each of its activities over all other
/// countries in `sources` that report it that year. Years where no other
/// country reports an activity are interpolated linearly between the nearest
/// reported years (held constant past the ends). An activity no other country
/// ever reports is a DataError.
GlobalField build_global_field(const std::vector<Dataset>& sources, const Dataset& target);

/// Long format (country_code,year,activity_code,value) with missing entries omitted.
csv::Table datasets_to_csv(const std::vector<Dataset>& datasets);
std::vector<Dataset> datasets_from_csv(const csv::Table& table);

struct IngestOptions {
  ActivityFilter activities;
  int min_country_years = 20;
};

struct IngestResult {
  std::vector<Dataset> per_capita;  ///< every country before filtering; feeds the global field
  std::vector<Dataset> datasets;    ///< after both filters
  FilterLog log;
};

IngestResult ingest(const ExportTable& exports, const PopulationTable& population,
                    const IngestOptions& options);

}  // namespace ecodyn
