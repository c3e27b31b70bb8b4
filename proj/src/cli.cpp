#include "ecodyn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ecodyn/csv.hpp"
#include "ecodyn/data_pipeline.hpp"
#include "ecodyn/inference.hpp"
#include "ecodyn/integrator.hpp"
#include "ecodyn/parallel.hpp"
#include "ecodyn/rng.hpp"
#include "ecodyn/selection.hpp"
#include "ecodyn/serialization.hpp"
#include "ecodyn/stats.hpp"
#include "ecodyn/synthetic.hpp"

namespace fs = std::filesystem;

namespace ecodyn::cli {

namespace {

// CLI11 reads --config through this: nested objects map to subcommands,
// scalars and arrays to option values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> out;
    collect(j, {}, out);
    return out;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }

  static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      out.push_back(std::move(item));
    }
  }
};

struct Common {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = ".";
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary file so a reader never sees half an artifact.
void write_artifact(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string csv_text(const csv::Table& table) {
  std::ostringstream ss;
  csv::write(ss, table);
  return ss.str();
}

// Artifacts carry the seed and a hash of the effective configuration. Output
// directory and job count are left out: they do not change results.
struct Provenance {
  std::string command;
  std::uint64_t seed = 0;
  json config;

  std::string hash() const { return config_hash(config); }

  json to_json() const {
    return json{{"command", command}, {"seed", seed}, {"config_hash", hash()}, {"config", config}};
  }

  std::vector<std::string> comments() const {
    return {"ecodyn " + command, "seed: " + std::to_string(seed), "config_hash: " + hash()};
  }
};

std::string file_digest(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_text(path))));
  return buf;
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<ModelKind> parse_models(const std::vector<std::string>& names) {
  std::vector<ModelKind> out;
  for (const auto& n : split_list(names)) {
    ModelKind k;
    try {
      k = parse_model_kind(n);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (k == ModelKind::General) throw UsageError("the general model cannot be fitted");
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (unsigned char c : s) out += (std::isalnum(c) || c == '-' || c == '_') ? static_cast<char>(c) : '_';
  return out;
}

std::string model_file_tag(ModelKind k) {
  switch (k) {
    case ModelKind::AlphaPositive: return "alpha_pos";
    case ModelKind::AlphaNegative: return "alpha_neg";
    default: return std::string(to_string(k));
  }
}

std::vector<int> parse_years(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("--years expects FIRST:LAST");
  long first, last;
  try {
    first = csv::parse_long(spec.substr(0, colon));
    last = csv::parse_long(spec.substr(colon + 1));
  } catch (const std::invalid_argument&) {
    throw UsageError("--years expects integers FIRST:LAST");
  }
  if (last <= first) throw UsageError("--years: LAST must exceed FIRST");
  std::vector<int> years;
  for (long y = first; y <= last; ++y) years.push_back(static_cast<int>(y));
  return years;
}

// ----------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string model;
  std::string params;
  std::string years;
  double sigma = 0.0;
};

int cmd_simulate(const Common& common, const SimulateArgs& a, std::ostream& out) {
  ModelKind kind;
  try {
    kind = parse_model_kind(a.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(a.sigma >= 0.0)) throw UsageError("--sigma must be non-negative");
  const auto years = parse_years(a.years);
  const std::vector<double> times(years.begin(), years.end());

  json p;
  try {
    p = json::parse(read_text(a.params));
  } catch (const json::exception& e) {
    throw DataError("params file: " + std::string(e.what()));
  }

  std::vector<std::string> countries;
  std::vector<std::string> labels;
  Eigen::MatrixXd states;  // rows = times, columns country-major
  try {
    if (kind == ModelKind::General) {
      const auto params = p.at("countries").get<std::vector<GeneralParams>>();
      const auto initial_rows = p.at("initial").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd initial(static_cast<Eigen::Index>(initial_rows.size()),
                              initial_rows.empty() ? 0 : static_cast<Eigen::Index>(initial_rows[0].size()));
      for (std::size_t r = 0; r < initial_rows.size(); ++r)
        for (std::size_t c = 0; c < initial_rows[r].size(); ++c)
          initial(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = initial_rows[r][c];
      auto fixed = params;
      for (auto& g : fixed)
        if (g.dispersal.rows() == 0) g.dispersal = Eigen::MatrixXd::Zero(initial.rows(), g.size());
      states = integrate_general(fixed, initial, times).states;
      for (std::size_t c = 0; c < fixed.size(); ++c) countries.push_back("c" + std::to_string(c));
      if (p.contains("names")) countries = p.at("names").get<std::vector<std::string>>();
    } else {
      const auto params = p.get<MeanFieldParams<>>();
      Eigen::VectorXd initial(params.size());
      const auto init = p.at("initial").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(init.size()) != params.size())
        throw DataError("params file: 'initial' length differs from 'growth'");
      for (std::size_t i = 0; i < init.size(); ++i) initial(static_cast<Eigen::Index>(i)) = init[i];
      std::optional<GlobalField> field;
      if (p.contains("field")) {
        const auto& f = p.at("field");
        const auto fv = f.at("values").get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd values(static_cast<Eigen::Index>(fv.size()), params.size());
        for (std::size_t r = 0; r < fv.size(); ++r) {
          if (static_cast<Eigen::Index>(fv[r].size()) != params.size())
            throw DataError("params file: field rows must have one value per activity");
          for (std::size_t c = 0; c < fv[r].size(); ++c)
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = fv[r][c];
        }
        field.emplace(f.at("times").get<std::vector<double>>(), std::move(values));
      }
      if (kind == ModelKind::Delta && !field) throw DataError("params file: delta model needs a 'field'");
      states = integrate(kind, params, initial, times, field ? &*field : nullptr).states;
      countries.push_back(p.value("country", std::string("simulated")));
    }
  } catch (const json::exception& e) {
    throw DataError("params file: " + std::string(e.what()));
  } catch (const InvalidParameters& e) {
    throw DataError(std::string("params file: ") + e.what());
  } catch (const InvalidState& e) {
    throw DataError(std::string("params file: ") + e.what());
  }

  const Eigen::Index n = states.cols() / static_cast<Eigen::Index>(countries.size());
  if (p.contains("activities")) labels = p.at("activities").get<std::vector<std::string>>();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    labels.clear();
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back("a" + std::to_string(i));
  }

  Provenance prov{"simulate", common.seed,
                  json{{"model", to_string(kind)},
                       {"params_digest", file_digest(a.params)},
                       {"years", a.years},
                       {"sigma", a.sigma}}};

  auto to_table = [&](const Eigen::MatrixXd& m) {
    csv::Table t;
    t.comments = prov.comments();
    t.header = {"country_code", "year", "activity_code", "value"};
    for (std::size_t c = 0; c < countries.size(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index i = 0; i < n; ++i)
          t.rows.push_back({countries[c], std::to_string(years[static_cast<std::size_t>(r)]),
                            labels[static_cast<std::size_t>(i)],
                            csv::format_double(m(r, static_cast<Eigen::Index>(c) * n + i))});
    return t;
  };

  const fs::path dir(common.out);
  write_artifact(dir / "trajectory.csv", csv_text(to_table(states)));
  out << "wrote " << (dir / "trajectory.csv").string() << "\n";
  if (a.sigma > 0.0) {
    Rng rng(derive_seed(common.seed, {fnv1a("simulate-noise")}));
    Eigen::MatrixXd noisy = states;
    for (Eigen::Index r = 0; r < noisy.rows(); ++r)
      for (Eigen::Index c = 0; c < noisy.cols(); ++c) noisy(r, c) *= std::exp(rng.normal(0.0, a.sigma));
    write_artifact(dir / "dataset.csv", csv_text(to_table(noisy)));
    out << "wrote " << (dir / "dataset.csv").string() << "\n";
  }
  return kOk;
}

// ------------------------------------------------------------------- ingest

struct IngestArgs {
  std::string exports;
  std::string population;
  int min_years = 4;
  bool consecutive = false;
  std::vector<std::string> exclude;
  int min_country_years = 20;
};

int cmd_ingest(const Common& common, const IngestArgs& a, std::ostream& out) {
  IngestOptions opts;
  opts.activities.min_years = a.min_years;
  opts.activities.consecutive = a.consecutive;
  const auto excluded = split_list(a.exclude);
  opts.activities.excluded = {excluded.begin(), excluded.end()};
  opts.min_country_years = a.min_country_years;

  const auto exports = exports_from_csv(csv::read_file(a.exports));
  const auto population = population_from_csv(csv::read_file(a.population));
  const IngestResult result = ingest(exports, population, opts);

  Provenance prov{"ingest", common.seed,
                  json{{"exports_digest", file_digest(a.exports)},
                       {"population_digest", file_digest(a.population)},
                       {"min_years", a.min_years},
                       {"consecutive", a.consecutive},
                       {"exclude", std::vector<std::string>(opts.activities.excluded.begin(),
                                                            opts.activities.excluded.end())},
                       {"min_country_years", a.min_country_years}}};

  const fs::path dir(common.out);
  auto kept = datasets_to_csv(result.datasets);
  kept.comments = prov.comments();
  auto all = datasets_to_csv(result.per_capita);
  all.comments = prov.comments();
  write_artifact(dir / "datasets.csv", csv_text(kept));
  write_artifact(dir / "per_capita.csv", csv_text(all));

  json countries = json::array();
  for (const auto& d : result.datasets)
    countries.push_back(json{{"country", d.country},
                             {"years", d.time_points()},
                             {"first_year", d.years.front()},
                             {"last_year", d.years.back()},
                             {"activities", d.activity_labels},
                             {"data_count", d.observed_count()}});
  json manifest{{"provenance", prov.to_json()},
                {"input_countries", result.per_capita.size()},
                {"kept_countries", result.datasets.size()},
                {"countries", countries},
                {"dropped", result.log}};
  write_artifact(dir / "manifest.json", dump(manifest));
  out << "ingested " << result.per_capita.size() << " countries, kept " << result.datasets.size()
      << "\n";
  return kOk;
}

// ---------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string field_source;
  std::vector<std::string> countries;
  std::vector<std::string> models{"null,alpha+,alpha-,delta,mu"};
  FitConfig fit;
};

json fit_config_json(const FitConfig& c) {
  json j = c;
  j.erase("seed");  // the root seed sits at top level of the provenance
  return j;
}

int cmd_fit(const Common& common, const FitArgs& a, std::ostream& out, std::ostream& err) {
  const auto models = parse_models(a.models);
  if (models.empty()) throw UsageError("--models is empty");
  FitConfig fc = a.fit;
  fc.jobs = 1;
  try {
    validate(fc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  auto datasets = datasets_from_csv(csv::read_file(a.data));
  std::string source_path = a.field_source;
  if (source_path.empty()) {
    const fs::path sibling = fs::path(a.data).parent_path() / "per_capita.csv";
    source_path = fs::exists(sibling) ? sibling.string() : a.data;
  }
  const auto sources = datasets_from_csv(csv::read_file(source_path));

  const auto wanted = split_list(a.countries);
  json skipped = json::array();
  std::vector<Dataset> selected;
  for (auto& d : datasets) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), d.country) == wanted.end()) continue;
    if (d.time_points() < fc.segment_length) {
      skipped.push_back(json{{"country", d.country},
                             {"reason", "below K: " + std::to_string(d.time_points()) +
                                            " years < " + std::to_string(fc.segment_length)}});
      continue;
    }
    selected.push_back(std::move(d));
  }
  for (const auto& w : wanted)
    if (std::none_of(selected.begin(), selected.end(), [&](const Dataset& d) { return d.country == w; }) &&
        std::none_of(skipped.begin(), skipped.end(), [&](const json& s) { return s["country"] == w; }))
      skipped.push_back(json{{"country", w}, {"reason", "not in the data"}});

  std::vector<std::string> model_names;
  for (auto k : models) model_names.emplace_back(to_string(k));
  Provenance prov{"fit", common.seed,
                  json{{"data_digest", file_digest(a.data)},
                       {"field_source_digest", file_digest(source_path)},
                       {"countries", wanted},
                       {"models", model_names},
                       {"fit", fit_config_json(fc)}}};

  struct Job {
    std::size_t dataset;
    ModelKind kind;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < selected.size(); ++d)
    for (auto k : models) jobs.push_back({d, k});

  std::vector<json> results(jobs.size());
  std::vector<std::string> failures(jobs.size());
  // null fits go first; each coupled fit also starts once from its country's null optimum
  std::vector<std::optional<FitResult>> null_fits(selected.size());
  std::mutex log_mutex;
  const auto run_job = [&](std::size_t j) {
    const Dataset& d = selected[jobs[j].dataset];
    const ModelKind kind = jobs[j].kind;
    FitConfig cfg = fc;
    // stream keyed by (country, model); runs are keyed inside fit_multi_start
    cfg.seed = derive_seed(common.seed, {fnv1a(d.country), static_cast<std::uint64_t>(kind)});
    try {
      std::optional<GlobalField> field;
      if (kind == ModelKind::Delta) field = build_global_field(sources, d);
      const auto& nested = null_fits[jobs[j].dataset];
      const FitResult fit = fit_multi_start(kind, d, cfg, field ? &*field : nullptr,
                                            nested ? &*nested : nullptr);
      if (kind == ModelKind::Null) null_fits[jobs[j].dataset] = fit;
      results[j] = json{{"provenance", prov.to_json()},
                        {"country", d.country},
                        {"activities", d.activity_labels},
                        {"first_year", d.years.front()},
                        {"last_year", d.years.back()},
                        {"fit_seed", cfg.seed},
                        {"fit", fit}};
    } catch (const std::exception& e) {
      failures[j] = e.what();
      std::lock_guard lock(log_mutex);
      err << "fit " << d.country << "/" << to_string(kind) << " failed: " << e.what() << "\n";
    }
  };
  std::vector<std::size_t> first, second;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    (jobs[j].kind == ModelKind::Null ? first : second).push_back(j);
  for (const auto* phase : {&first, &second})
    parallel_for(phase->size(), common.jobs, [&](std::size_t k) { run_job((*phase)[k]); });

  const fs::path dir = fs::path(common.out) / "fits";
  json written = json::array();
  json failed = json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Dataset& d = selected[jobs[j].dataset];
    if (!failures[j].empty()) {
      failed.push_back(json{{"country", d.country}, {"model", jobs[j].kind}, {"reason", failures[j]}});
      continue;
    }
    const std::string name = safe_name(d.country) + "." + model_file_tag(jobs[j].kind) + ".json";
    write_artifact(dir / name, dump(results[j]));
    written.push_back(json{{"country", d.country}, {"model", jobs[j].kind}, {"file", "fits/" + name}});
  }
  json summary{{"provenance", prov.to_json()},
               {"fitted", written},
               {"failed", failed},
               {"skipped", skipped}};
  write_artifact(fs::path(common.out) / "fit_summary.json", dump(summary));
  out << "fitted " << written.size() << " of " << jobs.size() << " (country, model) pairs; "
      << skipped.size() << " countries skipped\n";
  if (!jobs.empty() && written.empty()) throw NumericalError("every fit failed");
  if (jobs.empty()) throw DataError("no country to fit");
  return kOk;
}

// ------------------------------------------------------------------- select

struct SelectArgs {
  std::string fits;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

int cmd_select(const Common& common, const SelectArgs& a, std::ostream& out) {
  const fs::path dir = a.fits.empty() ? fs::path(common.out) / "fits" : fs::path(a.fits);
  if (!fs::is_directory(dir)) throw DataError("fit directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no fit results in '" + dir.string() + "'");

  // country -> model -> fit
  std::map<std::string, std::map<ModelKind, FitResult>> by_country;
  json digests = json::array();
  for (const auto& f : files) {
    const std::string text = read_text(f.string());
    try {
      const json j = json::parse(text);
      auto& slot = by_country[j.at("country").get<std::string>()];
      FitResult fit = j.at("fit").get<FitResult>();
      if (!slot.emplace(fit.kind, std::move(fit)).second)
        throw DataError("duplicate fit for " + j.at("country").get<std::string>() + " in " + f.filename().string());
    } catch (const json::exception& e) {
      throw DataError(f.filename().string() + ": " + e.what());
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    digests.push_back(json{{"file", f.filename().string()}, {"digest", buf}});
  }

  Provenance prov{"select", common.seed, json{{"fit_digests", digests}}};

  json reports = json::array();
  json skipped = json::array();
  json excluded = json::array();
  csv::Table table;
  table.comments = prov.comments();
  table.header = {"country", "model", "log_likelihood", "parameters", "parameters_with_ic",
                  "bic", "delta_bic", "classification", "supported_against_null", "r_squared"};
  std::map<std::string, int> partition;
  std::map<ModelKind, int> best_counts;
  std::map<ModelKind, int> supported_counts;
  std::vector<double> best_r2;
  int classified = 0;
  int null_rejected = 0;

  for (const auto& [country, fits] : by_country) {
    if (!fits.count(ModelKind::Null)) {
      skipped.push_back(json{{"country", country}, {"reason", "missing null model fit"}});
      continue;
    }
    if (fits.size() < 2) {
      skipped.push_back(json{{"country", country}, {"reason", "fewer than two models fitted"}});
      continue;
    }
    const FitResult& null_fit = fits.at(ModelKind::Null);
    std::vector<ModelLikelihood> lls;
    for (const auto& [kind, fit] : fits) lls.push_back({kind, fit.log_likelihood});
    const SelectionReport report =
        select_models(country, lls, null_fit.params.size(), null_fit.data_count,
                      static_cast<Eigen::Index>(null_fit.segments.size()));
    // best-fit model: the lowest BIC
    const auto top = std::min_element(report.entries.begin(), report.entries.end(),
                                      [](const auto& x, const auto& y) { return x.bic < y.bic; });
    const double r2 = fits.at(top->kind).r_squared;
    if (!(r2 > 0.0)) {
      excluded.push_back(json{{"country", country}, {"best_model", top->kind}, {"r_squared", r2}});
      continue;
    }
    ++classified;
    best_r2.push_back(r2);
    const auto best = report.best();
    if (best) {
      partition[std::string(to_string(*best))] += 1;
      ++best_counts[*best];
    } else {
      partition["no_unique_best"] += 1;
    }
    if (best != ModelKind::Null) ++null_rejected;
    for (const auto& e : report.entries)
      if (e.classification == Support::Supported) ++supported_counts[e.kind];

    json rj = report;
    rj["best_fit_model"] = top->kind;
    rj["best_fit_r_squared"] = r2;
    reports.push_back(rj);
    for (const auto& e : report.entries)
      table.rows.push_back({country, std::string(to_string(e.kind)), csv::format_double(e.log_likelihood),
                            std::to_string(e.parameters), std::to_string(e.parameters_with_initial_conditions),
                            csv::format_double(e.bic), csv::format_double(e.delta_bic),
                            std::string(to_string(e.classification)),
                            e.supported_against_null ? "true" : "false",
                            csv::format_double(fits.at(e.kind).r_squared)});
  }

  json counts = json::object();
  for (auto k : kSubModels)
    counts[std::string(to_string(k))] =
        json{{"best", best_counts[k]}, {"supported", supported_counts[k]}};
  json part = json::object();
  for (const auto& [k, v] : partition) part[k] = v;

  json summary{{"provenance", prov.to_json()},
               {"classified_countries", classified},
               {"null_rejected", null_rejected},
               {"partition", part},
               {"model_counts", counts},
               {"best_fit_r_squared",
                json{{"median", best_r2.empty() ? json(nullptr) : json(median(best_r2))},
                     {"std", best_r2.size() < 2 ? json(nullptr) : json(sample_sd(best_r2))},
                     {"count", best_r2.size()}}},
               {"excluded_nonpositive_r_squared", excluded},
               {"skipped", skipped},
               {"reports", reports}};
  const fs::path outdir(common.out);
  write_artifact(outdir / "selection.json", dump(summary));
  write_artifact(outdir / "selection.csv", csv_text(table));
  out << "classified " << classified << " countries; null rejected in " << null_rejected << "\n";
  if (classified == 0) throw DataError("no country could be classified");
  return kOk;
}

// ------------------------------------------------------------------- report

struct ReportArgs {
  std::string selection;
  std::string gdp;
};

json regression_json(const std::string& label, const std::string& note, const RegressionResult& r) {
  json j = r;
  j = json{{"label", label}, {"note", note}, {"result", j}};
  return j;
}

void regression_rows(csv::Table& t, const std::string& label, const RegressionResult& r) {
  for (Eigen::Index k = 0; k < r.coefficients.size(); ++k)
    t.rows.push_back({label, r.names[static_cast<std::size_t>(k)], csv::format_double(r.coefficients(k)),
                      csv::format_double(r.standard_errors(k)), csv::format_double(r.t_statistics(k)),
                      csv::format_double(r.p_values(k)), csv::format_double(r.r_squared),
                      std::to_string(r.observations)});
}

// Intercept column plus the given predictors.
Eigen::MatrixXd with_intercept(const std::vector<Eigen::VectorXd>& columns, Eigen::Index n) {
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()) + 1);
  x.col(0).setOnes();
  for (std::size_t c = 0; c < columns.size(); ++c) x.col(static_cast<Eigen::Index>(c) + 1) = columns[c];
  return x;
}

// Standardizes, turning a constant column into the rank deficiency it causes.
Eigen::VectorXd standardized(const Eigen::VectorXd& v, Eigen::Index column, const std::string& name) {
  try {
    return standardize(v);
  } catch (const std::exception&) {
    throw RankDeficient("column '" + name + "' is constant and collinear with the intercept",
                        {column});
  }
}

// A degenerate design is reported, not fatal: the other regression may still run.
json rank_deficient_json(const std::string& label, const RankDeficient& e) {
  return json{{"regression", label}, {"reason", e.what()}, {"dependent_columns", e.columns()}};
}

int cmd_report(const Common& common, const ReportArgs& a, std::ostream& out) {
  const std::string sel_path =
      a.selection.empty() ? (fs::path(common.out) / "selection.json").string() : a.selection;
  json sel;
  try {
    sel = json::parse(read_text(sel_path));
  } catch (const json::exception& e) {
    throw DataError("selection file: " + std::string(e.what()));
  }
  const csv::Table gdp_table = csv::read_file(a.gdp);
  if (gdp_table.header != std::vector<std::string>{"country_code", "gdp"})
    throw DataError("GDP table: header must be exactly country_code,gdp");
  std::map<std::string, double> gdp;
  for (const auto& row : gdp_table.rows) {
    double v;
    try {
      v = csv::parse_double(row[1]);
    } catch (const std::invalid_argument&) {
      throw DataError("GDP table: bad number '" + row[1] + "'");
    }
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("GDP for " + row[0] + " must be positive");
    if (!gdp.emplace(row[0], v).second) throw DataError("GDP table: duplicate country " + row[0]);
  }

  struct Row {
    std::string country;
    double data_count, log_likelihood, activities;
  };
  std::vector<Row> rows;
  try {
    for (const auto& r : sel.at("reports")) {
      const auto best = r.at("best_fit_model").get<ModelKind>();
      double ll = 0.0;
      for (const auto& e : r.at("entries"))
        if (e.at("model").get<ModelKind>() == best) ll = e.at("log_likelihood").get<double>();
      rows.push_back({r.at("country").get<std::string>(), r.at("data_count").get<double>(), ll,
                      r.at("activities").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError("selection file: " + std::string(e.what()));
  }

  Provenance prov{"report", common.seed,
                  json{{"selection_digest", file_digest(sel_path)}, {"gdp_digest", file_digest(a.gdp)}}};

  json regressions = json::array();
  json skipped = json::array();
  csv::Table table;
  table.comments = prov.comments();
  table.header = {"regression", "term", "estimate", "std_error", "t", "p", "r_squared", "observations"};

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd count(n), ll(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    count(k) = rows[static_cast<std::size_t>(k)].data_count;
    ll(k) = rows[static_cast<std::size_t>(k)].log_likelihood;
  }

  // 1: log-likelihood of the best-fit model against the data count.
  Eigen::VectorXd residuals = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  bool have_residuals = false;
  if (n <= 2) {
    skipped.push_back(json{{"regression", "loglik_vs_data_count"},
                           {"reason", "needs more observations than predictors (n=" + std::to_string(n) + ", p=2)"}});
  } else try {
    const Eigen::VectorXd zc = standardized(count, 1, "data_count");
    const RegressionResult std_fit =
        ols(with_intercept({zc}, n), standardized(ll, 0, "log_likelihood"), {"(Intercept)", "data_count"});
    const RegressionResult raw_fit = ols(with_intercept({zc}, n), ll, {"(Intercept)", "data_count"});
    regressions.push_back(regression_json("loglik_vs_data_count/standardized",
                                          "response and predictor standardized", std_fit));
    regressions.push_back(regression_json("loglik_vs_data_count/unstandardized_response",
                                          "predictor standardized, response raw", raw_fit));
    regression_rows(table, "loglik_vs_data_count/standardized", std_fit);
    regression_rows(table, "loglik_vs_data_count/unstandardized_response", raw_fit);
    residuals = std_fit.residuals;
    have_residuals = true;
  } catch (const RankDeficient& e) {
    skipped.push_back(rank_deficient_json("loglik_vs_data_count", e));
  }

  // 2: residuals of (1) against log GDP and activity count.
  json missing_gdp = json::array();
  std::vector<Eigen::Index> with_gdp;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (gdp.count(rows[static_cast<std::size_t>(k)].country))
      with_gdp.push_back(k);
    else
      missing_gdp.push_back(rows[static_cast<std::size_t>(k)].country);
  }
  const auto m = static_cast<Eigen::Index>(with_gdp.size());
  if (!have_residuals) {
    skipped.push_back(json{{"regression", "residual_vs_gdp_activities"}, {"reason", "regression 1 was skipped"}});
  } else if (m <= 3) {
    skipped.push_back(json{{"regression", "residual_vs_gdp_activities"},
                           {"reason", "needs more observations than predictors (n=" + std::to_string(m) + ", p=3)"}});
  } else try {
    Eigen::VectorXd res(m), lg(m), act(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto& r = rows[static_cast<std::size_t>(with_gdp[static_cast<std::size_t>(k)])];
      res(k) = residuals(with_gdp[static_cast<std::size_t>(k)]);
      lg(k) = std::log(gdp.at(r.country));
      act(k) = r.activities;
    }
    const std::vector<std::string> names{"(Intercept)", "log_gdp", "activities"};
    const Eigen::MatrixXd x =
        with_intercept({standardized(lg, 1, "log_gdp"), standardized(act, 2, "activities")}, m);
    const RegressionResult std_fit = ols(x, standardized(res, 0, "residual"), names);
    const RegressionResult raw_fit = ols(x, res, names);
    regressions.push_back(regression_json("residual_vs_gdp_activities/standardized",
                                          "response and predictors standardized", std_fit));
    regressions.push_back(regression_json("residual_vs_gdp_activities/unstandardized_response",
                                          "predictors standardized, response raw", raw_fit));
    regression_rows(table, "residual_vs_gdp_activities/standardized", std_fit);
    regression_rows(table, "residual_vs_gdp_activities/unstandardized_response", raw_fit);
  } catch (const RankDeficient& e) {
    skipped.push_back(rank_deficient_json("residual_vs_gdp_activities", e));
  }

  csv::Table scatter;
  scatter.comments = prov.comments();
  scatter.header = {"country", "data_count", "log_likelihood", "residual", "log_gdp", "activities"};
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    scatter.rows.push_back({r.country, csv::format_double(r.data_count), csv::format_double(r.log_likelihood),
                            csv::format_double(residuals(k)),
                            gdp.count(r.country) ? csv::format_double(std::log(gdp.at(r.country))) : "",
                            csv::format_double(r.activities)});
  }

  json report{{"provenance", prov.to_json()},
              {"observations", n},
              {"regressions", regressions},
              {"skipped", skipped},
              {"missing_gdp", missing_gdp}};
  const fs::path dir(common.out);
  write_artifact(dir / "report.json", dump(report));
  write_artifact(dir / "regressions.csv", csv_text(table));
  write_artifact(dir / "scatter.csv", csv_text(scatter));
  out << "report: " << regressions.size() << " regression tables, " << skipped.size() << " skipped\n";
  return kOk;
}

// -------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string generator = "all";
  std::vector<double> grid;
  int replicates = 3;
  double sigma = 0.2;
  int activities = 9;
  int time_points = 59;
  bool reduced = false;
  FitConfig fit;
};

int cmd_sweep(const Common& common, SweepArgs a, std::ostream& out) {
  if (a.reduced) {
    a.activities = 4;
    a.time_points = 40;
    a.fit.adam_epochs = 200;
    a.fit.quasi_newton_epochs = 200;
  }
  std::vector<ModelKind> generators;
  if (a.generator == "all") {
    generators = {ModelKind::AlphaPositive, ModelKind::AlphaNegative, ModelKind::Delta, ModelKind::Mu};
  } else {
    for (auto k : parse_models({a.generator})) {
      if (!has_coupling(k)) throw UsageError("--generator must be alpha+, alpha-, delta, mu or all");
      generators.push_back(k);
    }
  }
  FitConfig fc = a.fit;
  fc.jobs = 1;
  try {
    validate(fc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::vector<SweepConfig> configs;
  for (auto g : generators) {
    SweepConfig sc;
    sc.generator = g;
    sc.activities = a.activities;
    sc.time_points = a.time_points;
    sc.replicates = a.replicates;
    sc.sigma = a.sigma;
    sc.seed = common.seed;
    sc.coupling_grid = a.grid.empty() ? default_coupling_grid(g, a.activities) : a.grid;
    // a shared grid is given as magnitudes; alpha- takes the negative side
    if (!a.grid.empty() && g == ModelKind::AlphaNegative)
      for (double& c : sc.coupling_grid) c = -std::abs(c);
    try {
      validate(sc);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    configs.push_back(sc);
  }

  json config_list = json::array();
  for (const auto& sc : configs) {
    json j = sc;
    j.erase("seed");
    config_list.push_back(j);
  }
  Provenance prov{"sweep", common.seed, json{{"sweeps", config_list}, {"fit", fit_config_json(fc)}}};

  csv::Table table;
  table.comments = prov.comments();
  table.header = {"generator", "coupling", "replicate", "model", "delta_bic", "classification"};
  json summaries = json::array();
  bool all_ok = true;
  int total_cells = 0;
  int wrong_best = 0;
  for (const auto& sc : configs) {
    const auto cells = run_sweep(sc, fc, common.jobs);
    const SweepProperties props = evaluate_sweep(sc.generator, cells);
    json cell_rows = json::array();
    for (const auto& cell : cells) {
      ++total_cells;
      json cj{{"coupling", cell.coupling}, {"replicate", cell.replicate}, {"ok", cell.ok}};
      if (!cell.ok) {
        cj["error"] = cell.error;
        table.rows.push_back({std::string(to_string(sc.generator)), csv::format_double(cell.coupling),
                              std::to_string(cell.replicate), "", "", "failed: " + cell.error});
      } else {
        const auto best = cell.report.best();
        cj["best"] = best ? json(*best) : json(nullptr);
        json dbic = json::object();
        for (const auto& e : cell.report.entries) {
          dbic[std::string(to_string(e.kind))] = e.delta_bic;
          table.rows.push_back({std::string(to_string(sc.generator)), csv::format_double(cell.coupling),
                                std::to_string(cell.replicate), std::string(to_string(e.kind)),
                                csv::format_double(e.delta_bic), std::string(to_string(e.classification))});
        }
        cj["delta_bic"] = dbic;
      }
      cell_rows.push_back(cj);
    }
    wrong_best += props.wrong_best_cells;
    json curve = json::array();
    for (const auto& [c, v] : props.support_curve) curve.push_back(json::array({c, v}));
    const bool ok = props.zero_coupling_ok() && props.monotone_ok();
    all_ok = all_ok && ok;
    summaries.push_back(json{{"generator", sc.generator},
                             {"zero_coupling_null_best", props.zero_coupling_null_best},
                             {"zero_coupling_cells", props.zero_coupling_cells},
                             {"zero_coupling_ok", props.zero_coupling_ok()},
                             {"extreme_coupling", props.extreme_coupling},
                             {"extreme_true_best", props.extreme_true_best},
                             {"extreme_cells", props.extreme_cells},
                             {"extreme_ok", props.extreme_ok()},
                             {"monotone_violations", props.monotone_violations},
                             {"monotone_ok", props.monotone_ok()},
                             {"support_curve", curve},
                             {"failed_cells", props.failed_cells},
                             {"wrong_best_cells", props.wrong_best_cells},
                             {"cells", cell_rows}});
    out << to_string(sc.generator) << ": zero-coupling " << props.zero_coupling_null_best << "/"
        << props.zero_coupling_cells << ", extreme " << props.extreme_true_best << "/"
        << props.extreme_cells << ", monotone violations " << props.monotone_violations << "\n";
  }
  json summary{{"provenance", prov.to_json()},
               {"properties_ok", all_ok},
               {"wrong_best_fraction", total_cells ? static_cast<double>(wrong_best) / total_cells : 0.0},
               {"generators", summaries}};
  const fs::path dir(common.out);
  write_artifact(dir / "sweep.csv", csv_text(table));
  write_artifact(dir / "sweep.json", dump(summary));
  if (!all_ok) throw NumericalError("sweep acceptance properties failed (see sweep.json)");
  return kOk;
}

void add_fit_flags(CLI::App* cmd, FitConfig& fit) {
  cmd->add_option("--segment-length", fit.segment_length, "segment length K")->capture_default_str();
  cmd->add_option("--adam-epochs", fit.adam_epochs)->capture_default_str();
  cmd->add_option("--bfgs-epochs", fit.quasi_newton_epochs)->capture_default_str();
  cmd->add_option("--learning-rate", fit.adam_learning_rate)->capture_default_str();
  cmd->add_option("--runs", fit.runs, "multi-start runs")->capture_default_str();
  cmd->add_option("--max-growth", fit.max_growth, "ceiling on r while fitting")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ecodyn: eco-evolutionary models of economic activities"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file mirroring the flags; subcommand flags nest under its name");

  Common common;
  app.add_option("--seed", common.seed, "root seed")->capture_default_str();
  app.add_option("--jobs", common.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", common.out, "output directory")->capture_default_str();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "integrate a model and write its trajectory");
  simulate->add_option("--model", sim.model, "null|alpha+|alpha-|delta|mu|general")->required();
  simulate->add_option("--params", sim.params, "parameter JSON file")->required();
  simulate->add_option("--years", sim.years, "FIRST:LAST, inclusive")->required();
  simulate->add_option("--sigma", sim.sigma, "log-normal noise for dataset.csv")->capture_default_str();

  IngestArgs ing;
  auto* ingest_cmd = app.add_subcommand("ingest", "per-capita normalisation and filters");
  ingest_cmd->add_option("--exports", ing.exports, "country_code,year,activity_code,value")->required();
  ingest_cmd->add_option("--population", ing.population, "country_code,year,population")->required();
  ingest_cmd->add_option("--min-years", ing.min_years, "years with RCA > 1")->capture_default_str();
  ingest_cmd->add_flag("--consecutive", ing.consecutive, "require those years to be consecutive");
  ingest_cmd->add_option("--exclude", ing.exclude, "activity codes to drop")->delimiter(',');
  ingest_cmd->add_option("--min-country-years", ing.min_country_years, "K")->capture_default_str();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fits per country and model");
  fit_cmd->add_option("--data", fit.data, "datasets.csv from ingest")->required();
  fit_cmd->add_option("--field-source", fit.field_source, "per-capita series for the global field");
  fit_cmd->add_option("--countries", fit.countries, "restrict to these countries")->delimiter(',');
  fit_cmd->add_option("--models", fit.models, "models to fit")->delimiter(',')->capture_default_str();
  add_fit_flags(fit_cmd, fit.fit);

  SelectArgs sel;
  auto* select = app.add_subcommand("select", "BIC model selection over fit results");
  select->add_option("--fits", sel.fits, "directory of fit JSON files (default OUT/fits)");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "regressions over the selection results");
  report->add_option("--selection", rep.selection, "selection.json (default OUT/selection.json)");
  report->add_option("--gdp", rep.gdp, "country_code,gdp")->required();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "synthetic validation of model selection");
  sweep->add_option("--generator", sw.generator, "alpha+|alpha-|delta|mu|all")->capture_default_str();
  sweep->add_option("--grid", sw.grid, "coupling values (magnitudes for alpha-)")->delimiter(',');
  sweep->add_option("--replicates", sw.replicates)->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--sigma", sw.sigma)->capture_default_str();
  sweep->add_option("--activities", sw.activities)->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--time-points", sw.time_points)->capture_default_str();
  sweep->add_flag("--reduced", sw.reduced, "N=4, T=40, 200+200 epochs");
  add_fit_flags(sweep, sw.fit);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, sim, out);
    if (ingest_cmd->parsed()) return cmd_ingest(common, ing, out);
    if (fit_cmd->parsed()) return cmd_fit(common, fit, out, err);
    if (select->parsed()) return cmd_select(common, sel, out);
    if (report->parsed()) return cmd_report(common, rep, out);
    if (sweep->parsed()) return cmd_sweep(common, sw, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const csv::ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const RankDeficient& e) {
    std::string cols;
    for (auto c : e.columns()) cols += (cols.empty() ? "" : ",") + std::to_string(c);
    err << "numerical error: " << e.what() << " (columns " << cols << ")\n";
    return kNumerical;
  } catch (const IntegrationFailure& e) {
    err << "numerical error: integration failed at t=" << e.last_time() << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const FitFailure& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ecodyn::cli
