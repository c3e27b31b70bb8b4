#include "ecodyn/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "ecodyn/rng.hpp"

namespace ecodyn {

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  // JSON has no inf or nan
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

double number(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, found \"" + s + "\"");
  }
  return j.get<double>();
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Eigen::VectorXd vector_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i]);
  return v;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols_if_empty = 0) {
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) throw std::invalid_argument("ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = vector_from(j[r]).transpose();
  }
  return m;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, value] : j.items())
    if (!names.count(key)) throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json range_json(const UniformRange& r) { return json::array({r.lo, r.hi}); }

void read_range(const json& j, const char* key, UniformRange& r) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw std::invalid_argument(std::string(key) + " must be [lo, hi]");
  r = {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace

void to_json(json& j, ModelKind kind) { j = std::string(to_string(kind)); }
void from_json(const json& j, ModelKind& kind) { kind = parse_model_kind(j.get<std::string>()); }

void to_json(json& j, const MeanFieldParams<>& p) {
  j = json{{"growth", vector_json(p.growth)},
           {"self_limitation", vector_json(p.self_limitation)},
           {"coupling", number(p.coupling)}};
}

void from_json(const json& j, MeanFieldParams<>& p) {
  p.growth = vector_from(j.at("growth"));
  p.self_limitation = vector_from(j.at("self_limitation"));
  p.coupling = j.contains("coupling") ? number(j.at("coupling")) : 0.0;
}

void to_json(json& j, const Segment& s) {
  j = json{{"begin", s.begin}, {"end", s.end}, {"initial", vector_json(s.initial)}};
}

void from_json(const json& j, Segment& s) {
  s.begin = j.at("begin").get<Eigen::Index>();
  s.end = j.at("end").get<Eigen::Index>();
  s.initial = vector_from(j.at("initial"));
}

void to_json(json& j, const RunDiagnostics& d) {
  j = json{{"seed", d.seed},
           {"initial_loss", number(d.initial_loss)},
           {"adam_loss", number(d.adam_loss)},
           {"final_loss", number(d.final_loss)},
           {"log_likelihood", number(d.log_likelihood)},
           {"adam_epochs", d.adam_epochs},
           {"bfgs_iterations", d.bfgs_iterations},
           {"converged", d.converged},
           {"warm_start", d.warm_start},
           {"status", d.status}};
}

void from_json(const json& j, RunDiagnostics& d) {
  d.seed = j.at("seed").get<std::uint64_t>();
  d.initial_loss = number(j.at("initial_loss"));
  d.adam_loss = number(j.at("adam_loss"));
  d.final_loss = number(j.at("final_loss"));
  d.log_likelihood = number(j.at("log_likelihood"));
  d.adam_epochs = j.at("adam_epochs").get<int>();
  d.bfgs_iterations = j.at("bfgs_iterations").get<int>();
  d.converged = j.at("converged").get<bool>();
  d.warm_start = j.value("warm_start", false);
  d.status = j.at("status").get<std::string>();
}

void to_json(json& j, const FitResult& f) {
  j = json{{"model", f.kind},
           {"success", f.success},
           {"params", f.params},
           {"segments", f.segments},
           {"loss", number(f.loss)},
           {"log_likelihood", number(f.log_likelihood)},
           {"sigma_hat", number(f.sigma_hat)},
           {"r_squared", number(f.r_squared)},
           {"data_count", f.data_count},
           {"runs", f.runs}};
}

void from_json(const json& j, FitResult& f) {
  f.kind = j.at("model").get<ModelKind>();
  f.success = j.at("success").get<bool>();
  f.params = j.at("params").get<MeanFieldParams<>>();
  f.segments = j.at("segments").get<std::vector<Segment>>();
  f.loss = number(j.at("loss"));
  f.log_likelihood = number(j.at("log_likelihood"));
  f.sigma_hat = number(j.at("sigma_hat"));
  f.r_squared = number(j.at("r_squared"));
  f.data_count = j.at("data_count").get<Eigen::Index>();
  f.runs = j.at("runs").get<std::vector<RunDiagnostics>>();
}

void to_json(json& j, const SelectionEntry& e) {
  j = json{{"model", e.kind},
           {"log_likelihood", number(e.log_likelihood)},
           {"parameters", e.parameters},
           {"parameters_with_initial_conditions", e.parameters_with_initial_conditions},
           {"bic", number(e.bic)},
           {"delta_bic", number(e.delta_bic)},
           {"classification", std::string(to_string(e.classification))},
           {"supported_against_null", e.supported_against_null}};
}

void to_json(json& j, const SelectionReport& r) {
  const auto best = r.best();
  j = json{{"country", r.country},
           {"activities", r.activities},
           {"data_count", r.data_count},
           {"segments", r.segments},
           {"best", best ? json(*best) : json(nullptr)},
           {"entries", r.entries}};
}

void to_json(json& j, const IntegratorConfig& c) {
  j = json{{"rel_tol", c.rel_tol}, {"abs_tol", c.abs_tol}, {"max_steps", c.max_steps}};
}

void from_json(const json& j, IntegratorConfig& c) {
  reject_unknown(j, {"rel_tol", "abs_tol", "max_steps"}, "integrator");
  read_if(j, "rel_tol", c.rel_tol);
  read_if(j, "abs_tol", c.abs_tol);
  read_if(j, "max_steps", c.max_steps);
}

void to_json(json& j, const FitConfig& c) {
  j = json{{"segment_length", c.segment_length},
           {"adam_epochs", c.adam_epochs},
           {"adam_learning_rate", c.adam_learning_rate},
           {"quasi_newton_epochs", c.quasi_newton_epochs},
           {"runs", c.runs},
           {"seed", c.seed},
           {"init_growth", range_json(c.init_ranges.growth)},
           {"init_self_limitation", range_json(c.init_ranges.self_limitation)},
           {"init_alpha", range_json(c.init_ranges.alpha)},
           {"init_mu", range_json(c.init_ranges.mu)},
           {"init_delta", range_json(c.init_ranges.delta)},
           {"max_growth", c.max_growth},
           {"integrator", c.integrator}};
}

void from_json(const json& j, FitConfig& c) {
  reject_unknown(j,
                 {"segment_length", "adam_epochs", "adam_learning_rate", "quasi_newton_epochs",
                  "runs", "seed", "init_growth", "init_self_limitation", "init_alpha", "init_mu",
                  "init_delta", "max_growth", "integrator"},
                 "fit config");
  read_if(j, "segment_length", c.segment_length);
  read_if(j, "adam_epochs", c.adam_epochs);
  read_if(j, "adam_learning_rate", c.adam_learning_rate);
  read_if(j, "quasi_newton_epochs", c.quasi_newton_epochs);
  read_if(j, "runs", c.runs);
  read_if(j, "seed", c.seed);
  read_range(j, "init_growth", c.init_ranges.growth);
  read_range(j, "init_self_limitation", c.init_ranges.self_limitation);
  read_range(j, "init_alpha", c.init_ranges.alpha);
  read_range(j, "init_mu", c.init_ranges.mu);
  read_range(j, "init_delta", c.init_ranges.delta);
  read_if(j, "max_growth", c.max_growth);
  if (j.contains("integrator")) from_json(j.at("integrator"), c.integrator);
}

void to_json(json& j, const SweepConfig& c) {
  j = json{{"generator", c.generator},
           {"coupling_grid", c.coupling_grid},
           {"sigma", c.sigma},
           {"activities", c.activities},
           {"time_points", c.time_points},
           {"replicates", c.replicates},
           {"seed", c.seed},
           {"first_year", c.first_year},
           {"growth", range_json(c.growth)},
           {"self_limitation", range_json(c.self_limitation)},
           {"initial_fraction", range_json(c.initial_fraction)},
           {"field_countries", c.field_countries}};
}

void from_json(const json& j, SweepConfig& c) {
  reject_unknown(j,
                 {"generator", "coupling_grid", "sigma", "activities", "time_points", "replicates",
                  "seed", "first_year", "growth", "self_limitation", "initial_fraction",
                  "field_countries"},
                 "sweep config");
  if (j.contains("generator")) c.generator = j.at("generator").get<ModelKind>();
  read_if(j, "coupling_grid", c.coupling_grid);
  read_if(j, "sigma", c.sigma);
  read_if(j, "activities", c.activities);
  read_if(j, "time_points", c.time_points);
  read_if(j, "replicates", c.replicates);
  read_if(j, "seed", c.seed);
  read_if(j, "first_year", c.first_year);
  read_range(j, "growth", c.growth);
  read_range(j, "self_limitation", c.self_limitation);
  read_range(j, "initial_fraction", c.initial_fraction);
  read_if(j, "field_countries", c.field_countries);
}

void to_json(json& j, const RegressionResult& r) {
  json rows = json::array();
  for (Eigen::Index k = 0; k < r.coefficients.size(); ++k)
    rows.push_back(json{{"term", r.names.at(static_cast<std::size_t>(k))},
                        {"estimate", number(r.coefficients(k))},
                        {"std_error", number(r.standard_errors(k))},
                        {"t", number(r.t_statistics(k))},
                        {"p", number(r.p_values(k))}});
  j = json{{"observations", r.observations}, {"r_squared", number(r.r_squared)}, {"coefficients", rows}};
}

void to_json(json& j, const FilterLog& log) {
  j = json::array();
  for (const auto& d : log.dropped)
    j.push_back(json{{"country", d.country},
                     {"activity", d.activity.empty() ? json(nullptr) : json(d.activity)},
                     {"reason", d.reason}});
}

void to_json(json& j, const GeneralParams& p) {
  j = json{{"growth", vector_json(p.growth)},
           {"self_limitation", vector_json(p.self_limitation)},
           {"interaction", matrix_json(p.interaction)},
           {"dispersal", matrix_json(p.dispersal)},
           {"transfer", matrix_json(p.transfer)}};
}

void from_json(const json& j, GeneralParams& p) {
  p.growth = vector_from(j.at("growth"));
  p.self_limitation = vector_from(j.at("self_limitation"));
  const Eigen::Index n = p.growth.size();
  p.interaction = j.contains("interaction") ? matrix_from(j.at("interaction"), n)
                                            : Eigen::MatrixXd::Zero(n, n);
  p.dispersal = j.contains("dispersal") ? matrix_from(j.at("dispersal"), n) : Eigen::MatrixXd(0, n);
  p.transfer = j.contains("transfer") ? matrix_from(j.at("transfer"), n) : Eigen::MatrixXd::Zero(n, n);
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace ecodyn
