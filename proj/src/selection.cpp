#include "ecodyn/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecodyn {

std::string_view to_string(Support support) {
  switch (support) {
    case Support::Best: return "best";
    case Support::Supported: return "supported";
    case Support::NoSupport: return "no_support";
  }
  return "unknown";
}

double bic(double log_likelihood, int parameters, Eigen::Index data_count) {
  if (data_count < 1) throw std::invalid_argument("bic: data count must be at least 1");
  if (parameters < 1) throw std::invalid_argument("bic: parameter count must be at least 1");
  return -2.0 * log_likelihood + parameters * std::log(static_cast<double>(data_count));
}

std::vector<double> delta_bic(std::span<const double> bics) {
  if (bics.empty()) throw std::invalid_argument("delta_bic: no models");
  const double lowest = *std::min_element(bics.begin(), bics.end());
  std::vector<double> out;
  out.reserve(bics.size());
  for (double b : bics) out.push_back(b - lowest);
  return out;
}

int parameter_count(ModelKind kind, Eigen::Index activities) {
  if (kind == ModelKind::General) throw std::invalid_argument("the general model is not fitted");
  return static_cast<int>(dynamic_parameter_count(kind, activities));
}

int parameter_count_with_initial_conditions(ModelKind kind, Eigen::Index activities,
                                            Eigen::Index segments) {
  return parameter_count(kind, activities) + static_cast<int>(activities * segments);
}

std::vector<Support> classify(std::span<const SelectionEntry> entries) {
  const auto null_it = std::find_if(entries.begin(), entries.end(),
                                    [](const auto& e) { return e.kind == ModelKind::Null; });
  if (null_it == entries.end()) throw std::invalid_argument("classify: no null model entry");
  const double null_bic = null_it->bic;

  std::vector<Support> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.kind == ModelKind::Null) {
      out.push_back(e.delta_bic <= kEvidenceThreshold ? Support::Best : Support::NoSupport);
      continue;
    }
    bool best = e.delta_bic == 0.0;
    for (std::size_t j = 0; best && j < entries.size(); ++j)
      if (j != i && !(entries[j].delta_bic > kEvidenceThreshold)) best = false;
    if (best)
      out.push_back(Support::Best);
    else if (e.bic - null_bic < -kEvidenceThreshold)
      out.push_back(Support::Supported);
    else
      out.push_back(Support::NoSupport);
  }
  return out;
}

std::optional<ModelKind> SelectionReport::best() const {
  std::optional<ModelKind> out;
  for (const auto& e : entries) {
    if (e.classification != Support::Best) continue;
    if (out) return std::nullopt;
    out = e.kind;
  }
  return out;
}

const SelectionEntry& SelectionReport::entry(ModelKind kind) const {
  for (const auto& e : entries)
    if (e.kind == kind) return e;
  throw std::out_of_range("selection report has no entry for " + std::string(to_string(kind)));
}

SelectionReport select_models(std::string country, std::span<const ModelLikelihood> fits,
                              Eigen::Index activities, Eigen::Index data_count,
                              Eigen::Index segments) {
  SelectionReport report;
  report.country = std::move(country);
  report.activities = activities;
  report.data_count = data_count;
  report.segments = segments;
  std::vector<double> bics;
  for (const auto& fit : fits) {
    SelectionEntry e;
    e.kind = fit.kind;
    e.log_likelihood = fit.log_likelihood;
    e.parameters = parameter_count(fit.kind, activities);
    e.parameters_with_initial_conditions =
        parameter_count_with_initial_conditions(fit.kind, activities, segments);
    e.bic = bic(fit.log_likelihood, e.parameters, data_count);
    bics.push_back(e.bic);
    report.entries.push_back(e);
  }
  const auto deltas = delta_bic(bics);
  for (std::size_t i = 0; i < deltas.size(); ++i) report.entries[i].delta_bic = deltas[i];
  const auto classes = classify(report.entries);
  for (std::size_t i = 0; i < classes.size(); ++i) report.entries[i].classification = classes[i];
  const double null_bic = report.entry(ModelKind::Null).bic;
  for (auto& e : report.entries)
    e.supported_against_null = e.kind != ModelKind::Null && e.bic - null_bic < -kEvidenceThreshold;
  return report;
}

}  // namespace ecodyn
