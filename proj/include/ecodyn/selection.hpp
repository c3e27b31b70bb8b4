#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ecodyn/model.hpp"

namespace ecodyn {

/// Threshold on BIC differences used by every support rule.
inline constexpr double kEvidenceThreshold = 10.0;

enum class Support { Best, Supported, NoSupport };

std::string_view to_string(Support support);

/// -2 ln L + k ln(n_data).
double bic(double log_likelihood, int parameters, Eigen::Index data_count);

/// BIC minus the minimum BIC. Throws std::invalid_argument on empty input.
std::vector<double> delta_bic(std::span<const double> bics);

/// Dynamical parameters only: 2N for the null model, 2N + 1 otherwise.
int parameter_count(ModelKind kind, Eigen::Index activities);
/// Adds the per-segment initial conditions (reported, not used for ranking).
int parameter_count_with_initial_conditions(ModelKind kind, Eigen::Index activities,
                                            Eigen::Index segments);

struct SelectionEntry {
  ModelKind kind = ModelKind::Null;
  double log_likelihood = 0.0;
  int parameters = 0;
  int parameters_with_initial_conditions = 0;
  double bic = 0.0;
  double delta_bic = 0.0;
  Support classification = Support::NoSupport;
  /// Pairwise rule BIC_i - BIC_null < -10; may hold together with Best.
  bool supported_against_null = false;
};

/// Applies the support rules to entries whose bic and delta_bic are filled in:
///   - the null model is Best when its delta BIC <= 10;
///   - an alternative is Best when its delta BIC is 0 and every other model's
///     delta BIC exceeds 10;
///   - otherwise an alternative is Supported when BIC_i - BIC_null < -10.
/// Throws std::invalid_argument when no null entry is present.
std::vector<Support> classify(std::span<const SelectionEntry> entries);

struct SelectionReport {
  std::string country;
  Eigen::Index activities = 0;
  Eigen::Index data_count = 0;
  Eigen::Index segments = 0;
  std::vector<SelectionEntry> entries;

  /// The unique Best model, if any.
  std::optional<ModelKind> best() const;
  const SelectionEntry& entry(ModelKind kind) const;
};

struct ModelLikelihood {
  ModelKind kind;
  double log_likelihood;
};

/// Computes BIC, delta BIC and classifications for one country.
SelectionReport select_models(std::string country, std::span<const ModelLikelihood> fits,
                              Eigen::Index activities, Eigen::Index data_count,
                              Eigen::Index segments);

}  // namespace ecodyn
