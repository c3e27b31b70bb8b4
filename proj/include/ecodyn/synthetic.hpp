#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecodyn/inference.hpp"
#include "ecodyn/model.hpp"
#include "ecodyn/selection.hpp"

namespace ecodyn {

/// Simulates `kind` at `years` and multiplies every entry by exp(eps) with
/// eps ~ Normal(0, sigma^2) drawn i.i.d. from the seeded stream.
Dataset generate_dataset(ModelKind kind, const MeanFieldParams<>& params,
                         const CommunityState& initial, std::span<const int> years, double sigma,
                         std::uint64_t seed, const GlobalField* field = nullptr,
                         const IntegratorConfig& config = {});

/// Default coupling values swept for each generating model with N activities.
/// The alpha grids scale with N: the alpha+ grid stays below the typical
/// mutualistic blow-up point, the alpha- grid keeps alpha (N - 1) comparable.
std::vector<double> default_coupling_grid(ModelKind generator, Eigen::Index activities);

/// Mean-field stability edge of alpha+ for self-limitations spread uniformly
/// on [lo, hi]: solves N alpha ln((hi + alpha) / (lo + alpha)) / (hi - lo) = 1.
double typical_alpha_limit(Eigen::Index activities, double lo = 0.5, double hi = 1.5);

struct SweepConfig {
  ModelKind generator = ModelKind::AlphaPositive;
  std::vector<double> coupling_grid;  ///< signed values; empty means the default grid
  double sigma = 0.2;
  Eigen::Index activities = 9;
  Eigen::Index time_points = 59;
  int replicates = 3;
  std::uint64_t seed = 0;
  int first_year = 1962;
  UniformRange growth{0.05, 0.15};
  UniformRange self_limitation{0.5, 1.5};
  /// Initial capital as a fraction of the carrying capacity 1/b.
  UniformRange initial_fraction{0.05, 0.2};
  /// Pseudo-countries whose mean forms the global field of the dispersal generator.
  int field_countries = 5;
};

void validate(const SweepConfig& config);

/// One generated dataset with everything needed to refit it.
struct SweepInstance {
  MeanFieldParams<> params;
  CommunityState initial;
  std::optional<GlobalField> field;
  Dataset dataset;
};

/// Base parameters, initial state, field and noise depend on (seed, generator,
/// replicate) only, so every grid value of a replicate shares them.
SweepInstance make_sweep_instance(const SweepConfig& config, double coupling, int replicate);

struct SweepCell {
  ModelKind generator = ModelKind::Null;
  double coupling = 0.0;
  int replicate = 0;
  bool ok = false;
  std::string error;
  SelectionReport report;
  std::vector<double> r_squared;  ///< per fitted model, in report order
};

/// Fits all five sub-models to one generated dataset and classifies them.
SweepCell run_sweep_cell(const SweepConfig& config, const FitConfig& fit_config, double coupling,
                         int replicate);

/// Every (grid value, replicate) cell of one generator; cells run concurrently
/// on `jobs` workers.
std::vector<SweepCell> run_sweep(const SweepConfig& config, const FitConfig& fit_config, int jobs = 1);

/// Number of models other than `generator` with delta BIC > 10.
int excluded_competitors(const SweepCell& cell);

struct SweepProperties {
  ModelKind generator = ModelKind::Null;
  int zero_coupling_cells = 0;
  int zero_coupling_null_best = 0;
  double extreme_coupling = 0.0;
  int extreme_cells = 0;
  int extreme_true_best = 0;
  int monotone_violations = 0;
  /// Mean excluded-competitor count per grid value, ordered by |coupling|.
  std::vector<std::pair<double, double>> support_curve;
  int failed_cells = 0;
  int wrong_best_cells = 0;  ///< cells where a model other than null/generator is Best

  bool zero_coupling_ok() const { return zero_coupling_cells > 0 && zero_coupling_null_best == zero_coupling_cells; }
  /// Vacuous when the grid holds only zero coupling.
  bool extreme_ok() const {
    return extreme_coupling == 0.0 || (extreme_cells > 0 && 3 * extreme_true_best >= 2 * extreme_cells);
  }
  bool monotone_ok() const { return monotone_violations <= 1; }
};

SweepProperties evaluate_sweep(ModelKind generator, std::span<const SweepCell> cells);

}  // namespace ecodyn
