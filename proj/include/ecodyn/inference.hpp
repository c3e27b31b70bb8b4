#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ecodyn/integrator.hpp"
#include "ecodyn/model.hpp"

namespace ecodyn {

/// Observed per-capita exports of one country. Missing (activity, year) pairs
/// are stored as NaN; every present entry is strictly positive.
struct Dataset {
  std::string country;
  std::vector<int> years;
  Eigen::MatrixXd observations;  ///< years x activities
  std::vector<std::string> activity_labels;

  Eigen::Index time_points() const { return observations.rows(); }
  Eigen::Index activities() const { return observations.cols(); }
  bool observed(Eigen::Index t, Eigen::Index i) const { return !std::isnan(observations(t, i)); }
  /// Number of present entries: the data count N*T used by BIC.
  Eigen::Index observed_count() const;
  std::vector<double> times() const { return {years.begin(), years.end()}; }
};

/// Throws std::invalid_argument if the dataset breaks its invariants.
void validate(const Dataset& dataset);

/// Half-open row range [begin, end) of the time grid with its own initial condition.
struct Segment {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::VectorXd initial;

  Eigen::Index size() const { return end - begin; }
};

/// Disjoint contiguous segments of length K. A trailing remainder shorter than
/// 3 points is merged into the last segment; otherwise it stands alone.
std::vector<Segment> segment_partition(Eigen::Index time_points, Eigen::Index segment_length);

struct ModelSpec {
  ModelKind kind = ModelKind::Null;
  MeanFieldParams<> params;
};

struct UniformRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Uniform sampling intervals for the initial parameter draw. The coupling
/// range is given as magnitudes; the sign follows the model kind.
struct InitRanges {
  UniformRange growth{0.05, 0.15};
  UniformRange self_limitation{0.5, 1.5};
  UniformRange alpha{0.5, 1.5};
  UniformRange mu{0.0005, 0.0015};
  UniformRange delta{0.0005, 0.0015};
};

struct FitConfig {
  Eigen::Index segment_length = 20;
  int adam_epochs = 800;
  double adam_learning_rate = 1e-2;
  int quasi_newton_epochs = 800;
  int runs = 5;
  std::uint64_t seed = 0;
  InitRanges init_ranges;
  /// Per-solve step budget during fitting. Far-off iterates (large delta,
  /// say) can be stiff enough to take 1e5 steps per segment; they are
  /// scored +inf instead. Plausible fits need well under 200.
  IntegratorConfig integrator{1e-6, 1e-8, 1'000};
  /// Ceiling on r_i (per unit time) while fitting, for the same reason.
  double max_growth = 10.0;
  int jobs = 1;  ///< concurrent runs inside fit_multi_start
};

void validate(const FitConfig& config);

struct RunDiagnostics {
  std::uint64_t seed = 0;
  double initial_loss = 0.0;
  double adam_loss = 0.0;
  double final_loss = 0.0;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int adam_epochs = 0;
  int bfgs_iterations = 0;
  bool converged = false;
  bool warm_start = false;  ///< started from the nested null fit
  std::string status;
};

struct FitResult {
  ModelKind kind = ModelKind::Null;
  MeanFieldParams<> params;
  std::vector<Segment> segments;
  double loss = std::numeric_limits<double>::infinity();
  double log_likelihood = -std::numeric_limits<double>::infinity();
  double sigma_hat = 0.0;
  double r_squared = -std::numeric_limits<double>::infinity();
  Eigen::Index data_count = 0;
  bool success = false;
  std::vector<RunDiagnostics> runs;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model predictions on the dataset's grid, each segment integrated from its
/// own initial condition. Throws IntegrationFailure.
Eigen::MatrixXd predict(const ModelSpec& model, std::span<const Segment> segments,
                        const Dataset& dataset, const GlobalField* field = nullptr,
                        const IntegratorConfig& config = {});

/// Log-normal log-likelihood with noise covariance sigma^2 I. Returns -inf
/// when integration fails or a prediction is not positive.
double log_likelihood(const ModelSpec& model, std::span<const Segment> segments,
                      const Dataset& dataset, double sigma, const GlobalField* field = nullptr,
                      const IntegratorConfig& config = {});

/// Sum of squared log residuals; +inf when integration fails.
double concentrated_loss(const ModelSpec& model, std::span<const Segment> segments,
                         const Dataset& dataset, const GlobalField* field = nullptr,
                         const IntegratorConfig& config = {});

/// Log-likelihood at the profiled noise level sigma^2 = loss / data_count.
double profiled_log_likelihood(double loss, Eigen::Index data_count, double sum_log_observations);

/// Sum of ln y over present entries (the Jacobian term of the log-normal density).
double sum_log_observations(const Dataset& dataset);

/// 1 - SS_res / SS_tot on log values pooled over present entries. Throws
/// std::domain_error when the observations are constant.
double r_squared(const Eigen::MatrixXd& log_observed, const Eigen::MatrixXd& log_predicted);
double r_squared(const FitResult& fit, const Dataset& dataset, const GlobalField* field = nullptr,
                 const IntegratorConfig& config = {});

/// The concentrated loss as a function of unconstrained coordinates
/// x = [ln r, ln b, ln|coupling|, ln n0(segment 0), ln n0(segment 1), ...].
/// The coupling's sign is fixed by the model kind.
class SegmentedObjective {
 public:
  /// Points with a growth rate above `max_growth` score +inf.
  SegmentedObjective(ModelKind kind, const Dataset& dataset, std::vector<Segment> segments,
                     const GlobalField* field, IntegratorConfig config,
                     double max_growth = std::numeric_limits<double>::infinity());

  Eigen::Index dimension() const;
  ModelKind kind() const { return kind_; }
  const std::vector<Segment>& segments() const { return segments_; }

  Eigen::VectorXd pack(const ModelSpec& model, std::span<const Segment> segments) const;
  std::pair<ModelSpec, std::vector<Segment>> unpack(const Eigen::VectorXd& x) const;

  /// Loss at x, with the gradient through forward sensitivities when
  /// `gradient` is non-null. Returns +inf on integration failure.
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const;

 private:
  ModelKind kind_;
  const Dataset& dataset_;
  std::vector<Segment> segments_;
  const GlobalField* field_;
  IntegratorConfig config_;
  double max_growth_;
  Eigen::Index theta_size_;
};

/// Initial conditions for each segment taken from the data: the first present
/// observation of each activity inside the segment, else its geometric mean.
void initialize_from_data(std::vector<Segment>& segments, const Dataset& dataset);

/// Seed of run `run` within a multi-start fit configured with `config.seed`.
std::uint64_t run_seed(const FitConfig& config, int run);

/// One optimisation run: random parameter draw, Adam, then BFGS.
FitResult fit_single(ModelKind kind, const Dataset& dataset, const FitConfig& config,
                     const GlobalField* field, std::uint64_t stream_seed);

/// `config.runs` independent runs; returns the one with the highest
/// log-likelihood and records every run's diagnostics. Throws FitFailure when
/// all runs fail.
///
/// With a successful null fit of the same dataset in `nested`, a coupled
/// model gets one extra run started at the null optimum with a small
/// coupling, so it cannot end up far below the model it contains.
FitResult fit_multi_start(ModelKind kind, const Dataset& dataset, const FitConfig& config,
                          const GlobalField* field = nullptr, const FitResult* nested = nullptr);

}  // namespace ecodyn
