#include "ecodyn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ecodyn/optimizers.hpp"
#include "ecodyn/parallel.hpp"
#include "ecodyn/rng.hpp"

namespace ecodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> segment_times(const Dataset& dataset, const Segment& segment) {
  return {dataset.years.begin() + segment.begin, dataset.years.begin() + segment.end};
}

void check_segments(std::span<const Segment> segments, const Dataset& dataset) {
  Eigen::Index expected = 0;
  for (const auto& s : segments) {
    if (s.begin != expected || s.end <= s.begin)
      throw std::invalid_argument("segments must partition the time grid contiguously");
    if (s.initial.size() != dataset.activities())
      throw std::invalid_argument("segment initial condition has the wrong length");
    expected = s.end;
  }
  if (expected != dataset.time_points())
    throw std::invalid_argument("segments do not cover the time grid");
}

}  // namespace

Eigen::Index Dataset::observed_count() const {
  return static_cast<Eigen::Index>((observations.array() == observations.array()).count());
}

void validate(const Dataset& dataset) {
  if (static_cast<Eigen::Index>(dataset.years.size()) != dataset.observations.rows())
    throw std::invalid_argument("dataset '" + dataset.country + "': years and rows differ");
  if (static_cast<Eigen::Index>(dataset.activity_labels.size()) != dataset.observations.cols())
    throw std::invalid_argument("dataset '" + dataset.country + "': labels and columns differ");
  for (std::size_t i = 1; i < dataset.years.size(); ++i)
    if (dataset.years[i] <= dataset.years[i - 1])
      throw std::invalid_argument("dataset '" + dataset.country + "': years must increase");
  for (Eigen::Index t = 0; t < dataset.observations.rows(); ++t)
    for (Eigen::Index i = 0; i < dataset.observations.cols(); ++i) {
      const double v = dataset.observations(t, i);
      if (!std::isnan(v) && !(v > 0.0 && std::isfinite(v)))
        throw std::invalid_argument("dataset '" + dataset.country +
                                    "': observations must be strictly positive");
    }
}

std::vector<Segment> segment_partition(Eigen::Index time_points, Eigen::Index segment_length) {
  if (time_points < 3) throw std::invalid_argument("segment_partition: need at least 3 time points");
  if (segment_length < 3) throw std::invalid_argument("segment_partition: K must be at least 3");
  std::vector<Segment> out;
  Eigen::Index begin = 0;
  while (begin < time_points) {
    const Eigen::Index end = std::min(begin + segment_length, time_points);
    if (end - begin < 3 && !out.empty()) {
      out.back().end = end;
    } else {
      out.push_back(Segment{begin, end, {}});
    }
    begin = end;
  }
  return out;
}

void validate(const FitConfig& config) {
  if (config.segment_length < 3) throw std::invalid_argument("FitConfig: K must be at least 3");
  if (config.runs < 1) throw std::invalid_argument("FitConfig: runs must be at least 1");
  if (config.adam_epochs < 0 || config.quasi_newton_epochs < 0)
    throw std::invalid_argument("FitConfig: epoch counts must be non-negative");
  if (!(config.adam_learning_rate > 0.0))
    throw std::invalid_argument("FitConfig: learning rate must be positive");
  if (!(config.max_growth >= config.init_ranges.growth.hi))
    throw std::invalid_argument("FitConfig: max_growth is below the initial growth range");
}

Eigen::MatrixXd predict(const ModelSpec& model, std::span<const Segment> segments,
                        const Dataset& dataset, const GlobalField* field,
                        const IntegratorConfig& config) {
  check_segments(segments, dataset);
  Eigen::MatrixXd out(dataset.time_points(), dataset.activities());
  for (const auto& s : segments) {
    const auto times = segment_times(dataset, s);
    const Trajectory traj = integrate(model.kind, model.params, s.initial, times, field, config);
    out.middleRows(s.begin, s.size()) = traj.states;
  }
  return out;
}

double sum_log_observations(const Dataset& dataset) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < dataset.time_points(); ++t)
    for (Eigen::Index i = 0; i < dataset.activities(); ++i)
      if (dataset.observed(t, i)) sum += std::log(dataset.observations(t, i));
  return sum;
}

namespace {

// Sum of squared log residuals and the residual count; +inf on failure.
std::pair<double, Eigen::Index> squared_log_residuals(const ModelSpec& model,
                                                      std::span<const Segment> segments,
                                                      const Dataset& dataset,
                                                      const GlobalField* field,
                                                      const IntegratorConfig& config) {
  Eigen::MatrixXd pred;
  try {
    pred = predict(model, segments, dataset, field, config);
  } catch (const IntegrationFailure&) {
    return {kInf, 0};
  } catch (const InvalidState&) {
    return {kInf, 0};
  }
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t)
    for (Eigen::Index i = 0; i < pred.cols(); ++i) {
      if (!dataset.observed(t, i)) continue;
      if (!(pred(t, i) > 0.0)) return {kInf, 0};
      const double d = std::log(dataset.observations(t, i)) - std::log(pred(t, i));
      sum += d * d;
      ++count;
    }
  return {sum, count};
}

}  // namespace

double log_likelihood(const ModelSpec& model, std::span<const Segment> segments,
                      const Dataset& dataset, double sigma, const GlobalField* field,
                      const IntegratorConfig& config) {
  if (!(sigma > 0.0)) throw std::invalid_argument("log_likelihood: sigma must be positive");
  const auto [ssr, count] = squared_log_residuals(model, segments, dataset, field, config);
  if (!std::isfinite(ssr)) return -kInf;
  const double n = static_cast<double>(count);
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma) -
         sum_log_observations(dataset) - 0.5 * ssr / (sigma * sigma);
}

double concentrated_loss(const ModelSpec& model, std::span<const Segment> segments,
                         const Dataset& dataset, const GlobalField* field,
                         const IntegratorConfig& config) {
  return squared_log_residuals(model, segments, dataset, field, config).first;
}

double profiled_log_likelihood(double loss, Eigen::Index data_count, double sum_log_obs) {
  if (!std::isfinite(loss) || data_count <= 0) return -kInf;
  const double n = static_cast<double>(data_count);
  // A perfect fit has an unbounded likelihood; clamp sigma^2 away from zero.
  const double sigma2 = std::max(loss / n, 1e-300);
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - sum_log_obs - 0.5 * n;
}

double r_squared(const Eigen::MatrixXd& log_observed, const Eigen::MatrixXd& log_predicted) {
  if (log_observed.rows() != log_predicted.rows() || log_observed.cols() != log_predicted.cols())
    throw std::invalid_argument("r_squared: shape mismatch");
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index k = 0; k < log_observed.size(); ++k)
    if (!std::isnan(log_observed(k))) {
      sum += log_observed(k);
      ++count;
    }
  if (count == 0) throw std::domain_error("r_squared: no observations");
  const double mean = sum / static_cast<double>(count);
  double ss_tot = 0.0, ss_res = 0.0;
  for (Eigen::Index k = 0; k < log_observed.size(); ++k) {
    if (std::isnan(log_observed(k))) continue;
    ss_tot += (log_observed(k) - mean) * (log_observed(k) - mean);
    ss_res += (log_observed(k) - log_predicted(k)) * (log_observed(k) - log_predicted(k));
  }
  if (ss_tot == 0.0) throw std::domain_error("r_squared: observations are constant");
  return 1.0 - ss_res / ss_tot;
}

double r_squared(const FitResult& fit, const Dataset& dataset, const GlobalField* field,
                 const IntegratorConfig& config) {
  if (!fit.success) throw std::invalid_argument("r_squared: fit did not succeed");
  const Eigen::MatrixXd pred =
      predict(ModelSpec{fit.kind, fit.params}, fit.segments, dataset, field, config);
  return r_squared(Eigen::MatrixXd(dataset.observations.array().log()),
                   Eigen::MatrixXd(pred.array().log()));
}

SegmentedObjective::SegmentedObjective(ModelKind kind, const Dataset& dataset,
                                       std::vector<Segment> segments, const GlobalField* field,
                                       IntegratorConfig config, double max_growth)
    : kind_(kind),
      dataset_(dataset),
      segments_(std::move(segments)),
      field_(field),
      config_(config),
      max_growth_(max_growth),
      theta_size_(dynamic_parameter_count(kind, dataset.activities())) {
  if (kind == ModelKind::General)
    throw std::invalid_argument("the general model is simulation-only");
  if (kind == ModelKind::Delta && (field == nullptr || field->empty()))
    throw std::invalid_argument("the dispersal model requires a global field");
}

Eigen::Index SegmentedObjective::dimension() const {
  return theta_size_ + static_cast<Eigen::Index>(segments_.size()) * dataset_.activities();
}

Eigen::VectorXd SegmentedObjective::pack(const ModelSpec& model,
                                         std::span<const Segment> segments) const {
  const Eigen::Index n = dataset_.activities();
  Eigen::VectorXd x(dimension());
  x.head(n) = model.params.growth.array().log();
  x.segment(n, n) = model.params.self_limitation.array().log();
  if (has_coupling(kind_)) x(2 * n) = std::log(std::abs(model.params.coupling));
  for (std::size_t s = 0; s < segments.size(); ++s)
    x.segment(theta_size_ + static_cast<Eigen::Index>(s) * n, n) = segments[s].initial.array().log();
  return x;
}

std::pair<ModelSpec, std::vector<Segment>> SegmentedObjective::unpack(const Eigen::VectorXd& x) const {
  const Eigen::Index n = dataset_.activities();
  ModelSpec model{kind_, {}};
  model.params.growth = x.head(n).array().exp();
  model.params.self_limitation = x.segment(n, n).array().exp();
  if (has_coupling(kind_)) {
    const int sign = kind_ == ModelKind::AlphaNegative ? -1 : 1;
    model.params.coupling = sign * std::exp(x(2 * n));
  }
  std::vector<Segment> segments = segments_;
  for (std::size_t s = 0; s < segments.size(); ++s)
    segments[s].initial = x.segment(theta_size_ + static_cast<Eigen::Index>(s) * n, n).array().exp();
  return {std::move(model), std::move(segments)};
}

double SegmentedObjective::operator()(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const {
  if (x.size() != dimension()) throw std::invalid_argument("objective: wrong dimension");
  if (!x.allFinite()) return kInf;
  const Eigen::Index n = dataset_.activities();
  auto [model, segments] = unpack(x);
  if (gradient != nullptr) gradient->setZero(dimension());
  if ((model.params.growth.array() > max_growth_).any()) return kInf;

  double loss = 0.0;
  try {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const Segment& seg = segments[s];
      const auto times = segment_times(dataset_, seg);
      const Eigen::Index ic_offset = theta_size_ + static_cast<Eigen::Index>(s) * n;
      if (gradient == nullptr) {
        const Trajectory traj = integrate(kind_, model.params, seg.initial, times, field_, config_);
        for (Eigen::Index t = 0; t < seg.size(); ++t)
          for (Eigen::Index i = 0; i < n; ++i) {
            if (!dataset_.observed(seg.begin + t, i)) continue;
            const double pred = traj.states(t, i);
            if (!(pred > 0.0)) return kInf;
            const double d = std::log(dataset_.observations(seg.begin + t, i)) - std::log(pred);
            loss += d * d;
          }
        continue;
      }
      const SensitivityTrajectory st =
          integrate_with_sensitivity(kind_, model.params, seg.initial, times, field_, config_);
      for (Eigen::Index t = 0; t < seg.size(); ++t) {
        const Eigen::MatrixXd& sens = st.sensitivities[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!dataset_.observed(seg.begin + t, i)) continue;
          const double pred = st.trajectory.states(t, i);
          if (!(pred > 0.0)) return kInf;
          const double d = std::log(dataset_.observations(seg.begin + t, i)) - std::log(pred);
          loss += d * d;
          const double w = -2.0 * d / pred;
          gradient->head(theta_size_) += w * sens.row(i).head(theta_size_).transpose();
          gradient->segment(ic_offset, n) += w * sens.row(i).tail(n).transpose();
        }
      }
    }
  } catch (const IntegrationFailure&) {
    return kInf;
  } catch (const std::invalid_argument&) {
    // Parameters left the representable range (exp overflow or underflow).
    return kInf;
  }

  if (gradient != nullptr) {
    // Chain rule through the exponential reparameterisation.
    auto& g = *gradient;
    g.head(n).array() *= model.params.growth.array();
    g.segment(n, n).array() *= model.params.self_limitation.array();
    if (has_coupling(kind_)) g(2 * n) *= model.params.coupling;
    for (std::size_t s = 0; s < segments.size(); ++s)
      g.segment(theta_size_ + static_cast<Eigen::Index>(s) * n, n).array() *=
          segments[s].initial.array();
  }
  return loss;
}

void initialize_from_data(std::vector<Segment>& segments, const Dataset& dataset) {
  const Eigen::Index n = dataset.activities();
  Eigen::VectorXd geometric_mean(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index t = 0; t < dataset.time_points(); ++t)
      if (dataset.observed(t, i)) {
        sum += std::log(dataset.observations(t, i));
        ++count;
      }
    if (count == 0)
      throw std::invalid_argument("dataset '" + dataset.country + "': activity '" +
                                  dataset.activity_labels[static_cast<std::size_t>(i)] +
                                  "' has no observations");
    geometric_mean(i) = std::exp(sum / count);
  }
  for (auto& seg : segments) {
    seg.initial = geometric_mean;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = seg.begin; t < seg.end; ++t)
        if (dataset.observed(t, i)) {
          seg.initial(i) = dataset.observations(t, i);
          break;
        }
  }
}

std::uint64_t run_seed(const FitConfig& config, int run) {
  return derive_seed(config.seed, {static_cast<std::uint64_t>(run)});
}

namespace {

UniformRange coupling_range(ModelKind kind, const InitRanges& ranges) {
  switch (kind) {
    case ModelKind::AlphaPositive:
    case ModelKind::AlphaNegative: return ranges.alpha;
    case ModelKind::Delta: return ranges.delta;
    case ModelKind::Mu: return ranges.mu;
    default: return {};
  }
}

FitResult optimize_from(ModelKind kind, const Dataset& dataset, const FitConfig& config,
                        const GlobalField* field, const ModelSpec& start,
                        const std::vector<Segment>& segments, RunDiagnostics diag) {
  const Eigen::Index n = dataset.activities();
  const SegmentedObjective objective(kind, dataset, segments, field, config.integrator,
                                     config.max_growth);
  const Objective f = [&objective](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    return objective(x, g);
  };

  Eigen::VectorXd x = objective.pack(start, segments);
  diag.initial_loss = f(x, nullptr);
  // A draw whose coupling makes the initial trajectories diverge is pulled
  // toward the uncoupled model until the loss is finite.
  for (int k = 0; k < 60 && !std::isfinite(diag.initial_loss) && has_coupling(kind); ++k) {
    x(2 * n) -= std::log(2.0);
    diag.initial_loss = f(x, nullptr);
  }

  FitResult result;
  result.kind = kind;
  result.data_count = dataset.observed_count();
  if (!std::isfinite(diag.initial_loss)) {
    diag.status = "infeasible initial parameters";
    result.runs.push_back(diag);
    return result;
  }

  AdamOptions adam;
  adam.learning_rate = config.adam_learning_rate;
  adam.epochs = config.adam_epochs;
  const OptimizationResult after_adam = minimize_adam(f, x, adam);
  diag.adam_loss = after_adam.value;
  diag.adam_epochs = after_adam.iterations;

  BfgsOptions bfgs;
  bfgs.max_iterations = config.quasi_newton_epochs;
  const OptimizationResult after_bfgs = minimize_bfgs(f, after_adam.x, bfgs);
  const OptimizationResult& best = after_bfgs.value <= after_adam.value ? after_bfgs : after_adam;
  diag.bfgs_iterations = after_bfgs.iterations;
  diag.converged = after_bfgs.converged;
  diag.status = after_adam.status + "; " + after_bfgs.status;
  diag.final_loss = best.value;

  if (!std::isfinite(best.value)) {
    diag.status = "diverged";
    result.runs.push_back(diag);
    return result;
  }

  auto [model, fitted_segments] = objective.unpack(best.x);
  result.params = std::move(model.params);
  result.segments = std::move(fitted_segments);
  result.loss = best.value;
  result.sigma_hat = std::sqrt(best.value / static_cast<double>(result.data_count));
  result.log_likelihood =
      profiled_log_likelihood(best.value, result.data_count, sum_log_observations(dataset));
  result.success = std::isfinite(result.log_likelihood);
  diag.log_likelihood = result.log_likelihood;
  if (result.success) {
    try {
      result.r_squared = r_squared(result, dataset, field);
    } catch (const std::domain_error&) {
      result.r_squared = std::numeric_limits<double>::quiet_NaN();
    } catch (const IntegrationFailure&) {
      result.r_squared = std::numeric_limits<double>::quiet_NaN();
    }
  }
  result.runs.push_back(diag);
  return result;
}

}  // namespace

FitResult fit_single(ModelKind kind, const Dataset& dataset, const FitConfig& config,
                     const GlobalField* field, std::uint64_t stream_seed) {
  validate(dataset);
  validate(config);
  if (dataset.time_points() < config.segment_length)
    throw std::invalid_argument("fit: dataset '" + dataset.country + "' is shorter than K");

  auto segments = segment_partition(dataset.time_points(), config.segment_length);
  initialize_from_data(segments, dataset);

  const Eigen::Index n = dataset.activities();
  Rng rng(stream_seed);
  ModelSpec start{kind, {}};
  start.params.growth.resize(n);
  start.params.self_limitation.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    start.params.growth(i) = rng.uniform(config.init_ranges.growth.lo, config.init_ranges.growth.hi);
  for (Eigen::Index i = 0; i < n; ++i)
    start.params.self_limitation(i) =
        rng.uniform(config.init_ranges.self_limitation.lo, config.init_ranges.self_limitation.hi);
  if (has_coupling(kind)) {
    const UniformRange range = coupling_range(kind, config.init_ranges);
    start.params.coupling = (kind == ModelKind::AlphaNegative ? -1.0 : 1.0) * rng.uniform(range.lo, range.hi);
  }
  RunDiagnostics diag;
  diag.seed = stream_seed;
  return optimize_from(kind, dataset, config, field, start, segments, diag);
}

FitResult fit_multi_start(ModelKind kind, const Dataset& dataset, const FitConfig& config,
                          const GlobalField* field, const FitResult* nested) {
  validate(config);
  const bool warm = nested && nested->success && nested->kind == ModelKind::Null && has_coupling(kind);
  std::vector<FitResult> runs(static_cast<std::size_t>(config.runs) + (warm ? 1 : 0));
  parallel_for(runs.size(), config.jobs, [&](std::size_t r) {
    if (r < static_cast<std::size_t>(config.runs)) {
      runs[r] = fit_single(kind, dataset, config, field, run_seed(config, static_cast<int>(r)));
      return;
    }
    // coupling a tenth of the smallest random draw, so the start sits next to the null optimum
    ModelSpec start{kind, nested->params};
    const double magnitude = std::max(0.1 * coupling_range(kind, config.init_ranges).lo, 1e-6);
    start.params.coupling = kind == ModelKind::AlphaNegative ? -magnitude : magnitude;
    RunDiagnostics diag;
    diag.warm_start = true;
    runs[r] = optimize_from(kind, dataset, config, field, start, nested->segments, diag);
  });

  std::size_t best = runs.size();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (!runs[r].success) continue;
    if (best == runs.size() || runs[r].log_likelihood > runs[best].log_likelihood) best = r;
  }
  if (best == runs.size())
    throw FitFailure("all " + std::to_string(runs.size()) + " runs failed for model " +
                     std::string(to_string(kind)) + " on '" + dataset.country + "'");

  FitResult out = runs[best];
  out.runs.clear();
  for (const auto& r : runs) out.runs.push_back(r.runs.front());
  return out;
}

}  // namespace ecodyn
