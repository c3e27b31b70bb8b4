#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecodyn/model.hpp"

namespace ecodyn {

struct IntegratorConfig {
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;
  long max_steps = 1'000'000;
};

/// Thrown when the step budget is exhausted, the step size underflows or the
/// state stops being finite. `last_time` is the last accepted time.
class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(const std::string& what, double last_time)
      : std::runtime_error(what), last_time_(last_time) {}
  double last_time() const { return last_time_; }

 private:
  double last_time_;
};

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd states;  ///< one row per output time
  long steps = 0;          ///< accepted steps
  long rejected = 0;
};

struct SensitivityTrajectory {
  Trajectory trajectory;
  /// One N x P matrix per output time; columns follow SensitivitySelector.
  std::vector<Eigen::MatrixXd> sensitivities;
};

/// Which derivatives the forward sensitivities carry. Columns are ordered
/// [r_1..r_N, b_1..b_N, coupling] (when `parameters`) followed by
/// [n0_1..n0_N] (when `initial_conditions`).
struct SensitivitySelector {
  bool parameters = true;
  bool initial_conditions = true;
};

/// y' = f(t, y), written into `dydt`.
using OdeRhs = std::function<void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt)>;

/// Dormand-Prince 5(4) with PI step-size control and the 4th-order continuous
/// extension for output between steps. The initial state is taken at
/// `times.front()`; `times` must be strictly increasing.
Trajectory solve_dopri5(const OdeRhs& rhs, const Eigen::VectorXd& y0,
                        std::span<const double> times, const IntegratorConfig& config = {});

/// Integrates a mean-field sub-model. `field` is required for the dispersal model.
Trajectory integrate(ModelKind kind, const MeanFieldParams<>& params, const CommunityState& initial,
                     std::span<const double> times, const GlobalField* field = nullptr,
                     const IntegratorConfig& config = {});

/// Integrates the model jointly with its forward sensitivity equations
/// dS/dt = (df/dn) S + df/dtheta.
SensitivityTrajectory integrate_with_sensitivity(ModelKind kind, const MeanFieldParams<>& params,
                                                 const CommunityState& initial,
                                                 std::span<const double> times,
                                                 const GlobalField* field = nullptr,
                                                 const IntegratorConfig& config = {},
                                                 SensitivitySelector selector = {});

/// Joint simulation of M countries under the general model. `initial` is M x N;
/// the result holds one M*N row per time (country-major).
Trajectory integrate_general(const std::vector<GeneralParams>& params, const Eigen::MatrixXd& initial,
                             std::span<const double> times, const IntegratorConfig& config = {});

}  // namespace ecodyn
