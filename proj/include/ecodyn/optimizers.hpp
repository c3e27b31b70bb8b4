#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace ecodyn {

/// Returns the objective at x and, when `gradient` is non-null, writes its
/// gradient. A non-finite return value marks an infeasible point.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* gradient)>;

struct OptimizationResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
};

struct AdamOptions {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 800;
};

/// Adam moment state. `step` returns the next iterate for the given gradient.
class Adam {
 public:
  explicit Adam(const AdamOptions& options) : options_(options) {}

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& gradient);
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  double learning_rate() const { return options_.learning_rate; }
  int steps_taken() const { return t_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

/// Runs `epochs` Adam steps and returns the best iterate seen. A step that
/// lands on an infeasible point is undone and the learning rate halved.
OptimizationResult minimize_adam(const Objective& f, Eigen::VectorXd x0, const AdamOptions& options);

struct BfgsOptions {
  int max_iterations = 800;
  double gradient_tolerance = 1e-8;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

/// BFGS on the inverse Hessian with backtracking Armijo line search.
OptimizationResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options);

}  // namespace ecodyn
