#include "ecodyn/optimizers.hpp"

#include <cmath>

namespace ecodyn {

Eigen::VectorXd Adam::step(const Eigen::VectorXd& x, const Eigen::VectorXd& gradient) {
  if (m_.size() != x.size()) {
    m_ = Eigen::VectorXd::Zero(x.size());
    v_ = Eigen::VectorXd::Zero(x.size());
    t_ = 0;
  }
  ++t_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * gradient;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * gradient.cwiseAbs2();
  const double bias1 = 1.0 - std::pow(options_.beta1, t_);
  const double bias2 = 1.0 - std::pow(options_.beta2, t_);
  const Eigen::ArrayXd m_hat = m_.array() / bias1;
  const Eigen::ArrayXd v_hat = v_.array() / bias2;
  return x - (options_.learning_rate * m_hat / (v_hat.sqrt() + options_.epsilon)).matrix();
}

OptimizationResult minimize_adam(const Objective& f, Eigen::VectorXd x0, const AdamOptions& options) {
  OptimizationResult best;
  Eigen::VectorXd gradient(x0.size());
  double value = f(x0, &gradient);
  best.x = x0;
  best.value = value;
  if (!std::isfinite(value) || !gradient.allFinite()) {
    best.status = "infeasible start";
    return best;
  }

  Adam adam(options);
  Eigen::VectorXd x = x0;
  int epoch = 0;
  for (; epoch < options.epochs; ++epoch) {
    Eigen::VectorXd trial = adam.step(x, gradient);
    Eigen::VectorXd trial_gradient(x.size());
    const double trial_value = f(trial, &trial_gradient);
    if (!std::isfinite(trial_value) || !trial_gradient.allFinite()) {
      adam.set_learning_rate(0.5 * adam.learning_rate());
      if (adam.learning_rate() < 1e-12) break;
      continue;
    }
    x = std::move(trial);
    gradient = std::move(trial_gradient);
    value = trial_value;
    if (value < best.value) {
      best.value = value;
      best.x = x;
    }
  }
  best.iterations = epoch;
  best.converged = true;
  best.status = epoch == options.epochs ? "completed" : "learning rate collapsed";
  return best;
}

OptimizationResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  OptimizationResult out;
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(n);
  double value = f(x, &g);
  out.x = x;
  out.value = value;
  if (!std::isfinite(value) || !g.allFinite()) {
    out.status = "infeasible start";
    return out;
  }

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (g.norm() < options.gradient_tolerance) {
      out.converged = true;
      out.status = "gradient tolerance";
      break;
    }
    Eigen::VectorXd direction = -h_inv * g;
    double slope = g.dot(direction);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      direction = -g;
      slope = -g.squaredNorm();
      fresh = true;
    }

    double step = 1.0;
    Eigen::VectorXd x_new(n), g_new(n);
    double value_new = 0.0;
    bool accepted = false;
    for (int k = 0; k < options.max_backtracks; ++k) {
      x_new = x + step * direction;
      value_new = f(x_new, &g_new);
      if (std::isfinite(value_new) && g_new.allFinite() &&
          value_new <= value + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (fresh) {
        out.converged = true;
        out.status = "line search stalled";
        break;
      }
      h_inv.setIdentity();
      fresh = true;
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        // Scale the initial inverse Hessian before the first update.
        h_inv *= sy / y.squaredNorm();
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += rho * rho * (sy + y.dot(hy)) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
    x = std::move(x_new);
    g = std::move(g_new);
    value = value_new;
  }
  out.x = x;
  out.value = value;
  out.iterations = it;
  if (out.status.empty()) out.status = "iteration limit";
  return out;
}

}  // namespace ecodyn
