#include "ecodyn/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecodyn {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Continuous extension (Hairer & Wanner, DOPRI5 contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// PI controller constants.
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kMaxShrink = 5.0;   // 1 / minimal factor 0.2
constexpr double kMaxGrow = 0.1;     // 1 / maximal factor 10
constexpr double kDivergence = 1e100;

double rms_scaled(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

double initial_step(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0,
                    const Eigen::VectorXd& f0, double span, const IntegratorConfig& cfg) {
  const Eigen::VectorXd scale = cfg.abs_tol + cfg.rel_tol * y0.array().abs();
  const double dnf = rms_scaled(f0, scale);
  const double dny = rms_scaled(y0, scale);
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, span);
  const Eigen::VectorXd y1 = y0 + h * f0;
  Eigen::VectorXd f1(y0.size());
  rhs(t0 + h, y1, f1);
  const double der2 = rms_scaled(f1 - f0, scale) / h;
  const double der = std::max(der2, dnf);
  const double h1 = der <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der, 0.2);
  return std::min({100.0 * h, h1, span});
}

void check_times(std::span<const double> times) {
  if (times.empty()) throw std::invalid_argument("integrate: no output times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("integrate: output times must be strictly increasing");
  for (double t : times)
    if (!std::isfinite(t)) throw std::invalid_argument("integrate: non-finite output time");
}

}  // namespace

Trajectory solve_dopri5(const OdeRhs& rhs, const Eigen::VectorXd& y0,
                        std::span<const double> times, const IntegratorConfig& cfg) {
  check_times(times);
  if (!(cfg.rel_tol > 0.0) || !(cfg.abs_tol > 0.0))
    throw std::invalid_argument("integrate: tolerances must be strictly positive");
  if (!y0.allFinite()) throw InvalidState("integrate: non-finite initial state");

  const Eigen::Index dim = y0.size();
  Trajectory out;
  out.times.assign(times.begin(), times.end());
  out.states.resize(static_cast<Eigen::Index>(times.size()), dim);
  out.states.row(0) = y0.transpose();
  if (times.size() == 1) return out;

  const double t_end = times.back();
  double t = times.front();
  Eigen::VectorXd y = y0;
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  Eigen::VectorXd ytmp(dim), ynew(dim), err(dim), scale(dim);

  rhs(t, y, k1);
  if (!k1.allFinite()) throw IntegrationFailure("non-finite derivative at the initial state", t);

  double h = initial_step(rhs, t, y, k1, t_end - t, cfg);
  double facold = 1e-4;
  bool last_rejected = false;
  std::size_t next = 1;
  const double eps = std::numeric_limits<double>::epsilon();

  while (next < times.size()) {
    if (out.steps + out.rejected >= cfg.max_steps)
      throw IntegrationFailure("step budget exhausted", t);
    if (0.1 * std::abs(h) <= std::abs(t) * eps || h <= 0.0)
      throw IntegrationFailure("step size underflow", t);

    bool last = false;
    if (t + 1.01 * h >= t_end) {
      h = t_end - t;
      last = true;
    }

    ytmp = y + h * a21 * k1;
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = last ? t_end : t + h;
    rhs(t_new, ytmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t_new, ynew, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    scale = cfg.abs_tol + cfg.rel_tol * y.array().abs().max(ynew.array().abs());
    double error = rms_scaled(err, scale);
    if (!std::isfinite(error) || !ynew.allFinite() || !k7.allFinite()) {
      // Treat as a hard rejection and retry with a much smaller step.
      h *= 0.2;
      last_rejected = true;
      ++out.rejected;
      continue;
    }

    const double fac11 = std::pow(error, kExpo);
    if (error <= 1.0) {
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(kMaxGrow, std::min(kMaxShrink, fac / kSafety));
      double h_new = h / fac;
      facold = std::max(error, 1e-4);
      ++out.steps;

      // Dense output for every requested time inside (t, t_new].
      if (next < times.size() && times[next] <= t_new) {
        const Eigen::VectorXd ydiff = ynew - y;
        const Eigen::VectorXd bspl = h * k1 - ydiff;
        const Eigen::VectorXd r4 = ydiff - h * k7 - bspl;
        const Eigen::VectorXd r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next < times.size() && times[next] <= t_new) {
          const auto row = static_cast<Eigen::Index>(next);
          if (times[next] == t_new) {
            out.states.row(row) = ynew.transpose();
          } else {
            const double theta = (times[next] - t) / h;
            const double theta1 = 1.0 - theta;
            out.states.row(row) =
                (y + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))).transpose();
          }
          ++next;
        }
      }

      y = ynew;
      k1 = k7;
      t = t_new;
      if (y.cwiseAbs().maxCoeff() > kDivergence) throw IntegrationFailure("state diverged", t);
      if (last_rejected) h_new = std::min(h_new, h);
      last_rejected = false;
      h = h_new;
    } else {
      h /= std::min(kMaxShrink, fac11 / kSafety);
      last_rejected = true;
      ++out.rejected;
    }
  }
  return out;
}

namespace {

void require_field(ModelKind kind, const GlobalField* field, Eigen::Index activities) {
  if (kind != ModelKind::Delta) return;
  if (field == nullptr || field->empty())
    throw std::invalid_argument("the dispersal model requires a global field");
  if (field->activities() != activities)
    throw std::invalid_argument("global field activity count does not match the model");
}

}  // namespace

Trajectory integrate(ModelKind kind, const MeanFieldParams<>& params, const CommunityState& initial,
                     std::span<const double> times, const GlobalField* field,
                     const IntegratorConfig& config) {
  validate(kind, params);
  validate_state(initial);
  if (initial.size() != params.size())
    throw InvalidState("initial state length does not match the model");
  require_field(kind, field, params.size());

  Eigen::VectorXd nbar = Eigen::VectorXd::Zero(params.size());
  const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
    if (field != nullptr && kind == ModelKind::Delta) field->at(t, nbar);
    dydt = kernel::mean_field_rhs(kind, params, y, nbar);
  };
  return solve_dopri5(rhs, initial, times, config);
}

SensitivityTrajectory integrate_with_sensitivity(ModelKind kind, const MeanFieldParams<>& params,
                                                 const CommunityState& initial,
                                                 std::span<const double> times,
                                                 const GlobalField* field,
                                                 const IntegratorConfig& config,
                                                 SensitivitySelector selector) {
  validate(kind, params);
  validate_state(initial);
  const Eigen::Index n = params.size();
  if (initial.size() != n) throw InvalidState("initial state length does not match the model");
  require_field(kind, field, n);

  const Eigen::Index n_theta = dynamic_parameter_count(kind, n);
  const Eigen::Index p_theta = selector.parameters ? n_theta : 0;
  const Eigen::Index p_init = selector.initial_conditions ? n : 0;
  const Eigen::Index p = p_theta + p_init;

  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(n + n * p);
  y0.head(n) = initial;
  if (p_init > 0) {
    Eigen::Map<Eigen::MatrixXd> s0(y0.data() + n, n, p);
    s0.rightCols(n).setIdentity();
  }

  const bool is_alpha = kind == ModelKind::AlphaPositive || kind == ModelKind::AlphaNegative;
  const double alpha = is_alpha ? params.coupling : 0.0;
  const double delta = kind == ModelKind::Delta ? params.coupling : 0.0;
  const double mu = kind == ModelKind::Mu ? params.coupling : 0.0;
  const double size = static_cast<double>(n);

  // The state Jacobian is diag(d) + c 1^T (every off-diagonal entry of row i
  // is mu + r_i n_i alpha), so J S costs O(N P) instead of O(N^2 P). Same
  // entries as mean_field_jacobians.
  Eigen::VectorXd nbar = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d(n), c(n), g(n);
  Eigen::RowVectorXd col_sums(p);
  const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
    if (field != nullptr && kind == ModelKind::Delta) field->at(t, nbar);
    const auto state = y.head(n);
    dydt.head(n) = kernel::mean_field_rhs(kind, params, state, nbar);
    const double total = state.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = params.growth(i), x = state(i);
      g(i) = 1.0 - params.self_limitation(i) * x + alpha * (total - x);
      c(i) = mu + r * x * alpha;
      d(i) = r * g(i) - r * x * params.self_limitation(i) - delta - mu * size - r * x * alpha;
    }
    const Eigen::Map<const Eigen::MatrixXd> s(y.data() + n, n, p);
    Eigen::Map<Eigen::MatrixXd> ds(dydt.data() + n, n, p);
    col_sums.noalias() = s.colwise().sum();
    ds.noalias() = d.asDiagonal() * s;
    ds.noalias() += c * col_sums;
    if (p_theta == 0) return;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = params.growth(i), x = state(i);
      ds(i, i) += x * g(i);
      ds(i, n + i) -= r * x * x;
      if (is_alpha) ds(i, 2 * n) += r * x * (total - x);
      else if (kind == ModelKind::Delta) ds(i, 2 * n) += nbar(i) - x;
      else if (kind == ModelKind::Mu) ds(i, 2 * n) += total - size * x;
    }
  };

  Trajectory joint = solve_dopri5(rhs, y0, times, config);
  SensitivityTrajectory out;
  out.trajectory.times = joint.times;
  out.trajectory.states = joint.states.leftCols(n);
  out.trajectory.steps = joint.steps;
  out.trajectory.rejected = joint.rejected;
  out.sensitivities.reserve(times.size());
  for (Eigen::Index row = 0; row < joint.states.rows(); ++row) {
    const Eigen::VectorXd flat = joint.states.row(row).tail(n * p).transpose();
    out.sensitivities.emplace_back(Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, p));
  }
  return out;
}

Trajectory integrate_general(const std::vector<GeneralParams>& params, const Eigen::MatrixXd& initial,
                             std::span<const double> times, const IntegratorConfig& config) {
  const Eigen::Index m = initial.rows();
  const Eigen::Index n = initial.cols();
  if (static_cast<Eigen::Index>(params.size()) != m)
    throw InvalidParameters("general model needs one parameter set per country");
  for (const auto& p : params) {
    validate(p, m);
    if (p.size() != n) throw InvalidParameters("general model activity counts differ");
  }
  if (!initial.allFinite() || (initial.array() < 0.0).any())
    throw InvalidState("general model: invalid initial states");

  // Row-major flattening: country c occupies entries [c*n, (c+1)*n).
  Eigen::VectorXd y0(m * n);
  for (Eigen::Index c = 0; c < m; ++c) y0.segment(c * n, n) = initial.row(c).transpose();

  Eigen::MatrixXd states(m, n);
  const OdeRhs rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
    for (Eigen::Index c = 0; c < m; ++c) states.row(c) = y.segment(c * n, n).transpose();
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto& pc = params[static_cast<std::size_t>(c)];
      const auto nc = states.row(c);
      for (Eigen::Index i = 0; i < n; ++i) {
        double coupling = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
          if (j != i) coupling += pc.interaction(i, j) * nc(j);
        double v = pc.growth(i) * nc(i) * (1.0 - pc.self_limitation(i) * nc(i) + coupling);
        for (Eigen::Index l = 0; l < m; ++l) v += pc.dispersal(l, i) * (states(l, i) - nc(i));
        for (Eigen::Index j = 0; j < n; ++j) v += pc.transfer(j, i) * (nc(j) - nc(i));
        dydt(c * n + i) = v;
      }
    }
  };
  return solve_dopri5(rhs, y0, times, config);
}

}  // namespace ecodyn
