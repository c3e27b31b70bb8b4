#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ecodyn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Capital per activity for one country at one time.
using CommunityState = Eigen::VectorXd;

enum class ModelKind { Null, AlphaPositive, AlphaNegative, Delta, Mu, General };

/// The five fittable mean-field sub-models, in report order.
inline constexpr std::array<ModelKind, 5> kSubModels{
    ModelKind::Null, ModelKind::AlphaPositive, ModelKind::AlphaNegative,
    ModelKind::Delta, ModelKind::Mu};

std::string_view to_string(ModelKind kind);
/// Accepts "null", "alpha+", "alpha-", "delta", "mu", "general" (and a few aliases).
ModelKind parse_model_kind(std::string_view name);

constexpr bool has_coupling(ModelKind kind) {
  return kind != ModelKind::Null && kind != ModelKind::General;
}

/// Sign the coupling must carry: +1, -1, or 0 when only non-negativity is required.
constexpr int coupling_sign(ModelKind kind) {
  switch (kind) {
    case ModelKind::AlphaPositive: return 1;
    case ModelKind::AlphaNegative: return -1;
    default: return 0;
  }
}

class InvalidState : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidParameters : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters of the mean-field sub-models. `coupling` is alpha, delta or mu
/// depending on the kind and is ignored by the null model.
template <typename Scalar = double>
struct MeanFieldParams {
  Vector<Scalar> growth;
  Vector<Scalar> self_limitation;
  Scalar coupling{0};

  Eigen::Index size() const { return growth.size(); }
};

/// Full per-country parameter set of the general model (simulation only).
struct GeneralParams {
  Eigen::VectorXd growth;
  Eigen::VectorXd self_limitation;
  Eigen::MatrixXd interaction;  ///< N x N, alpha(i, j); diagonal unused
  Eigen::MatrixXd dispersal;    ///< M x N, delta(l, i) from country l
  Eigen::MatrixXd transfer;     ///< N x N, mu(j, i) is the rate j -> i

  Eigen::Index size() const { return growth.size(); }
};

void validate_state(const Eigen::Ref<const Eigen::VectorXd>& state);
void validate(ModelKind kind, const MeanFieldParams<>& params);
void validate(const GeneralParams& params, Eigen::Index countries);

/// Mean capital of each activity across the other countries, sampled at
/// increasing times. Evaluation is piecewise linear, clamped outside the span.
class GlobalField {
 public:
  GlobalField() = default;
  /// `values` has one row per time and one column per activity.
  GlobalField(std::vector<double> times, Eigen::MatrixXd values);

  /// Builds the field as the arithmetic mean of other countries' capital.
  /// Every matrix must share the shape times x activities.
  static GlobalField mean_of(std::vector<double> times,
                             const std::vector<Eigen::MatrixXd>& other_countries);

  Eigen::VectorXd at(double t) const;
  void at(double t, Eigen::Ref<Eigen::VectorXd> out) const;

  bool empty() const { return times_.empty(); }
  Eigen::Index activities() const { return values_.cols(); }
  const std::vector<double>& times() const { return times_; }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  std::vector<double> times_;
  Eigen::MatrixXd values_;
};

namespace kernel {

// Unchecked right-hand sides, templated on the scalar so they can be
// evaluated with automatic-differentiation scalars.

template <typename Scalar, typename Derived>
Vector<Scalar> logistic(const MeanFieldParams<Scalar>& p, const Eigen::MatrixBase<Derived>& n) {
  Vector<Scalar> out(n.size());
  for (Eigen::Index i = 0; i < n.size(); ++i)
    out(i) = p.growth(i) * n(i) * (Scalar(1) - p.self_limitation(i) * n(i));
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> interaction(const MeanFieldParams<Scalar>& p, const Eigen::MatrixBase<Derived>& n) {
  const Scalar total = n.sum();
  Vector<Scalar> out(n.size());
  for (Eigen::Index i = 0; i < n.size(); ++i)
    out(i) = p.growth(i) * n(i) *
             (Scalar(1) - p.self_limitation(i) * n(i) + p.coupling * (total - n(i)));
  return out;
}

template <typename Scalar, typename Derived, typename FieldDerived>
Vector<Scalar> dispersal(const MeanFieldParams<Scalar>& p, const Eigen::MatrixBase<Derived>& n,
                         const Eigen::MatrixBase<FieldDerived>& mean_field) {
  Vector<Scalar> out = logistic(p, n);
  for (Eigen::Index i = 0; i < n.size(); ++i)
    out(i) += p.coupling * (Scalar(mean_field(i)) - n(i));
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> transformation(const MeanFieldParams<Scalar>& p, const Eigen::MatrixBase<Derived>& n) {
  const Scalar total = n.sum();
  const auto count = static_cast<double>(n.size());
  Vector<Scalar> out = logistic(p, n);
  for (Eigen::Index i = 0; i < n.size(); ++i)
    out(i) += p.coupling * (total - Scalar(count) * n(i));
  return out;
}

/// Dispatches on `kind`. `mean_field` is only read by the dispersal model.
template <typename Scalar, typename Derived, typename FieldDerived>
Vector<Scalar> mean_field_rhs(ModelKind kind, const MeanFieldParams<Scalar>& p,
                              const Eigen::MatrixBase<Derived>& n,
                              const Eigen::MatrixBase<FieldDerived>& mean_field) {
  switch (kind) {
    case ModelKind::Null: return logistic(p, n);
    case ModelKind::AlphaPositive:
    case ModelKind::AlphaNegative: return interaction(p, n);
    case ModelKind::Delta: return dispersal(p, n, mean_field);
    case ModelKind::Mu: return transformation(p, n);
    case ModelKind::General: break;
  }
  throw std::invalid_argument("mean_field_rhs: the general model has no mean-field form");
}

}  // namespace kernel

/// Number of dynamical parameters of a sub-model: r, b and the coupling.
inline Eigen::Index dynamic_parameter_count(ModelKind kind, Eigen::Index activities) {
  return 2 * activities + (has_coupling(kind) ? 1 : 0);
}

/// Analytic derivatives of the mean-field right-hand side at one state.
/// `wrt_state` is N x N; `wrt_params` is N x dynamic_parameter_count(kind, N)
/// with columns ordered [r_1..r_N, b_1..b_N, coupling].
void mean_field_jacobians(ModelKind kind, const MeanFieldParams<>& p,
                          const Eigen::Ref<const Eigen::VectorXd>& n,
                          const Eigen::Ref<const Eigen::VectorXd>& mean_field,
                          Eigen::Ref<Eigen::MatrixXd> wrt_state,
                          Eigen::Ref<Eigen::MatrixXd> wrt_params);

// Checked right-hand sides.

Eigen::VectorXd rhs_null(const MeanFieldParams<>& p, const CommunityState& state);
Eigen::VectorXd rhs_alpha(const MeanFieldParams<>& p, const CommunityState& state);
Eigen::VectorXd rhs_delta(const MeanFieldParams<>& p, const CommunityState& state,
                          const GlobalField& field, double t);
Eigen::VectorXd rhs_mu(const MeanFieldParams<>& p, const CommunityState& state);

/// Rate of change of every activity of `country`, given all countries' states
/// as rows of `states` (M x N).
Eigen::VectorXd rhs_general(const GeneralParams& params, const Eigen::MatrixXd& states,
                            Eigen::Index country);

}  // namespace ecodyn
