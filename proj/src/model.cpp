#include "ecodyn/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace ecodyn {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Null: return "null";
    case ModelKind::AlphaPositive: return "alpha+";
    case ModelKind::AlphaNegative: return "alpha-";
    case ModelKind::Delta: return "delta";
    case ModelKind::Mu: return "mu";
    case ModelKind::General: return "general";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "null") return ModelKind::Null;
  if (s == "alpha+" || s == "alphap" || s == "alpha_pos" || s == "alpha_positive")
    return ModelKind::AlphaPositive;
  if (s == "alpha-" || s == "alphan" || s == "alpha_neg" || s == "alpha_negative")
    return ModelKind::AlphaNegative;
  if (s == "delta") return ModelKind::Delta;
  if (s == "mu") return ModelKind::Mu;
  if (s == "general") return ModelKind::General;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

void validate_state(const Eigen::Ref<const Eigen::VectorXd>& state) {
  if (!state.allFinite()) throw InvalidState("state contains non-finite entries");
  if ((state.array() < 0.0).any()) throw InvalidState("state contains negative entries");
}

void validate(ModelKind kind, const MeanFieldParams<>& params) {
  if (kind == ModelKind::General)
    throw InvalidParameters("mean-field parameters cannot describe the general model");
  const auto n = params.growth.size();
  if (params.self_limitation.size() != n)
    throw InvalidParameters("growth and self_limitation lengths differ");
  if (!params.growth.allFinite() || !params.self_limitation.allFinite())
    throw InvalidParameters("non-finite growth or self_limitation");
  if ((params.growth.array() <= 0.0).any() || (params.self_limitation.array() <= 0.0).any())
    throw InvalidParameters("growth and self_limitation must be strictly positive");
  if (!std::isfinite(params.coupling)) throw InvalidParameters("non-finite coupling");
  // Zero coupling is admitted for every kind: it is the degenerate null limit.
  switch (kind) {
    case ModelKind::AlphaPositive:
      if (params.coupling < 0.0) throw InvalidParameters("alpha+ requires alpha >= 0");
      break;
    case ModelKind::AlphaNegative:
      if (params.coupling > 0.0) throw InvalidParameters("alpha- requires alpha <= 0");
      break;
    case ModelKind::Delta:
    case ModelKind::Mu:
      if (params.coupling < 0.0) throw InvalidParameters("delta and mu must be non-negative");
      break;
    default: break;
  }
}

void validate(const GeneralParams& params, Eigen::Index countries) {
  const auto n = params.size();
  if (params.self_limitation.size() != n || params.interaction.rows() != n ||
      params.interaction.cols() != n || params.transfer.rows() != n ||
      params.transfer.cols() != n || params.dispersal.rows() != countries ||
      params.dispersal.cols() != n)
    throw InvalidParameters("general model parameter dimensions are inconsistent");
  if (!params.growth.allFinite() || !params.self_limitation.allFinite() ||
      !params.interaction.allFinite() || !params.dispersal.allFinite() ||
      !params.transfer.allFinite())
    throw InvalidParameters("general model parameters contain non-finite entries");
  if ((params.dispersal.array() < 0.0).any() || (params.transfer.array() < 0.0).any())
    throw InvalidParameters("dispersal and transfer rates must be non-negative");
}

GlobalField::GlobalField(std::vector<double> times, Eigen::MatrixXd values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty()) throw std::invalid_argument("global field needs at least one time");
  if (static_cast<Eigen::Index>(times_.size()) != values_.rows())
    throw std::invalid_argument("global field rows must match its times");
  if (!std::is_sorted(times_.begin(), times_.end(), std::less_equal<>()))
    throw std::invalid_argument("global field times must be strictly increasing");
  if (!values_.allFinite() || (values_.array() < 0.0).any())
    throw std::invalid_argument("global field values must be finite and non-negative");
}

GlobalField GlobalField::mean_of(std::vector<double> times,
                                 const std::vector<Eigen::MatrixXd>& other_countries) {
  if (other_countries.empty())
    throw std::invalid_argument("global field needs at least one other country");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(other_countries.front().rows(),
                                              other_countries.front().cols());
  for (const auto& m : other_countries) {
    if (m.rows() != sum.rows() || m.cols() != sum.cols())
      throw std::invalid_argument("other-country matrices differ in shape");
    sum += m;
  }
  return GlobalField(std::move(times), sum / static_cast<double>(other_countries.size()));
}

Eigen::VectorXd GlobalField::at(double t) const {
  Eigen::VectorXd out(activities());
  at(t, out);
  return out;
}

void GlobalField::at(double t, Eigen::Ref<Eigen::VectorXd> out) const {
  if (empty()) throw std::logic_error("evaluating an empty global field");
  if (t <= times_.front()) {
    out = values_.row(0).transpose();
    return;
  }
  if (t >= times_.back()) {
    out = values_.row(values_.rows() - 1).transpose();
    return;
  }
  const auto upper = std::upper_bound(times_.begin(), times_.end(), t);
  const auto k = static_cast<Eigen::Index>(upper - times_.begin());
  const double w = (t - times_[k - 1]) / (times_[k] - times_[k - 1]);
  out = ((1.0 - w) * values_.row(k - 1) + w * values_.row(k)).transpose();
}

void mean_field_jacobians(ModelKind kind, const MeanFieldParams<>& p,
                          const Eigen::Ref<const Eigen::VectorXd>& n,
                          const Eigen::Ref<const Eigen::VectorXd>& mean_field,
                          Eigen::Ref<Eigen::MatrixXd> wrt_state,
                          Eigen::Ref<Eigen::MatrixXd> wrt_params) {
  const Eigen::Index size = n.size();
  const double total = n.sum();
  const double alpha =
      (kind == ModelKind::AlphaPositive || kind == ModelKind::AlphaNegative) ? p.coupling : 0.0;
  const double delta = kind == ModelKind::Delta ? p.coupling : 0.0;
  const double mu = kind == ModelKind::Mu ? p.coupling : 0.0;

  // f_i = r_i n_i g_i + delta (nbar_i - n_i) + mu (S - N n_i),
  // g_i = 1 - b_i n_i + alpha (S - n_i).
  wrt_state.setConstant(mu);
  wrt_params.setZero();
  for (Eigen::Index i = 0; i < size; ++i) {
    const double r = p.growth(i);
    const double b = p.self_limitation(i);
    const double others = total - n(i);
    const double g = 1.0 - b * n(i) + alpha * others;
    for (Eigen::Index k = 0; k < size; ++k)
      if (k != i) wrt_state(i, k) += r * n(i) * alpha;
    wrt_state(i, i) += r * g - r * n(i) * b - delta - mu * static_cast<double>(size);

    wrt_params(i, i) = n(i) * g;
    wrt_params(i, size + i) = -r * n(i) * n(i);
    switch (kind) {
      case ModelKind::AlphaPositive:
      case ModelKind::AlphaNegative: wrt_params(i, 2 * size) = r * n(i) * others; break;
      case ModelKind::Delta: wrt_params(i, 2 * size) = mean_field(i) - n(i); break;
      case ModelKind::Mu: wrt_params(i, 2 * size) = total - static_cast<double>(size) * n(i); break;
      default: break;
    }
  }
}

namespace {

void check_sizes(const MeanFieldParams<>& p, const CommunityState& state) {
  if (p.growth.size() != state.size() || p.self_limitation.size() != state.size())
    throw InvalidState("state length does not match the model's activity count");
  validate_state(state);
  if (!p.growth.allFinite() || !p.self_limitation.allFinite() || !std::isfinite(p.coupling))
    throw InvalidParameters("non-finite parameters");
}

}  // namespace

Eigen::VectorXd rhs_null(const MeanFieldParams<>& p, const CommunityState& state) {
  check_sizes(p, state);
  return kernel::logistic(p, state);
}

Eigen::VectorXd rhs_alpha(const MeanFieldParams<>& p, const CommunityState& state) {
  check_sizes(p, state);
  return kernel::interaction(p, state);
}

Eigen::VectorXd rhs_delta(const MeanFieldParams<>& p, const CommunityState& state,
                          const GlobalField& field, double t) {
  check_sizes(p, state);
  if (field.empty()) throw std::invalid_argument("rhs_delta: empty global field");
  if (field.activities() != state.size())
    throw InvalidState("global field activity count does not match the state");
  return kernel::dispersal(p, state, field.at(t));
}

Eigen::VectorXd rhs_mu(const MeanFieldParams<>& p, const CommunityState& state) {
  check_sizes(p, state);
  return kernel::transformation(p, state);
}

Eigen::VectorXd rhs_general(const GeneralParams& params, const Eigen::MatrixXd& states,
                            Eigen::Index country) {
  validate(params, states.rows());
  if (states.cols() != params.size())
    throw InvalidState("general model: state columns do not match the activity count");
  if (country < 0 || country >= states.rows())
    throw InvalidState("general model: country index out of range");
  if (!states.allFinite() || (states.array() < 0.0).any())
    throw InvalidState("general model: states must be finite and non-negative");

  const Eigen::VectorXd n = states.row(country).transpose();
  const Eigen::Index size = n.size();
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    double coupling = 0.0;
    for (Eigen::Index j = 0; j < size; ++j)
      if (j != i) coupling += params.interaction(i, j) * n(j);
    double value = params.growth(i) * n(i) * (1.0 - params.self_limitation(i) * n(i) + coupling);
    for (Eigen::Index l = 0; l < states.rows(); ++l)
      value += params.dispersal(l, i) * (states(l, i) - n(i));
    for (Eigen::Index j = 0; j < size; ++j) value += params.transfer(j, i) * (n(j) - n(i));
    out(i) = value;
  }
  return out;
}

}  // namespace ecodyn
