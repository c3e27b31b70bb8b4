#include <doctest.h>

#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "ecodyn/model.hpp"

using namespace ecodyn;

namespace {

MeanFieldParams<> random_params(std::mt19937_64& gen, Eigen::Index n, ModelKind kind) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MeanFieldParams<> p;
  p.growth.resize(n);
  p.self_limitation.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.growth(i) = 0.05 + 0.1 * u(gen);
    p.self_limitation(i) = 0.5 + u(gen);
  }
  switch (kind) {
    case ModelKind::AlphaPositive: p.coupling = 0.2 * u(gen); break;
    case ModelKind::AlphaNegative: p.coupling = -0.2 * u(gen); break;
    case ModelKind::Delta:
    case ModelKind::Mu: p.coupling = 0.01 * u(gen); break;
    default: break;
  }
  return p;
}

Eigen::VectorXd random_state(std::mt19937_64& gen, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.05, 1.5);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(gen);
  return v;
}

}  // namespace

TEST_CASE("model kind names round-trip") {
  for (auto k : kSubModels) CHECK(parse_model_kind(to_string(k)) == k);
  CHECK(parse_model_kind("general") == ModelKind::General);
  CHECK(parse_model_kind("ALPHA+") == ModelKind::AlphaPositive);
  CHECK_THROWS_AS(parse_model_kind("beta"), std::invalid_argument);
}

TEST_CASE("logistic right-hand side") {
  MeanFieldParams<> p{Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Constant(1, 1.0), 0.0};
  const Eigen::VectorXd n = Eigen::VectorXd::Constant(1, 0.1);
  CHECK(rhs_null(p, n)(0) == doctest::Approx(0.009).epsilon(1e-15));
  // the carrying capacity 1/b is a fixed point
  p.self_limitation(0) = 2.0;
  CHECK(rhs_null(p, Eigen::VectorXd::Constant(1, 0.5))(0) == 0.0);
}

TEST_CASE("sub-models reduce to the null model at zero coupling") {
  std::mt19937_64 gen(3);
  const Eigen::Index n = 5;
  auto p = random_params(gen, n, ModelKind::Null);
  const Eigen::VectorXd x = random_state(gen, n);
  const Eigen::VectorXd base = rhs_null(p, x);
  CHECK((rhs_alpha(p, x) - base).norm() == 0.0);
  CHECK((rhs_mu(p, x) - base).norm() == 0.0);
  GlobalField field({0.0, 1.0}, Eigen::MatrixXd::Constant(2, n, 0.3));
  CHECK((rhs_delta(p, x, field, 0.5) - base).norm() == 0.0);
}

TEST_CASE("transformation moves capital without creating it") {
  std::mt19937_64 gen(4);
  auto p = random_params(gen, 6, ModelKind::Mu);
  p.coupling = 0.37;
  const Eigen::VectorXd x = random_state(gen, 6);
  CHECK(rhs_mu(p, x).sum() == doctest::Approx(rhs_null(p, x).sum()).epsilon(1e-13));
}

TEST_CASE("dispersal vanishes when the state equals the field") {
  std::mt19937_64 gen(5);
  auto p = random_params(gen, 3, ModelKind::Delta);
  p.coupling = 0.8;
  const Eigen::VectorXd x = random_state(gen, 3);
  Eigen::MatrixXd values(2, 3);
  values.row(0) = x.transpose();
  values.row(1) = x.transpose();
  GlobalField field({0.0, 10.0}, values);
  CHECK((rhs_delta(p, x, field, 3.0) - rhs_null(p, x)).norm() < 1e-15);
}

TEST_CASE("parameter sign rules") {
  MeanFieldParams<> p{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2), 0.0};
  for (auto k : kSubModels) CHECK_NOTHROW(validate(k, p));  // zero coupling allowed everywhere
  p.coupling = -0.1;
  CHECK_THROWS_AS(validate(ModelKind::AlphaPositive, p), InvalidParameters);
  CHECK_THROWS_AS(validate(ModelKind::Mu, p), InvalidParameters);
  CHECK_THROWS_AS(validate(ModelKind::Delta, p), InvalidParameters);
  CHECK_NOTHROW(validate(ModelKind::AlphaNegative, p));
  p.coupling = 0.1;
  CHECK_THROWS_AS(validate(ModelKind::AlphaNegative, p), InvalidParameters);
  p.growth(1) = 0.0;
  CHECK_THROWS_AS(validate(ModelKind::Null, p), InvalidParameters);
}

TEST_CASE("invalid states are rejected") {
  MeanFieldParams<> p{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2), 0.0};
  CHECK_THROWS_AS(rhs_null(p, Eigen::Vector2d(0.1, -0.1)), InvalidState);
  CHECK_THROWS_AS(rhs_null(p, Eigen::Vector2d(0.1, NAN)), InvalidState);
  CHECK_THROWS_AS(rhs_null(p, Eigen::Vector3d(0.1, 0.1, 0.1)), InvalidState);
}

TEST_CASE("global field interpolation and mean") {
  std::vector<Eigen::MatrixXd> others{Eigen::MatrixXd::Constant(2, 1, 2.0), Eigen::MatrixXd::Constant(2, 1, 4.0)};
  const auto field = GlobalField::mean_of({0.0, 1.0}, others);
  CHECK(field.at(0.5)(0) == 3.0);
  GlobalField ramp({0.0, 2.0}, (Eigen::MatrixXd(2, 1) << 1.0, 3.0).finished());
  CHECK(ramp.at(1.0)(0) == doctest::Approx(2.0));
  CHECK(ramp.at(-5.0)(0) == 1.0);
  CHECK(ramp.at(9.0)(0) == 3.0);
  CHECK_THROWS(GlobalField({1.0, 1.0}, Eigen::MatrixXd::Ones(2, 1)));
}

TEST_CASE("analytic Jacobians match automatic differentiation") {
  using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
  std::mt19937_64 gen(11);
  const Eigen::Index n = 4;
  for (auto kind : kSubModels) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto p = random_params(gen, n, kind);
      const Eigen::VectorXd x = random_state(gen, n);
      const Eigen::VectorXd nbar = random_state(gen, n);
      const Eigen::Index np = dynamic_parameter_count(kind, n);
      const Eigen::Index vars = n + np;

      Vector<AD> xa(n);
      for (Eigen::Index i = 0; i < n; ++i) xa(i) = AD(x(i), vars, i);
      MeanFieldParams<AD> pa;
      pa.growth.resize(n);
      pa.self_limitation.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        pa.growth(i) = AD(p.growth(i), vars, n + i);
        pa.self_limitation(i) = AD(p.self_limitation(i), vars, 2 * n + i);
      }
      pa.coupling = has_coupling(kind) ? AD(p.coupling, vars, 3 * n) : AD(0.0, Eigen::VectorXd::Zero(vars));
      const Vector<AD> f = kernel::mean_field_rhs(kind, pa, xa, nbar);

      Eigen::MatrixXd js(n, n), jp(n, np);
      mean_field_jacobians(kind, p, x, nbar, js, jp);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd d = f(i).derivatives();
        CHECK((d.head(n) - js.row(i).transpose()).norm() < 1e-13);
        CHECK((d.tail(np) - jp.row(i).transpose()).norm() < 1e-13);
      }
    }
  }
}

TEST_CASE("general model nests the mean-field models") {
  std::mt19937_64 gen(21);
  const Eigen::Index n = 3, m = 4;
  const auto p = random_params(gen, n, ModelKind::Null);
  Eigen::MatrixXd states(m, n);
  for (Eigen::Index c = 0; c < m; ++c) states.row(c) = random_state(gen, n).transpose();
  GeneralParams g;
  g.growth = p.growth;
  g.self_limitation = p.self_limitation;
  g.interaction = Eigen::MatrixXd::Zero(n, n);
  g.dispersal = Eigen::MatrixXd::Zero(m, n);
  g.transfer = Eigen::MatrixXd::Zero(n, n);

  SUBCASE("uniform interaction") {
    g.interaction = Eigen::MatrixXd::Constant(n, n, -0.15);
    auto q = p;
    q.coupling = -0.15;
    CHECK((rhs_general(g, states, 1) - rhs_alpha(q, states.row(1).transpose())).norm() < 1e-14);
  }
  SUBCASE("uniform transfer") {
    g.transfer = Eigen::MatrixXd::Constant(n, n, 0.02);
    auto q = p;
    q.coupling = 0.02;
    CHECK((rhs_general(g, states, 2) - rhs_mu(q, states.row(2).transpose())).norm() < 1e-14);
  }
  SUBCASE("dispersal from the other countries") {
    const double delta = 0.3;
    g.dispersal = Eigen::MatrixXd::Constant(m, n, delta / static_cast<double>(m - 1));
    g.dispersal.row(0).setZero();
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(1, n);
    for (Eigen::Index c = 1; c < m; ++c) mean += states.row(c);
    mean /= static_cast<double>(m - 1);
    GlobalField field({0.0, 1.0}, (Eigen::MatrixXd(2, n) << mean, mean).finished());
    auto q = p;
    q.coupling = delta;
    CHECK((rhs_general(g, states, 0) - rhs_delta(q, states.row(0).transpose(), field, 0.0)).norm() < 1e-14);
  }
  g.transfer(0, 1) = -1.0;
  CHECK_THROWS_AS(rhs_general(g, states, 0), InvalidParameters);
}
