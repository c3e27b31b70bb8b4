#include <doctest.h>

#include <cmath>
#include <random>

#include "ecodyn/stats.hpp"

using namespace ecodyn;

TEST_CASE("exact line is recovered") {
  Eigen::MatrixXd X(5, 2);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i;
    y(i) = 2.0 - 0.5 * i;
  }
  const auto r = ols(X, y, {"const", "x"});
  CHECK(std::abs(r.coefficients(0) - 2.0) < 1e-10);
  CHECK(std::abs(r.coefficients(1) + 0.5) < 1e-10);
  CHECK(r.r_squared == doctest::Approx(1.0));
  CHECK(r.residuals.norm() < 1e-10);
  CHECK(r.observations == 5);
  CHECK(r.p_values(1) < 1e-10);
}

TEST_CASE("orthogonal response has zero slope") {
  Eigen::MatrixXd X(4, 2);
  X << 1, -1, 1, 1, 1, -1, 1, 1;
  Eigen::VectorXd y(4);
  y << 1, 1, 3, 3;
  const auto r = ols(X, y);
  CHECK(std::abs(r.coefficients(1)) < 1e-12);
  CHECK(r.p_values(1) == doctest::Approx(1.0));
  CHECK(r.names.size() == 2);
}

TEST_CASE("residuals are orthogonal to the design") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  Eigen::MatrixXd X(40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = z(gen);
    X(i, 2) = z(gen);
    y(i) = 1.0 + 0.3 * X(i, 1) + z(gen);
  }
  const auto r = ols(X, y);
  CHECK((X.transpose() * r.residuals).norm() < 1e-10);
  // standard errors agree with sigma^2 (X'X)^-1
  const double s2 = r.residuals.squaredNorm() / 37.0;
  const Eigen::MatrixXd cov = s2 * (X.transpose() * X).inverse();
  for (int k = 0; k < 3; ++k) CHECK(r.standard_errors(k) == doctest::Approx(std::sqrt(cov(k, k))));
}

TEST_CASE("standardize") {
  const Eigen::VectorXd s = standardize(Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(s(0) == doctest::Approx(-1.0));
  CHECK(s(1) == doctest::Approx(0.0));
  CHECK(s(2) == doctest::Approx(1.0));
  CHECK_THROWS(standardize(Eigen::Vector3d(2.0, 2.0, 2.0)));
}

TEST_CASE("rank deficiency names the columns") {
  Eigen::MatrixXd X(5, 3);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i;
    X(i, 2) = 2.0 * i;
  }
  try {
    ols(X, Eigen::VectorXd::LinSpaced(5, 0.0, 1.0), {"const", "a", "b"});
    FAIL("expected RankDeficient");
  } catch (const RankDeficient& e) {
    CHECK(e.columns().size() == 1);
    // either of the collinear pair may be reported
    CHECK((e.columns()[0] == 1 || e.columns()[0] == 2));
    CHECK(std::string(e.what()).find(e.columns()[0] == 1 ? "a" : "b") != std::string::npos);
  }
  CHECK_THROWS(ols(Eigen::MatrixXd::Ones(2, 2), Eigen::Vector2d(1, 2)));
}

TEST_CASE("p-values are uniform under the null") {
  // fraction of p < 0.05 for a pure-noise regressor
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z;
  int rejections = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXd X(12, 2);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = z(gen);
      y(i) = z(gen);
    }
    if (ols(X, y).p_values(1) < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / trials;
  CHECK(rate > 0.035);
  CHECK(rate < 0.065);
}
