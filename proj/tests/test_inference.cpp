#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ecodyn/inference.hpp"

using namespace ecodyn;

namespace {

std::vector<Eigen::Index> sizes(const std::vector<Segment>& s) {
  std::vector<Eigen::Index> out;
  for (const auto& x : s) out.push_back(x.size());
  return out;
}

// noisy or noiseless trajectory of a known model, one segment per `segment_length`
Dataset synthetic(ModelKind kind, const MeanFieldParams<>& p, Eigen::Index t_points, double sigma,
                  std::uint64_t seed, const GlobalField* field = nullptr) {
  const Eigen::Index n = p.growth.size();
  Dataset d;
  d.country = "XX";
  for (Eigen::Index t = 0; t < t_points; ++t) d.years.push_back(static_cast<int>(t));
  for (Eigen::Index i = 0; i < n; ++i) d.activity_labels.push_back("a" + std::to_string(i));
  Eigen::VectorXd x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = 0.1 + 0.05 * static_cast<double>(i);
  const auto traj = integrate(kind, p, x0, d.times(), field);
  d.observations = traj.states;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  if (sigma > 0.0)
    for (Eigen::Index t = 0; t < t_points; ++t)
      for (Eigen::Index i = 0; i < n; ++i) d.observations(t, i) *= std::exp(sigma * z(gen));
  return d;
}

}  // namespace

TEST_CASE("segment partition") {
  CHECK(sizes(segment_partition(59, 20)) == std::vector<Eigen::Index>{20, 20, 19});
  CHECK(sizes(segment_partition(41, 20)) == std::vector<Eigen::Index>{20, 21});
  CHECK(sizes(segment_partition(42, 20)) == std::vector<Eigen::Index>{20, 22});
  CHECK(sizes(segment_partition(43, 20)) == std::vector<Eigen::Index>{20, 20, 3});
  CHECK(sizes(segment_partition(20, 20)) == std::vector<Eigen::Index>{20});
  CHECK(sizes(segment_partition(5, 20)) == std::vector<Eigen::Index>{5});
  const auto s = segment_partition(59, 20);
  CHECK(s[1].begin == 20);
  CHECK(s[2].end == 59);
  CHECK_THROWS(segment_partition(10, 0));
}

TEST_CASE("log-likelihood of a perfect prediction") {
  MeanFieldParams<> p{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(1.0, 1.5), 0.0};
  auto d = synthetic(ModelKind::Null, p, 12, 0.0, 1);
  auto segs = segment_partition(12, 20);
  segs[0].initial = d.observations.row(0).transpose();
  const ModelSpec m{ModelKind::Null, p};
  CHECK(concentrated_loss(m, segs, d) < 1e-10);
  const double sigma = 0.3;
  const double n = 24.0;
  const double expected = -0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma) - d.observations.array().log().sum();
  CHECK(log_likelihood(m, segs, d, sigma) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("profiled likelihood equals the likelihood at sigma-hat") {
  MeanFieldParams<> p{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(1.0, 1.5), 0.0};
  auto d = synthetic(ModelKind::Null, p, 30, 0.2, 7);
  auto segs = segment_partition(30, 20);
  initialize_from_data(segs, d);
  const ModelSpec m{ModelKind::Null, p};
  const double loss = concentrated_loss(m, segs, d);
  const double sigma_hat = std::sqrt(loss / static_cast<double>(d.observed_count()));
  const double prof = profiled_log_likelihood(loss, d.observed_count(), sum_log_observations(d));
  CHECK(prof == doctest::Approx(log_likelihood(m, segs, d, sigma_hat)).epsilon(1e-12));
  // and it is the maximum over sigma
  CHECK(prof > log_likelihood(m, segs, d, 1.05 * sigma_hat));
  CHECK(prof > log_likelihood(m, segs, d, 0.95 * sigma_hat));
}

TEST_CASE("missing entries are skipped") {
  MeanFieldParams<> p{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(1.0, 1.5), 0.0};
  auto d = synthetic(ModelKind::Null, p, 25, 0.1, 3);
  auto segs = segment_partition(25, 20);
  initialize_from_data(segs, d);
  const ModelSpec m{ModelKind::Null, p};
  const double full = concentrated_loss(m, segs, d);
  const auto pred = predict(m, segs, d);
  const double r = std::log(d.observations(5, 1)) - std::log(pred(5, 1));
  d.observations(5, 1) = NAN;
  CHECK(d.observed_count() == 49);
  CHECK(concentrated_loss(m, segs, d) == doctest::Approx(full - r * r).epsilon(1e-12));
  CHECK_NOTHROW(validate(d));
  d.observations(6, 1) = -1.0;
  CHECK_THROWS(validate(d));
}

TEST_CASE("objective gradient matches finite differences") {
  const Eigen::Index n = 3;
  Eigen::MatrixXd fv(2, n);
  fv << 0.2, 0.3, 0.4, 0.6, 0.5, 0.3;
  const GlobalField field({0.0, 29.0}, fv);
  MeanFieldParams<> truth{Eigen::Vector3d(0.1, 0.15, 0.08), Eigen::Vector3d(1.0, 0.8, 1.2), 0.0};
  for (auto kind : kSubModels) {
    CAPTURE(to_string(kind));
    auto p = truth;
    if (has_coupling(kind)) p.coupling = kind == ModelKind::AlphaNegative ? -0.05 : 0.02;
    const auto d = synthetic(kind, p, 30, 0.1, 11, &field);
    auto segs = segment_partition(30, 20);
    initialize_from_data(segs, d);
    const IntegratorConfig tight{1e-11, 1e-13, 1000000};
    SegmentedObjective obj(kind, d, segs, &field, tight);
    // evaluate away from the truth so the gradient is not tiny
    auto q = p;
    q.growth *= 1.2;
    q.self_limitation *= 0.9;
    if (has_coupling(kind)) q.coupling *= 1.5;
    const Eigen::VectorXd x = obj.pack({kind, q}, segs);
    CHECK(x.size() == obj.dimension());
    Eigen::VectorXd g;
    const double f0 = obj(x, &g);
    CHECK(std::isfinite(f0));
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      const double fd = (obj(xp, nullptr) - obj(xm, nullptr)) / (2.0 * h);
      CHECK(g(k) == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
    const auto [back, back_segs] = obj.unpack(x);
    CHECK((back.params.growth - q.growth).norm() < 1e-14);
    CHECK(back.params.coupling == doctest::Approx(q.coupling));
  }
}

TEST_CASE("growth ceiling scores +inf") {
  MeanFieldParams<> p{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(1.0, 1.5), 0.0};
  const auto d = synthetic(ModelKind::Null, p, 10, 0.0, 1);
  auto segs = segment_partition(10, 20);
  initialize_from_data(segs, d);
  SegmentedObjective obj(ModelKind::Null, d, segs, nullptr, {}, 1.0);
  auto q = p;
  CHECK(std::isfinite(obj(obj.pack({ModelKind::Null, q}, segs), nullptr)));
  q.growth(0) = 2.0;
  CHECK(std::isinf(obj(obj.pack({ModelKind::Null, q}, segs), nullptr)));
}

TEST_CASE("noiseless null data is recovered") {
  MeanFieldParams<> p{Eigen::Vector2d(0.12, 0.08), Eigen::Vector2d(1.0, 1.4), 0.0};
  const auto d = synthetic(ModelKind::Null, p, 30, 0.0, 1);
  FitConfig cfg;
  cfg.adam_epochs = 200;
  cfg.quasi_newton_epochs = 200;
  cfg.runs = 2;
  cfg.seed = 5;
  const auto fit = fit_multi_start(ModelKind::Null, d, cfg);
  CHECK(fit.success);
  CHECK(fit.runs.size() == 2);
  CHECK(fit.data_count == 60);
  CHECK(fit.r_squared > 0.9999);
  CHECK(fit.params.growth(0) == doctest::Approx(0.12).epsilon(1e-2));
  CHECK(fit.params.self_limitation(1) == doctest::Approx(1.4).epsilon(1e-2));
  // same seed, same answer
  const auto again = fit_multi_start(ModelKind::Null, d, cfg);
  CHECK(again.log_likelihood == fit.log_likelihood);
  CHECK(run_seed(cfg, 0) != run_seed(cfg, 1));
}

TEST_CASE("coupled fit warm-started from null is never far below it") {
  MeanFieldParams<> p{Eigen::Vector2d(0.12, 0.08), Eigen::Vector2d(1.0, 1.4), 0.0};
  const auto d = synthetic(ModelKind::Null, p, 30, 0.1, 3);
  FitConfig cfg;
  cfg.adam_epochs = 50;
  cfg.quasi_newton_epochs = 50;
  cfg.runs = 1;
  cfg.seed = 11;
  const auto null_fit = fit_multi_start(ModelKind::Null, d, cfg);
  for (ModelKind kind : {ModelKind::AlphaPositive, ModelKind::AlphaNegative, ModelKind::Mu}) {
    const auto fit = fit_multi_start(kind, d, cfg, nullptr, &null_fit);
    REQUIRE(fit.runs.size() == 2);
    CHECK(fit.runs.back().warm_start);
    CHECK(fit.log_likelihood >= null_fit.log_likelihood - 0.05);
  }
  // no warm start for the null model itself
  CHECK(fit_multi_start(ModelKind::Null, d, cfg, nullptr, &null_fit).runs.size() == 1);
}

TEST_CASE("r squared") {
  Eigen::MatrixXd obs(3, 1), pred(3, 1);
  obs << 1.0, 2.0, 3.0;
  pred << 1.0, 2.0, 3.0;
  CHECK(r_squared(obs, pred) == 1.0);
  pred << 2.0, 2.0, 2.0;
  CHECK(r_squared(obs, pred) == doctest::Approx(0.0));
  CHECK_THROWS_AS(r_squared(Eigen::MatrixXd::Ones(3, 1), pred), std::domain_error);
}

TEST_CASE("fit configuration is validated") {
  FitConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.runs = 0;
  CHECK_THROWS(validate(cfg));
  cfg = {};
  cfg.max_growth = 0.1;
  CHECK_THROWS(validate(cfg));
}
