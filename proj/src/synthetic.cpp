#include "ecodyn/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <optional>

#include "ecodyn/parallel.hpp"
#include "ecodyn/rng.hpp"

namespace ecodyn {

Dataset generate_dataset(ModelKind kind, const MeanFieldParams<>& params,
                         const CommunityState& initial, std::span<const int> years, double sigma,
                         std::uint64_t seed, const GlobalField* field,
                         const IntegratorConfig& config) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("generate_dataset: sigma must be >= 0");
  const std::vector<double> times(years.begin(), years.end());
  const Trajectory traj = integrate(kind, params, initial, times, field, config);

  Dataset out;
  out.country = "synthetic";
  out.years.assign(years.begin(), years.end());
  out.observations = traj.states;
  for (Eigen::Index i = 0; i < params.size(); ++i) out.activity_labels.push_back("a" + std::to_string(i));
  if (sigma > 0.0) {
    Rng rng(seed);
    // Row-major draw order keeps the noise of a year independent of N.
    for (Eigen::Index t = 0; t < out.observations.rows(); ++t)
      for (Eigen::Index i = 0; i < out.observations.cols(); ++i)
        out.observations(t, i) *= std::exp(sigma * rng.normal());
  }
  return out;
}

double typical_alpha_limit(Eigen::Index activities, double lo, double hi) {
  if (activities < 2 || !(lo > 0.0) || !(hi > lo))
    throw std::invalid_argument("typical_alpha_limit needs N >= 2 and 0 < lo < hi");
  const double n = static_cast<double>(activities);
  auto excess = [&](double a) { return n * a * std::log((hi + a) / (lo + a)) / (hi - lo) - 1.0; };
  double a = 0.0, b = hi;
  while (excess(b) < 0.0) b *= 2.0;
  for (int k = 0; k < 200 && b - a > 1e-14 * b; ++k) {
    const double m = 0.5 * (a + b);
    (excess(m) < 0.0 ? a : b) = m;
  }
  return 0.5 * (a + b);
}

std::vector<double> default_coupling_grid(ModelKind generator, Eigen::Index activities) {
  const double others = static_cast<double>(std::max<Eigen::Index>(activities - 1, 1));
  std::vector<double> out;
  switch (generator) {
    case ModelKind::AlphaPositive: {
      // past the edge some draws blow up in finite time
      const double edge = activities > 1 ? typical_alpha_limit(activities) : 1.0;
      for (double f : {0.0, 0.1, 0.25, 0.5, 0.75, 0.95}) out.push_back(f * edge);
      return out;
    }
    case ModelKind::AlphaNegative:
      for (double f : {0.0, 0.01, 0.03, 0.1, 0.3, 0.6, 1.0}) out.push_back(-f * 15.0 / others);
      return out;
    case ModelKind::Delta: return {0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
    case ModelKind::Mu:
      for (double f : {0.0, 0.01, 0.03, 0.1, 0.3, 0.6}) out.push_back(f / static_cast<double>(activities));
      return out;
    default: break;
  }
  throw std::invalid_argument("no coupling grid for generator " + std::string(to_string(generator)));
}

void validate(const SweepConfig& config) {
  if (!has_coupling(config.generator))
    throw std::invalid_argument("sweep generator must be alpha+, alpha-, delta or mu");
  if (!(config.sigma >= 0.0)) throw std::invalid_argument("sweep sigma must be >= 0");
  if (config.activities < 1 || config.time_points < 3 || config.replicates < 1)
    throw std::invalid_argument("sweep needs N >= 1, T >= 3 and at least one replicate");
  if (config.field_countries < 1)
    throw std::invalid_argument("sweep needs at least one pseudo-country for the global field");
}

namespace {

MeanFieldParams<> sample_base(const SweepConfig& config, Rng& rng) {
  MeanFieldParams<> p;
  p.growth.resize(config.activities);
  p.self_limitation.resize(config.activities);
  for (Eigen::Index i = 0; i < config.activities; ++i)
    p.growth(i) = rng.uniform(config.growth.lo, config.growth.hi);
  for (Eigen::Index i = 0; i < config.activities; ++i)
    p.self_limitation(i) = rng.uniform(config.self_limitation.lo, config.self_limitation.hi);
  return p;
}

CommunityState sample_initial(const SweepConfig& config, const MeanFieldParams<>& p, Rng& rng) {
  CommunityState n(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    n(i) = rng.uniform(config.initial_fraction.lo, config.initial_fraction.hi) / p.self_limitation(i);
  return n;
}

}  // namespace

SweepInstance make_sweep_instance(const SweepConfig& config, double coupling, int replicate) {
  validate(config);
  const std::uint64_t base = derive_seed(
      config.seed, {fnv1a(to_string(config.generator)), static_cast<std::uint64_t>(replicate)});
  Rng rng(base);

  SweepInstance out;
  out.params = sample_base(config, rng);
  out.params.coupling = coupling;
  out.initial = sample_initial(config, out.params, rng);

  std::vector<int> years(static_cast<std::size_t>(config.time_points));
  for (std::size_t t = 0; t < years.size(); ++t) years[t] = config.first_year + static_cast<int>(t);
  const std::vector<double> times(years.begin(), years.end());

  // Every generator gets a field: the dispersal model is fitted to all of them.
  std::vector<Eigen::MatrixXd> others;
  for (int c = 0; c < config.field_countries; ++c) {
    MeanFieldParams<> other = sample_base(config, rng);
    const CommunityState start = sample_initial(config, other, rng);
    others.push_back(integrate(ModelKind::Null, other, start, times).states);
  }
  out.field = GlobalField::mean_of(times, others);

  const std::uint64_t noise_seed = derive_seed(base, {fnv1a("noise")});
  out.dataset = generate_dataset(config.generator, out.params, out.initial, years, config.sigma,
                                 noise_seed, &*out.field);
  out.dataset.country = std::string(to_string(config.generator)) + "_r" + std::to_string(replicate);
  return out;
}

SweepCell run_sweep_cell(const SweepConfig& config, const FitConfig& fit_config, double coupling,
                         int replicate) {
  SweepCell cell;
  cell.generator = config.generator;
  cell.coupling = coupling;
  cell.replicate = replicate;
  try {
    const SweepInstance instance = make_sweep_instance(config, coupling, replicate);
    const GlobalField* field = &*instance.field;
    std::vector<ModelLikelihood> likelihoods;
    Eigen::Index segments = 0;
    std::optional<FitResult> null_fit;  // kSubModels lists null first
    for (ModelKind kind : kSubModels) {
      FitConfig fc = fit_config;
      fc.seed = derive_seed(fit_config.seed, {fnv1a(to_string(config.generator)),
                                              std::bit_cast<std::uint64_t>(coupling),
                                              static_cast<std::uint64_t>(replicate),
                                              fnv1a(to_string(kind))});
      FitResult fit = fit_multi_start(kind, instance.dataset, fc, field, null_fit ? &*null_fit : nullptr);
      if (kind == ModelKind::Null) null_fit = fit;
      likelihoods.push_back({kind, fit.log_likelihood});
      cell.r_squared.push_back(fit.r_squared);
      segments = static_cast<Eigen::Index>(fit.segments.size());
    }
    cell.report = select_models(instance.dataset.country, likelihoods, instance.dataset.activities(),
                                instance.dataset.observed_count(), segments);
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<SweepCell> run_sweep(const SweepConfig& config, const FitConfig& fit_config, int jobs) {
  validate(config);
  const std::vector<double> grid =
      config.coupling_grid.empty() ? default_coupling_grid(config.generator, config.activities) : config.coupling_grid;
  std::vector<std::pair<double, int>> jobs_list;
  for (double c : grid)
    for (int r = 0; r < config.replicates; ++r) jobs_list.emplace_back(c, r);

  std::vector<SweepCell> cells(jobs_list.size());
  parallel_for(jobs_list.size(), jobs, [&](std::size_t k) {
    cells[k] = run_sweep_cell(config, fit_config, jobs_list[k].first, jobs_list[k].second);
  });
  return cells;
}

int excluded_competitors(const SweepCell& cell) {
  int count = 0;
  for (const auto& e : cell.report.entries)
    if (e.kind != cell.generator && e.delta_bic > kEvidenceThreshold) ++count;
  return count;
}

SweepProperties evaluate_sweep(ModelKind generator, std::span<const SweepCell> cells) {
  SweepProperties out;
  out.generator = generator;
  // Failed cells stay in their group and count as not meeting any property.
  std::map<double, std::vector<const SweepCell*>> by_magnitude;
  for (const auto& cell : cells) {
    if (cell.generator != generator) continue;
    by_magnitude[std::abs(cell.coupling)].push_back(&cell);
    if (!cell.ok) {
      ++out.failed_cells;
      continue;
    }
    const auto best = cell.report.best();
    if (best && *best != generator && *best != ModelKind::Null) ++out.wrong_best_cells;
  }
  if (by_magnitude.empty()) return out;

  if (by_magnitude.begin()->first == 0.0)
    for (const SweepCell* cell : by_magnitude.begin()->second) {
      ++out.zero_coupling_cells;
      if (cell->ok && cell->report.best() == ModelKind::Null) ++out.zero_coupling_null_best;
    }
  const auto& [extreme, extreme_cells] = *by_magnitude.rbegin();
  out.extreme_coupling = extreme;
  for (const SweepCell* cell : extreme_cells) {
    if (extreme == 0.0) break;
    ++out.extreme_cells;
    if (cell->ok && cell->report.best() == generator) ++out.extreme_true_best;
  }

  double previous = -1.0;
  for (const auto& [magnitude, group] : by_magnitude) {
    double mean = 0.0;
    for (const SweepCell* cell : group) mean += cell->ok ? excluded_competitors(*cell) : 0;
    mean /= static_cast<double>(group.size());
    out.support_curve.emplace_back(magnitude, mean);
    if (mean < previous) ++out.monotone_violations;
    previous = mean;
  }
  return out;
}

}  // namespace ecodyn
