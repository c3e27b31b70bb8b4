#include "ecodyn/stats.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

namespace ecodyn {

RegressionResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     std::vector<std::string> names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (response.size() != n) throw std::invalid_argument("ols: response length differs from rows");
  if (n <= p) throw std::invalid_argument("ols: need more observations than predictors");
  if (!design.allFinite() || !response.allFinite())
    throw std::invalid_argument("ols: non-finite input");
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw std::invalid_argument("ols: one name per column required");

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) {
    std::vector<Eigen::Index> dependent;
    for (Eigen::Index k = qr.rank(); k < p; ++k) dependent.push_back(qr.colsPermutation().indices()(k));
    std::string list;
    for (auto c : dependent) list += (list.empty() ? "" : ", ") + names[static_cast<std::size_t>(c)];
    throw RankDeficient("ols: design matrix is rank deficient (dependent columns: " + list + ")",
                        std::move(dependent));
  }

  RegressionResult out;
  out.names = std::move(names);
  out.observations = n;
  out.coefficients = qr.solve(response);
  out.residuals = response - design * out.coefficients;
  const double dof = static_cast<double>(n - p);
  const double sigma2 = out.residuals.squaredNorm() / dof;
  const Eigen::MatrixXd xtx_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  out.standard_errors = (sigma2 * xtx_inv.diagonal()).cwiseSqrt();
  out.t_statistics = out.coefficients.cwiseQuotient(out.standard_errors);
  out.p_values.resize(p);
  const boost::math::students_t dist(dof);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double t = out.t_statistics(j);
    // exact fits give t = +-inf (p = 0) or 0/0 (p undefined)
    if (std::isnan(t))
      out.p_values(j) = std::numeric_limits<double>::quiet_NaN();
    else if (std::isinf(t))
      out.p_values(j) = 0.0;
    else
      out.p_values(j) = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  const double mean = response.mean();
  const double ss_tot = (response.array() - mean).square().sum();
  out.r_squared = ss_tot > 0.0 ? 1.0 - out.residuals.squaredNorm() / ss_tot : 1.0;
  return out;
}

Eigen::VectorXd standardize(const Eigen::VectorXd& values) {
  if (values.size() < 2) throw std::invalid_argument("standardize: need at least two values");
  const double mean = values.mean();
  const Eigen::VectorXd centred = values.array() - mean;
  const double sd = std::sqrt(centred.squaredNorm() / static_cast<double>(values.size() - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("standardize: input is constant");
  return centred / sd;
}

}  // namespace ecodyn
