#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecodyn {

struct RegressionResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_statistics;
  Eigen::VectorXd p_values;  ///< two-sided, Student t with n - p degrees of freedom
  Eigen::VectorXd residuals;
  double r_squared = 0.0;
  Eigen::Index observations = 0;
};

/// Raised when the design matrix is not of full column rank. `columns` lists
/// the columns that are linear combinations of the others.
class RankDeficient : public std::runtime_error {
 public:
  RankDeficient(const std::string& what, std::vector<Eigen::Index> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<Eigen::Index>& columns() const { return columns_; }

 private:
  std::vector<Eigen::Index> columns_;
};

/// Ordinary least squares with classical homoskedastic standard errors. The
/// design matrix must already contain an intercept column if one is wanted.
RegressionResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     std::vector<std::string> names = {});

/// Zero mean, unit sample standard deviation.
Eigen::VectorXd standardize(const Eigen::VectorXd& values);

}  // namespace ecodyn
