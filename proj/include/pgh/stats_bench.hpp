#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgh/country_data.hpp"

namespace pgh {

struct ColumnTransform {
  double mean = 0.0;
  double sd = 1.0;
};

/// Complete-case regression inputs, one row per country.
struct DesignMatrix {
  std::vector<std::string> row_keys;
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;  // rows x columns
  Eigen::VectorXd target;
  bool standardized = false;
  /// Filled by standardize(): the shift/scale applied to each column and
  /// to the target, so predictions can be mapped back.
  std::vector<ColumnTransform> column_transforms;
  ColumnTransform target_transform;

  [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
};

/// Rows of `ds` with every column and the target present, in dataset order.
DesignMatrix build_design(const Dataset& ds, std::span<const Field> columns, Field target);

/// Z-scores every column and the target using the sample sd (n - 1).
/// Throws zero_variance_column naming the offending column.
DesignMatrix standardize(const DesignMatrix& dm);

/// Applies stored column transforms to raw rows.
Eigen::MatrixXd apply_column_transforms(const DesignMatrix& fitted, const Eigen::MatrixXd& raw);

enum class FitMethod { ols, lasso };

struct RegressionFit {
  FitMethod method = FitMethod::ols;
  std::vector<std::string> column_names;
  Eigen::VectorXd coefficients;
  /// OLS only: HC1 when robust, classical otherwise.
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd p_values;
  double intercept = 0.0;
  double intercept_se = 0.0;
  double intercept_p = 1.0;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  std::size_t n = 0;
  bool robust = false;
  // Lasso only.
  double lambda = 0.0;
  bool converged = true;
  int iterations = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Least squares with an intercept. Requires n > columns + 1 and full
/// column rank (rank_deficient names the collinear columns).
RegressionFit ols_fit(const DesignMatrix& dm, bool robust = true);

/// max_j |x_j . y| / n on the centered data: the smallest penalty at which
/// every Lasso coefficient is zero.
double lasso_lambda_max(const DesignMatrix& dm);

/// (1 / 2n) ||y - b0 - X b||^2 + lambda ||b||_1 with b0 at its optimum.
double lasso_objective(const DesignMatrix& dm, const Eigen::VectorXd& beta, double lambda);

/// Largest violation of the Lasso subgradient conditions.
double lasso_kkt_residual(const DesignMatrix& dm, const Eigen::VectorXd& beta, double lambda);

/// Cyclic coordinate descent until the largest coefficient change in a
/// sweep drops below tol. Requires a standardized matrix. Non-convergence
/// is reported through `converged`, not thrown.
RegressionFit lasso_fit(const DesignMatrix& dm, double lambda, double tol = 1e-10,
                        int max_iter = 100000,
                        const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

struct SplitPair {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  friend bool operator==(const SplitPair&, const SplitPair&) = default;
};

/// Repeated train/test splits stratified by continent. Each stratum gives
/// floor(fraction * size) rows to train, and the remaining train slots up
/// to round(fraction * N) go to the strata with the largest fractional
/// remainders. Strata with fewer than two members are merged into one
/// "Other" stratum. Indices are sorted within each side.
std::vector<SplitPair> split_train_test(const Dataset& ds, double fraction = 0.8,
                                        int iterations = 10, std::uint64_t seed = 0);

/// Prompt covariates used as benchmark regressors.
std::vector<Field> benchmark_features();

struct BenchmarkOptions {
  std::vector<Field> features = benchmark_features();
  Field target = Field::perceived_willing_pct;
  int inner_folds = 5;
  int lambda_grid_points = 50;
  double lambda_min_ratio = 1e-4;
  std::uint64_t seed = 0;
};

struct BenchmarkIteration {
  int iteration = 0;
  double ols_test_mae = 0;
  double lasso_test_mae = 0;
  double ols_test_rmse = 0;
  double lasso_test_rmse = 0;
  double lasso_lambda = 0;
};

/// Descending grid from lambda_max to lambda_max * ratio (log-spaced),
/// followed by 0.
std::vector<double> lasso_lambda_grid(double lambda_max, int points, double min_ratio);

/// Fits OLS and cross-validated Lasso on each split's training rows and
/// scores both on its test rows. Every record must carry the features and
/// the target.
std::vector<BenchmarkIteration> fit_benchmarks(const Dataset& ds,
                                               const std::vector<SplitPair>& splits,
                                               const BenchmarkOptions& options = {});

/// "***" for p < .01, "**" for p < .05, otherwise empty.
std::string significance_stars(double p);

}  // namespace pgh
