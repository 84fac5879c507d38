#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pgh {

double mae(std::span<const double> pred, std::span<const double> actual);
double rmse(std::span<const double> pred, std::span<const double> actual);
/// Mean of pred - actual. Negative means underprediction.
double mean_bias(std::span<const double> pred, std::span<const double> actual);

struct CorrelationCI {
  double r = 0;
  double lo = 0;
  double hi = 0;
};

/// Sample correlation with a Fisher-z interval (sd 1 / sqrt(n - 3)).
/// |r| == 1 gives the degenerate interval [r, r].
CorrelationCI pearson_r_ci(std::span<const double> pred, std::span<const double> actual,
                           double level = 0.95);

struct MaeCI {
  double lo = 0;
  double hi = 0;
  int resamples = 0;
};

/// Percentile bootstrap of the mean absolute error.
MaeCI bootstrap_mae_ci(std::span<const double> abs_errors, int resamples = 10000,
                       std::uint64_t seed = 0, double level = 0.95);

/// Absolute errors keyed by country.
struct KeyedErrors {
  std::vector<std::string> keys;
  std::vector<double> abs_errors;
};

struct PairedDelta {
  double delta_mae = 0;
  double ci_lo = 0;
  double ci_hi = 0;
  double p_value = 1;
  int resamples = 0;
};

/// variant MAE - base MAE, with a paired bootstrap over countries matched
/// by key. The two-sided p is 2 * min(share of resampled deltas <= 0,
/// share >= 0), capped at 1.
PairedDelta paired_delta_mae(const KeyedErrors& base, const KeyedErrors& variant,
                             int resamples = 10000, std::uint64_t seed = 0);

struct HeterogeneityFit {
  double slope = 0;
  double intercept = 0;
  double r = 0;
  double r_squared = 0;
  double p = 1;
  std::size_t n = 0;
};

/// Simple OLS of absolute error on one covariate.
HeterogeneityFit heterogeneity_regression(std::span<const double> abs_errors,
                                          std::span<const double> covariate);

struct CountryError {
  std::string country;
  double prediction = 0;
  double actual = 0;
  double abs_error = 0;
};

struct EvalReport {
  std::string model_id;
  std::string condition;
  std::string item_id;
  std::size_t n = 0;
  double mae = 0;
  double rmse = 0;
  /// Set when n >= 4 and neither side is constant.
  bool has_pearson = false;
  CorrelationCI pearson;
  /// Squared Pearson correlation.
  double r_squared = 0;
  double mean_bias = 0;
  std::vector<CountryError> per_country;
  MaeCI bootstrap;
  /// Cells without a usable prediction; not part of n.
  std::size_t n_failed = 0;
};

/// Rows must be keyed and aligned by the caller. Pearson fields stay at
/// zero, with has_pearson false, when n < 4 or either side has no variance.
EvalReport evaluate(std::string model_id, std::string condition, std::string item_id,
                    std::vector<CountryError> rows, int resamples = 10000,
                    std::uint64_t seed = 0);

}  // namespace pgh
