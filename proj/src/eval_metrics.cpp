#include "pgh/eval_metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>

#include "pgh/error.hpp"
#include "pgh/rng.hpp"

namespace pgh {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::length_mismatch, fmt::format("{} predictions vs {} actuals", a.size(), b.size()));
  }
  if (a.empty()) throw Error(Errc::empty_input, "no values");
}

double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Type-7 sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - actual[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - actual[i]) * (pred[i] - actual[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mean_bias(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += pred[i] - actual[i];
  return s / static_cast<double>(pred.size());
}

CorrelationCI pearson_r_ci(std::span<const double> pred, std::span<const double> actual,
                           double level) {
  check_pair(pred, actual);
  const std::size_t n = pred.size();
  if (n < 4) throw Error(Errc::insufficient_data, "correlation interval needs n >= 4");
  const double mx = mean(pred);
  const double my = mean(actual);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (pred[i] - mx) * (pred[i] - mx);
    syy += (actual[i] - my) * (actual[i] - my);
    sxy += (pred[i] - mx) * (actual[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw Error(Errc::degenerate_variance, "a vector is constant");
  CorrelationCI out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(out.r) >= 1.0 - 1e-15) {
    out.r = out.r > 0 ? 1.0 : -1.0;
    out.lo = out.hi = out.r;
    return out;
  }
  const double z = std::atanh(out.r);
  const double crit = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
  const double half = crit / std::sqrt(static_cast<double>(n) - 3.0);
  out.lo = std::tanh(z - half);
  out.hi = std::tanh(z + half);
  return out;
}

MaeCI bootstrap_mae_ci(std::span<const double> abs_errors, int resamples, std::uint64_t seed,
                       double level) {
  if (abs_errors.size() < 2) throw Error(Errc::insufficient_data, "bootstrap needs n >= 2");
  if (resamples < 1) throw Error(Errc::config_invalid, "resamples must be >= 1");
  const std::size_t n = abs_errors.size();
  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += abs_errors[rng.index(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(means, tail), quantile_sorted(means, 1.0 - tail), resamples};
}

PairedDelta paired_delta_mae(const KeyedErrors& base, const KeyedErrors& variant, int resamples,
                             std::uint64_t seed) {
  if (base.abs_errors.size() != base.keys.size() ||
      variant.abs_errors.size() != variant.keys.size()) {
    throw Error(Errc::length_mismatch, "keys and errors differ in length");
  }
  // Pair by key; the two sides may list countries in any order.
  std::map<std::string_view, std::size_t> variant_at;
  for (std::size_t i = 0; i < variant.keys.size(); ++i) {
    if (!variant_at.emplace(variant.keys[i], i).second) {
      throw Error(Errc::key_mismatch, "duplicate key " + variant.keys[i]);
    }
  }
  if (variant_at.size() != base.keys.size()) {
    throw Error(Errc::key_mismatch, "base and variant cover different countries");
  }
  const std::size_t n = base.keys.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = variant_at.find(base.keys[i]);
    if (it == variant_at.end()) {
      throw Error(Errc::key_mismatch, "variant lacks " + base.keys[i]);
    }
    diff[i] = variant.abs_errors[it->second] - base.abs_errors[i];
    variant_at.erase(it);  // a second hit means base repeats the key
  }
  if (n < 2) throw Error(Errc::insufficient_data, "paired bootstrap needs n >= 2");
  if (resamples < 1) throw Error(Errc::config_invalid, "resamples must be >= 1");

  PairedDelta out;
  out.delta_mae = mean(variant.abs_errors) - mean(base.abs_errors);
  out.resamples = resamples;
  Rng rng(seed);
  std::vector<double> deltas(static_cast<std::size_t>(resamples));
  int at_or_below = 0, at_or_above = 0;
  for (auto& d : deltas) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += diff[rng.index(n)];
    d = s / static_cast<double>(n);
    if (d <= 0) ++at_or_below;
    if (d >= 0) ++at_or_above;
  }
  std::sort(deltas.begin(), deltas.end());
  out.ci_lo = quantile_sorted(deltas, 0.025);
  out.ci_hi = quantile_sorted(deltas, 0.975);
  out.p_value = std::min(1.0, 2.0 * std::min(at_or_below, at_or_above) / resamples);
  return out;
}

HeterogeneityFit heterogeneity_regression(std::span<const double> abs_errors,
                                          std::span<const double> covariate) {
  check_pair(abs_errors, covariate);
  const std::size_t n = abs_errors.size();
  if (n < 10) throw Error(Errc::insufficient_data, "heterogeneity regression needs n >= 10");
  const double mx = mean(covariate);
  const double my = mean(abs_errors);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (covariate[i] - mx) * (covariate[i] - mx);
    syy += (abs_errors[i] - my) * (abs_errors[i] - my);
    sxy += (covariate[i] - mx) * (abs_errors[i] - my);
  }
  if (!(sxx > 0)) throw Error(Errc::degenerate_variance, "covariate is constant");
  HeterogeneityFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (!(syy > 0)) return fit;  // constant errors: flat line, nothing explained
  fit.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  fit.r_squared = fit.r * fit.r;
  const double df = static_cast<double>(n - 2);
  if (fit.r_squared >= 1.0) {
    fit.p = 0.0;
  } else {
    const double t = fit.r * std::sqrt(df / (1.0 - fit.r_squared));
    boost::math::students_t dist(df);
    fit.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return fit;
}

EvalReport evaluate(std::string model_id, std::string condition, std::string item_id,
                    std::vector<CountryError> rows, int resamples, std::uint64_t seed) {
  if (rows.empty()) throw Error(Errc::empty_input, "no rows to evaluate");
  EvalReport rep;
  rep.model_id = std::move(model_id);
  rep.condition = std::move(condition);
  rep.item_id = std::move(item_id);
  rep.n = rows.size();
  std::vector<double> pred, actual, errs;
  for (auto& row : rows) {
    row.abs_error = std::abs(row.prediction - row.actual);
    pred.push_back(row.prediction);
    actual.push_back(row.actual);
    errs.push_back(row.abs_error);
  }
  rep.mae = mae(pred, actual);
  rep.rmse = rmse(pred, actual);
  rep.mean_bias = mean_bias(pred, actual);
  if (rep.n >= 4) {
    try {
      rep.pearson = pearson_r_ci(pred, actual);
      rep.r_squared = rep.pearson.r * rep.pearson.r;
      rep.has_pearson = true;
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_variance) throw;
    }
  }
  if (rep.n >= 2) rep.bootstrap = bootstrap_mae_ci(errs, resamples, seed);
  rep.per_country = std::move(rows);
  return rep;
}

}  // namespace pgh
