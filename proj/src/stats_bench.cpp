#include "pgh/stats_bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>

#include "pgh/error.hpp"
#include "pgh/rng.hpp"

namespace pgh {

namespace {

double two_sided_t_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct Centered {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::RowVectorXd x_mean;
  double y_mean;
};

Centered center(const DesignMatrix& dm) {
  Centered c;
  c.x_mean = dm.values.colwise().mean();
  c.y_mean = dm.target.mean();
  c.x = dm.values.rowwise() - c.x_mean;
  c.y = dm.target.array() - c.y_mean;
  return c;
}

// Coordinate descent on centered data. Returns sweeps used, or -1 when
// max_iter is exhausted.
int coordinate_descent(const Centered& c, double lambda, double tol, int max_iter,
                       Eigen::VectorXd& beta) {
  const double n = static_cast<double>(c.x.rows());
  const Eigen::Index p = c.x.cols();
  Eigen::VectorXd col_sq = c.x.colwise().squaredNorm().transpose() / n;
  Eigen::VectorXd resid = c.y - c.x * beta;
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) == 0.0) continue;
      double old = beta(j);
      double rho = c.x.col(j).dot(resid) / n + col_sq(j) * old;
      double updated = soft_threshold(rho, lambda) / col_sq(j);
      if (updated != old) {
        resid -= c.x.col(j) * (updated - old);
        beta(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change < tol) return sweep;
  }
  return -1;
}

double mean_abs(const Eigen::VectorXd& e) { return e.cwiseAbs().mean(); }
double root_mean_sq(const Eigen::VectorXd& e) { return std::sqrt(e.squaredNorm() / e.size()); }

DesignMatrix subset_rows(const DesignMatrix& dm, const std::vector<std::size_t>& rows) {
  DesignMatrix out;
  out.column_names = dm.column_names;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), dm.cols());
  out.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = static_cast<Eigen::Index>(rows[i]);
    out.values.row(static_cast<Eigen::Index>(i)) = dm.values.row(r);
    out.target(static_cast<Eigen::Index>(i)) = dm.target(r);
    out.row_keys.push_back(dm.row_keys[rows[i]]);
  }
  return out;
}

}  // namespace

DesignMatrix build_design(const Dataset& ds, std::span<const Field> columns, Field target) {
  DesignMatrix dm;
  for (Field f : columns) dm.column_names.emplace_back(field_name(f));
  std::vector<const CountryRecord*> rows;
  for (const auto& r : ds.records()) {
    bool complete = r.has(target) &&
                    std::all_of(columns.begin(), columns.end(), [&](Field f) { return r.has(f); });
    if (complete) rows.push_back(&r);
  }
  dm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  dm.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      dm.values(ii, static_cast<Eigen::Index>(j)) = *rows[i]->get(columns[j]);
    }
    dm.target(ii) = *rows[i]->get(target);
    dm.row_keys.push_back(rows[i]->country_name);
  }
  return dm;
}

DesignMatrix standardize(const DesignMatrix& dm) {
  const auto n = dm.rows();
  if (n < 2) throw Error(Errc::insufficient_n, "standardizing needs at least 2 rows");
  auto transform = [&](const Eigen::VectorXd& v, const std::string& name) {
    ColumnTransform t;
    t.mean = v.mean();
    t.sd = std::sqrt((v.array() - t.mean).square().sum() / static_cast<double>(n - 1));
    if (!(t.sd > 0.0)) throw Error(Errc::zero_variance_column, name);
    return t;
  };
  DesignMatrix out = dm;
  out.column_transforms.clear();
  for (Eigen::Index j = 0; j < dm.cols(); ++j) {
    auto t = transform(dm.values.col(j), dm.column_names[static_cast<std::size_t>(j)]);
    out.values.col(j) = (dm.values.col(j).array() - t.mean) / t.sd;
    out.column_transforms.push_back(t);
  }
  out.target_transform = transform(dm.target, "target");
  out.target = (dm.target.array() - out.target_transform.mean) / out.target_transform.sd;
  out.standardized = true;
  return out;
}

Eigen::MatrixXd apply_column_transforms(const DesignMatrix& fitted, const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd out = raw;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const auto& t = fitted.column_transforms.at(static_cast<std::size_t>(j));
    out.col(j) = (raw.col(j).array() - t.mean) / t.sd;
  }
  return out;
}

Eigen::VectorXd RegressionFit::predict(const Eigen::MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

RegressionFit ols_fit(const DesignMatrix& dm, bool robust) {
  const Eigen::Index n = dm.rows();
  const Eigen::Index p = dm.cols();
  const Eigen::Index k = p + 1;
  if (n <= k) {
    throw Error(Errc::insufficient_n, fmt::format("n = {} with {} columns plus intercept", n, p));
  }
  Eigen::MatrixXd x(n, k);
  x.col(0).setOnes();
  x.rightCols(p) = dm.values;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::string names;
    for (Eigen::Index i = qr.rank(); i < k; ++i) {
      Eigen::Index col = qr.colsPermutation().indices()(i);
      if (!names.empty()) names += ", ";
      names += col == 0 ? std::string("intercept") : dm.column_names[static_cast<std::size_t>(col - 1)];
    }
    throw Error(Errc::rank_deficient, "collinear columns: " + names);
  }
  Eigen::VectorXd beta = qr.solve(dm.target);
  Eigen::VectorXd resid = dm.target - x * beta;

  // (X'X)^-1 = P R^-1 R^-T P'
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd inv_perm = r_inv * r_inv.transpose();
  Eigen::MatrixXd xtx_inv = qr.colsPermutation() * inv_perm * qr.colsPermutation().transpose();

  const double dof = static_cast<double>(n - k);
  Eigen::MatrixXd cov;
  if (robust) {
    Eigen::MatrixXd meat = x.transpose() * resid.array().square().matrix().asDiagonal() * x;
    cov = xtx_inv * meat * xtx_inv * (static_cast<double>(n) / dof);
  } else {
    cov = xtx_inv * (resid.squaredNorm() / dof);
  }

  RegressionFit fit;
  fit.method = FitMethod::ols;
  fit.column_names = dm.column_names;
  fit.robust = robust;
  fit.n = static_cast<std::size_t>(n);
  fit.intercept = beta(0);
  fit.coefficients = beta.tail(p);
  Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.intercept_se = se(0);
  fit.standard_errors = se.tail(p);
  fit.intercept_p = two_sided_t_p(fit.intercept / fit.intercept_se, dof);
  fit.p_values.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.p_values(j) = two_sided_t_p(fit.coefficients(j) / fit.standard_errors(j), dof);
  }
  const double sst = (dm.target.array() - dm.target.mean()).square().sum();
  const double sse = resid.squaredNorm();
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : 0.0;
  fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * static_cast<double>(n - 1) / dof;
  return fit;
}

double lasso_lambda_max(const DesignMatrix& dm) {
  auto c = center(dm);
  const double n = static_cast<double>(dm.rows());
  // Same per-column dot product as the first coordinate-descent sweep, so a
  // fit at exactly lambda_max rounds to all zeros.
  double best = 0.0;
  for (Eigen::Index j = 0; j < c.x.cols(); ++j) best = std::max(best, std::abs(c.x.col(j).dot(c.y) / n));
  return best;
}

double lasso_objective(const DesignMatrix& dm, const Eigen::VectorXd& beta, double lambda) {
  auto c = center(dm);
  const double n = static_cast<double>(dm.rows());
  return (c.y - c.x * beta).squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

double lasso_kkt_residual(const DesignMatrix& dm, const Eigen::VectorXd& beta, double lambda) {
  auto c = center(dm);
  const double n = static_cast<double>(dm.rows());
  Eigen::VectorXd grad = c.x.transpose() * (c.y - c.x * beta) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double v = beta(j) != 0.0 ? std::abs(grad(j) - lambda * (beta(j) > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(grad(j)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

RegressionFit lasso_fit(const DesignMatrix& dm, double lambda, double tol, int max_iter,
                        const std::optional<Eigen::VectorXd>& warm_start) {
  if (!dm.standardized) throw Error(Errc::not_standardized, "lasso_fit needs standardize() first");
  if (lambda < 0.0) throw Error(Errc::config_invalid, "lambda must be >= 0");
  auto c = center(dm);
  Eigen::VectorXd beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(dm.cols());
  int sweeps = coordinate_descent(c, lambda, tol, max_iter, beta);

  RegressionFit fit;
  fit.method = FitMethod::lasso;
  fit.column_names = dm.column_names;
  fit.coefficients = beta;
  fit.intercept = c.y_mean - c.x_mean.dot(beta);
  fit.lambda = lambda;
  fit.n = static_cast<std::size_t>(dm.rows());
  fit.converged = sweeps >= 0;
  fit.iterations = sweeps >= 0 ? sweeps : max_iter;
  const double sst = c.y.squaredNorm();
  const double sse = (c.y - c.x * beta).squaredNorm();
  fit.r_squared = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  const double dof = static_cast<double>(dm.rows() - dm.cols() - 1);
  fit.adj_r_squared =
      dof > 0 ? 1.0 - (1.0 - fit.r_squared) * static_cast<double>(dm.rows() - 1) / dof : fit.r_squared;
  return fit;
}

std::vector<SplitPair> split_train_test(const Dataset& ds, double fraction, int iterations,
                                        std::uint64_t seed) {
  if (ds.empty()) throw Error(Errc::empty_dataset, "cannot split an empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(Errc::config_invalid, "train fraction must lie in (0, 1)");
  }
  if (iterations < 1) throw Error(Errc::config_invalid, "iterations must be >= 1");

  std::map<int, std::vector<std::size_t>> by_continent;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_continent[static_cast<int>(ds[i].continent)].push_back(i);
  }
  std::vector<std::vector<std::size_t>> strata;
  std::vector<std::size_t> other;
  for (auto& [continent, members] : by_continent) {
    if (members.size() < 2) {
      other.insert(other.end(), members.begin(), members.end());
    } else {
      strata.push_back(members);
    }
  }
  if (!other.empty()) {
    std::sort(other.begin(), other.end());
    strata.push_back(other);
  }

  const std::size_t total = ds.size();
  const auto target_train =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5));
  std::vector<std::size_t> quota(strata.size());
  std::vector<double> remainder(strata.size());
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    double exact = fraction * static_cast<double>(strata[s].size());
    quota[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[s] = exact - static_cast<double>(quota[s]);
    assigned += quota[s];
  }
  std::vector<std::size_t> order(strata.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t i = 0; assigned < target_train && i < order.size(); ++i) {
    if (quota[order[i]] < strata[order[i]].size()) {
      ++quota[order[i]];
      ++assigned;
    }
  }

  std::vector<SplitPair> splits;
  for (int it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(it)));
    SplitPair pair;
    for (std::size_t s = 0; s < strata.size(); ++s) {
      auto members = strata[s];
      rng.shuffle(std::span<std::size_t>(members));
      pair.train.insert(pair.train.end(), members.begin(), members.begin() + static_cast<long>(quota[s]));
      pair.test.insert(pair.test.end(), members.begin() + static_cast<long>(quota[s]), members.end());
    }
    std::sort(pair.train.begin(), pair.train.end());
    std::sort(pair.test.begin(), pair.test.end());
    splits.push_back(std::move(pair));
  }
  return splits;
}

std::vector<Field> benchmark_features() {
  return {Field::mean_age,
          Field::tertiary_education_pct,
          Field::religiosity_pct,
          Field::gdp_pc_ppp_2021,
          Field::top1_income_share_pct,
          Field::top1_wealth_share_pct,
          Field::hdi_2021,
          Field::avg_temp_2010_2019,
          Field::willing_1pct,
          Field::willing_smaller_pct};
}

std::vector<double> lasso_lambda_grid(double lambda_max, int points, double min_ratio) {
  std::vector<double> grid;
  if (points == 1) {
    grid.push_back(lambda_max);
  } else {
    for (int i = 0; i < points; ++i) {
      double t = static_cast<double>(i) / static_cast<double>(points - 1);
      grid.push_back(lambda_max * std::pow(min_ratio, t));
    }
  }
  grid.push_back(0.0);
  return grid;
}

std::vector<BenchmarkIteration> fit_benchmarks(const Dataset& ds,
                                               const std::vector<SplitPair>& splits,
                                               const BenchmarkOptions& options) {
  for (const auto& r : ds.records()) {
    for (Field f : options.features) {
      if (!r.has(f)) {
        throw Error(Errc::missing_field,
                    fmt::format("{} lacks {}; benchmark on complete records only", r.country_name,
                                field_name(f)));
      }
    }
    if (!r.has(options.target)) {
      throw Error(Errc::missing_field, fmt::format("{} lacks the target", r.country_name));
    }
  }
  const DesignMatrix all = build_design(ds, options.features, options.target);

  std::vector<BenchmarkIteration> results;
  for (std::size_t it = 0; it < splits.size(); ++it) {
    const auto& split = splits[it];
    auto train_raw = subset_rows(all, split.train);
    auto test_raw = subset_rows(all, split.test);
    auto train = standardize(train_raw);
    Eigen::MatrixXd test_x = apply_column_transforms(train, test_raw.values);
    const auto& yt = train.target_transform;
    auto to_raw = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
      return (z.array() * yt.sd + yt.mean).matrix();
    };

    BenchmarkIteration out;
    out.iteration = static_cast<int>(it);

    auto ols = ols_fit(train, true);
    Eigen::VectorXd ols_err = to_raw(ols.predict(test_x)) - test_raw.target;
    out.ols_test_mae = mean_abs(ols_err);
    out.ols_test_rmse = root_mean_sq(ols_err);

    // Inner cross-validation over the training rows only.
    const auto grid =
        lasso_lambda_grid(lasso_lambda_max(train), options.lambda_grid_points, options.lambda_min_ratio);
    const auto n_train = static_cast<std::size_t>(train.rows());
    std::vector<std::size_t> perm(n_train);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(options.seed, 0x1000 + it));
    rng.shuffle(std::span<std::size_t>(perm));
    const int folds = std::max(2, std::min<int>(options.inner_folds, static_cast<int>(n_train)));
    std::vector<double> cv_error(grid.size(), 0.0);
    for (int fold = 0; fold < folds; ++fold) {
      std::vector<std::size_t> fit_rows, held_rows;
      for (std::size_t i = 0; i < n_train; ++i) {
        (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold ? held_rows : fit_rows)
            .push_back(perm[i]);
      }
      std::sort(fit_rows.begin(), fit_rows.end());
      std::sort(held_rows.begin(), held_rows.end());
      auto fit_dm = subset_rows(train, fit_rows);
      fit_dm.standardized = true;
      auto held_dm = subset_rows(train, held_rows);
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(train.cols());
      for (std::size_t g = 0; g < grid.size(); ++g) {
        auto fit = lasso_fit(fit_dm, grid[g], 1e-8, 100000, beta);
        beta = fit.coefficients;
        cv_error[g] += (fit.predict(held_dm.values) - held_dm.target).squaredNorm();
      }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      if (cv_error[g] < cv_error[best]) best = g;
    }
    out.lasso_lambda = grid[best];
    auto lasso = lasso_fit(train, out.lasso_lambda, 1e-10);
    Eigen::VectorXd lasso_err = to_raw(lasso.predict(test_x)) - test_raw.target;
    out.lasso_test_mae = mean_abs(lasso_err);
    out.lasso_test_rmse = root_mean_sq(lasso_err);
    results.push_back(out);
  }
  return results;
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  return {};
}

}  // namespace pgh
