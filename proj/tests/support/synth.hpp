// Synthetic country tables for tests.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgh/country_data.hpp"
#include "pgh/rng.hpp"

namespace pgh::test {

inline const std::string kFixtureDir = PGH_FIXTURE_DIR;

inline CountryRecord argentina() {
  CountryRecord r;
  r.country_name = "Argentina";
  r.iso3 = "ARG";
  r.continent = Continent::south_america;
  r.set(Field::mean_age, 42.1);
  r.set(Field::tertiary_education_pct, 10.8);
  r.set(Field::religiosity_pct, 52.3);
  r.set(Field::gdp_pc_ppp_2021, 29484);
  r.set(Field::top1_income_share_pct, 13.0);
  r.set(Field::top1_wealth_share_pct, 24.9);
  r.set(Field::hdi_2021, 0.842);
  r.set(Field::avg_temp_2010_2019, 15.3);
  r.set(Field::willing_1pct, 62.2);
  r.set(Field::willing_smaller_pct, 14.3);
  r.set(Field::perceived_willing_pct, 38.1);
  r.set(Field::sample_n, 1000);
  return r;
}

inline std::string synth_name(std::size_t i) {
  // Letters only, so names never collide with real countries.
  std::string s = "Synthland ";
  s += static_cast<char>('A' + (i / 26) % 26);
  s += static_cast<char>('a' + i % 26);
  return s;
}

inline Continent synth_continent(std::size_t i) { return static_cast<Continent>(i % 6); }

inline double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

/// Every field drawn in range; `missing_share` of optional cells left empty.
inline CountryRecord random_record(Rng& rng, std::size_t i, double missing_share = 0.0) {
  CountryRecord r;
  r.country_name = synth_name(i);
  r.continent = synth_continent(i);
  auto maybe = [&](Field f, double v) {
    if (rng.uniform01() >= missing_share) r.set(f, v);
  };
  maybe(Field::mean_age, rng.uniform(18, 60));
  maybe(Field::tertiary_education_pct, rng.uniform(0, 100));
  maybe(Field::religiosity_pct, rng.uniform(0, 100));
  maybe(Field::gdp_pc_ppp_2021, std::exp(rng.uniform(std::log(600.0), std::log(120000.0))));
  maybe(Field::top1_income_share_pct, rng.uniform(5, 30));
  maybe(Field::top1_wealth_share_pct, rng.uniform(15, 50));
  maybe(Field::hdi_2021, rng.uniform(0.35, 0.97));
  maybe(Field::avg_temp_2010_2019, rng.uniform(-5, 30));
  maybe(Field::internet_penetration_pct, rng.uniform(5, 99));
  maybe(Field::willing_1pct, rng.uniform(0, 100));
  maybe(Field::willing_smaller_pct, rng.uniform(0, 40));
  maybe(Field::perceived_willing_pct, rng.uniform(0, 100));
  r.set(Field::sample_n, 1000);
  return r;
}

/// A world where perceived = 0.8 * willingness - 10 + N(0, noise_sd), with
/// GDP spread log-uniformly over [1k, 80k] so both swap pools are filled.
inline Dataset projection_world(std::size_t n, std::uint64_t seed, double noise_sd = 2.0) {
  Rng rng(seed);
  std::vector<CountryRecord> rows;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = random_record(rng, i);
    double u = (static_cast<double>(i) + rng.uniform01()) / static_cast<double>(n);
    r.set(Field::gdp_pc_ppp_2021, std::exp(std::log(1000.0) + u * std::log(80.0)));
    double w = rng.uniform(25, 90);
    r.set(Field::willing_1pct, w);
    r.set(Field::perceived_willing_pct, clampd(0.8 * w - 10.0 + noise_sd * rng.normal(), 0, 100));
    rows.push_back(std::move(r));
  }
  return Dataset(std::move(rows), "projection_world");
}

/// In standard units: y = 0.79 w + 0.13 income + e, corr(w, income) =
/// -0.248, Var(e) = 0.41, so Var(y) = 1 and the R^2 of the planted model is
/// 0.59. The noise is calibrated per sample: it is made orthogonal to the
/// constant, w and income, then scaled so the planted R^2 is 0.59 in the
/// drawn data rather than only in expectation.
inline constexpr double kTable1Willingness = 0.79;
inline constexpr double kTable1Income = 0.13;
inline constexpr double kTable1Corr = -0.248;
inline constexpr double kTable1RSquared = 0.59;

inline Dataset table1_world(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const double rho = kTable1Corr;
  const auto rows_n = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(rows_n, 3);
  Eigen::VectorXd e(rows_n);
  for (Eigen::Index i = 0; i < rows_n; ++i) {
    double zw = rng.normal();
    x(i, 0) = 1.0;
    x(i, 1) = zw;
    x(i, 2) = rho * zw + std::sqrt(1 - rho * rho) * rng.normal();
    e(i) = rng.normal();
  }
  e -= x * x.colPivHouseholderQr().solve(e);
  Eigen::VectorXd signal = kTable1Willingness * x.col(1) + kTable1Income * x.col(2);
  const double ss_signal = (signal.array() - signal.mean()).square().sum();
  e *= std::sqrt(ss_signal * (1 - kTable1RSquared) / kTable1RSquared / e.squaredNorm());
  Eigen::VectorXd y = signal + e;

  std::vector<CountryRecord> rows;
  for (Eigen::Index i = 0; i < rows_n; ++i) {
    auto k = static_cast<std::size_t>(i);
    CountryRecord r;
    r.country_name = synth_name(k);
    r.continent = synth_continent(k);
    r.set(Field::willing_1pct, 60 + 8 * x(i, 1));
    r.set(Field::top1_income_share_pct, 15 + 3 * x(i, 2));
    r.set(Field::perceived_willing_pct, 40 + 8 * y(i));
    r.set(Field::mean_age, 32 + 6 * rng.normal());
    r.set(Field::tertiary_education_pct, clampd(25 + 8 * rng.normal(), 0, 100));
    r.set(Field::religiosity_pct, clampd(60 + 12 * rng.normal(), 0, 100));
    r.set(Field::hdi_2021, clampd(0.72 + 0.08 * rng.normal(), 0.3, 0.99));
    r.set(Field::gdp_pc_ppp_2021, std::exp(9.5 + 0.8 * rng.normal()));
    r.set(Field::top1_wealth_share_pct, clampd(30 + 5 * rng.normal(), 0, 100));
    r.set(Field::avg_temp_2010_2019, 18 + 7 * rng.normal());
    r.set(Field::willing_smaller_pct, clampd(12 + 3 * rng.normal(), 0, 100));
    r.set(Field::internet_penetration_pct, clampd(70 + 15 * rng.normal(), 0, 100));
    r.set(Field::sample_n, 1000);
    rows.push_back(std::move(r));
  }
  return Dataset(std::move(rows), "table1_world");
}

/// A fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pgh_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace pgh::test
