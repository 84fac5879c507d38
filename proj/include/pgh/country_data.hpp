#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pgh {

enum class Continent { africa, asia, europe, north_america, south_america, oceania };

std::string_view continent_name(Continent c) noexcept;
std::optional<Continent> parse_continent(std::string_view name) noexcept;

/// Static country-name -> continent table shipped with the library.
/// Central America and the Caribbean count as North America.
std::optional<Continent> lookup_continent(std::string_view country_name) noexcept;

/// Numeric columns of a country table, in canonical column order.
enum class Field : std::size_t {
  mean_age,
  tertiary_education_pct,
  religiosity_pct,
  gdp_pc_ppp_2021,
  top1_income_share_pct,
  top1_wealth_share_pct,
  hdi_2021,
  avg_temp_2010_2019,
  internet_penetration_pct,
  willing_1pct,
  willing_smaller_pct,
  perceived_willing_pct,
  sample_n,
};

inline constexpr std::size_t kFieldCount = 13;

inline constexpr std::array<Field, kFieldCount> kAllFields = {
    Field::mean_age,
    Field::tertiary_education_pct,
    Field::religiosity_pct,
    Field::gdp_pc_ppp_2021,
    Field::top1_income_share_pct,
    Field::top1_wealth_share_pct,
    Field::hdi_2021,
    Field::avg_temp_2010_2019,
    Field::internet_penetration_pct,
    Field::willing_1pct,
    Field::willing_smaller_pct,
    Field::perceived_willing_pct,
    Field::sample_n,
};

std::string_view field_name(Field f) noexcept;
std::optional<Field> parse_field(std::string_view name) noexcept;

/// Covariates a record must carry to count as complete: every input that
/// can appear in a prompt, internet penetration, and the observed outcome.
std::vector<Field> default_completeness_fields();

/// One country's row. Every numeric cell is explicitly present or missing;
/// a missing value is never stored as zero.
struct CountryRecord {
  std::string country_name;
  std::optional<std::string> iso3;
  Continent continent = Continent::europe;
  std::array<std::optional<double>, kFieldCount> values{};

  [[nodiscard]] std::optional<double> get(Field f) const {
    return values[static_cast<std::size_t>(f)];
  }
  void set(Field f, std::optional<double> v) {
    values[static_cast<std::size_t>(f)] = v;
  }
  [[nodiscard]] bool has(Field f) const { return get(f).has_value(); }

  friend bool operator==(const CountryRecord&, const CountryRecord&) = default;
};

/// Throws value_out_of_range if any present value violates its bounds.
void validate_record(const CountryRecord& r);

/// Ordered, duplicate-free collection of records. Immutable once built.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<CountryRecord> records, std::string source_label,
          std::chrono::year_month_day as_of = {});

  [[nodiscard]] std::span<const CountryRecord> records() const { return records_; }
  [[nodiscard]] std::size_t size() const { return records_.size(); }
  [[nodiscard]] bool empty() const { return records_.empty(); }
  [[nodiscard]] const CountryRecord& operator[](std::size_t i) const { return records_[i]; }
  [[nodiscard]] const CountryRecord* find(std::string_view country_name) const;
  [[nodiscard]] const std::string& source_label() const { return source_label_; }
  [[nodiscard]] std::chrono::year_month_day as_of() const { return as_of_; }

  /// SHA-256 of the canonical serialization.
  [[nodiscard]] std::string content_hash() const;

 private:
  std::vector<CountryRecord> records_;
  std::string source_label_;
  std::chrono::year_month_day as_of_{};
};

inline constexpr std::string_view kCountrySchemaVersion = "1";

/// Column names of schema version 1, in canonical order.
std::vector<std::string> country_table_columns();

Dataset parse_dataset(std::string_view csv_text, std::string source_label,
                      std::string_view schema_version = kCountrySchemaVersion);
Dataset load_dataset(const std::string& path,
                     std::string_view schema_version = kCountrySchemaVersion);

/// Canonical CSV text; parse_dataset(serialize_dataset(d)) == d.
std::string serialize_dataset(const Dataset& ds);

/// perceived_willing_pct - willing_1pct. Negative means others'
/// willingness is underestimated.
double compute_perception_gap(const CountryRecord& r);

struct GapSummary {
  double mean_gap = 0;
  double mean_abs_gap = 0;
  double ci95_lo = 0;
  double ci95_hi = 0;
  std::size_t n = 0;
};

/// Unweighted mean gap over records carrying both willingness fields, with
/// a normal-approximation 95% interval (mean +/- 1.96 * SE, sample sd).
GapSummary dataset_gap_summary(const Dataset& ds);

/// Records with every listed field present, in original order.
Dataset complete_subset(const Dataset& ds, std::span<const Field> fields);
Dataset complete_subset(const Dataset& ds);

}  // namespace pgh
