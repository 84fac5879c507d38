#include "pgh/country_data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "pgh/csv.hpp"
#include "pgh/error.hpp"
#include "pgh/hash.hpp"

namespace pgh {

namespace {

constexpr std::array<std::string_view, 6> kContinentNames = {
    "Africa", "Asia", "Europe", "North America", "South America", "Oceania"};

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "mean_age",
    "tertiary_education_pct",
    "religiosity_pct",
    "gdp_pc_ppp_2021",
    "top1_income_share_pct",
    "top1_wealth_share_pct",
    "hdi_2021",
    "avg_temp_2010_2019",
    "internet_penetration_pct",
    "willing_1pct",
    "willing_smaller_pct",
    "perceived_willing_pct",
    "sample_n",
};

bool is_percent(Field f) {
  switch (f) {
    case Field::tertiary_education_pct:
    case Field::religiosity_pct:
    case Field::top1_income_share_pct:
    case Field::top1_wealth_share_pct:
    case Field::internet_penetration_pct:
    case Field::willing_1pct:
    case Field::willing_smaller_pct:
    case Field::perceived_willing_pct:
      return true;
    default:
      return false;
  }
}

// Empty string when the value is acceptable.
std::string bound_violation(Field f, double v) {
  if (!std::isfinite(v)) return "not a finite number";
  if (is_percent(f) && (v < 0.0 || v > 100.0)) return "must lie in [0, 100]";
  switch (f) {
    case Field::hdi_2021:
      if (v < 0.0 || v > 1.0) return "must lie in [0, 1]";
      break;
    case Field::gdp_pc_ppp_2021:
      if (v <= 0.0) return "must be > 0";
      break;
    case Field::mean_age:
      if (v <= 0.0 || v > 150.0) return "must lie in (0, 150]";
      break;
    case Field::sample_n:
      if (v < 1.0 || v != std::floor(v)) return "must be an integer >= 1";
      break;
    default:
      break;
  }
  return {};
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

std::string_view continent_name(Continent c) noexcept {
  return kContinentNames[static_cast<std::size_t>(c)];
}

std::optional<Continent> parse_continent(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kContinentNames.size(); ++i) {
    if (kContinentNames[i] == name) return static_cast<Continent>(i);
  }
  return std::nullopt;
}

std::string_view field_name(Field f) noexcept {
  return kFieldNames[static_cast<std::size_t>(f)];
}

std::optional<Field> parse_field(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kFieldNames.size(); ++i) {
    if (kFieldNames[i] == name) return static_cast<Field>(i);
  }
  return std::nullopt;
}

std::vector<Field> default_completeness_fields() {
  return {Field::mean_age,
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
          Field::perceived_willing_pct};
}

void validate_record(const CountryRecord& r) {
  if (r.country_name.empty()) {
    throw Error(Errc::value_out_of_range, "country_name is empty");
  }
  if (r.iso3) {
    const auto& code = *r.iso3;
    bool ok = code.size() == 3 &&
              std::all_of(code.begin(), code.end(),
                          [](char c) { return c >= 'A' && c <= 'Z'; });
    if (!ok) {
      throw Error(Errc::value_out_of_range,
                  fmt::format("{}: iso3 '{}' is not three upper-case letters",
                              r.country_name, code));
    }
  }
  for (Field f : kAllFields) {
    if (auto v = r.get(f)) {
      if (auto why = bound_violation(f, *v); !why.empty()) {
        throw Error(Errc::value_out_of_range,
                    fmt::format("{}: {}={} {}", r.country_name, field_name(f),
                                *v, why));
      }
    }
  }
}

Dataset::Dataset(std::vector<CountryRecord> records, std::string source_label,
                 std::chrono::year_month_day as_of)
    : records_(std::move(records)),
      source_label_(std::move(source_label)),
      as_of_(as_of) {
  std::set<std::string_view> seen;
  for (const auto& r : records_) {
    validate_record(r);
    if (!seen.insert(r.country_name).second) {
      throw Error(Errc::duplicate_country, r.country_name);
    }
  }
}

const CountryRecord* Dataset::find(std::string_view country_name) const {
  for (const auto& r : records_) {
    if (r.country_name == country_name) return &r;
  }
  return nullptr;
}

std::string Dataset::content_hash() const {
  return sha256_hex(serialize_dataset(*this));
}

std::vector<std::string> country_table_columns() {
  std::vector<std::string> cols = {"country_name", "iso3", "continent"};
  for (auto name : kFieldNames) cols.emplace_back(name);
  return cols;
}

Dataset parse_dataset(std::string_view csv_text, std::string source_label,
                      std::string_view schema_version) {
  if (schema_version != kCountrySchemaVersion) {
    throw Error(Errc::schema_mismatch,
                fmt::format("unsupported schema version '{}'", schema_version));
  }
  auto rows = csv::parse(csv_text);
  if (rows.empty()) throw Error(Errc::schema_mismatch, "missing header row");

  const auto expected = country_table_columns();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    auto name = trim(rows[0][i]);
    if (std::find(expected.begin(), expected.end(), name) == expected.end()) {
      throw Error(Errc::schema_mismatch, fmt::format("unexpected column '{}'", name));
    }
    if (!index.emplace(name, i).second) {
      throw Error(Errc::schema_mismatch, fmt::format("duplicate column '{}'", name));
    }
  }
  for (const auto& name : expected) {
    if (!index.count(name)) {
      throw Error(Errc::schema_mismatch, fmt::format("missing column '{}'", name));
    }
  }

  std::vector<CountryRecord> records;
  for (std::size_t row_no = 1; row_no < rows.size(); ++row_no) {
    const auto& row = rows[row_no];
    // Row numbers in messages count the header as line 1.
    const std::size_t line = row_no + 1;
    if (row.size() != rows[0].size()) {
      throw Error(Errc::schema_mismatch,
                  fmt::format("row {} has {} cells, header has {}", line,
                              row.size(), rows[0].size()));
    }
    auto cell = [&](const std::string& col) { return trim(row[index.at(col)]); };

    CountryRecord r;
    r.country_name = cell("country_name");
    if (r.country_name.empty()) {
      throw Error(Errc::value_out_of_range,
                  fmt::format("row {}, column country_name: empty", line));
    }
    if (auto iso = cell("iso3"); !iso.empty()) r.iso3 = iso;

    if (auto cont = cell("continent"); !cont.empty()) {
      auto parsed = parse_continent(cont);
      if (!parsed) {
        throw Error(Errc::value_out_of_range,
                    fmt::format("row {}, column continent: '{}' is not a continent",
                                line, cont));
      }
      r.continent = *parsed;
    } else if (auto looked_up = lookup_continent(r.country_name)) {
      r.continent = *looked_up;
    } else {
      throw Error(Errc::unknown_country,
                  fmt::format("row {}: no continent given and '{}' is not in "
                              "the continent table",
                              line, r.country_name));
    }

    for (Field f : kAllFields) {
      auto text = cell(std::string(field_name(f)));
      if (text.empty()) continue;
      double v = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(Errc::value_out_of_range,
                    fmt::format("row {}, column {}: '{}' is not a number", line,
                                field_name(f), text));
      }
      if (auto why = bound_violation(f, v); !why.empty()) {
        throw Error(Errc::value_out_of_range,
                    fmt::format("row {}, column {}: {} {}", line, field_name(f),
                                text, why));
      }
      r.set(f, v);
    }
    try {
      validate_record(r);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("row {}: {}", line, e.what()));
    }
    records.push_back(std::move(r));
  }

  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen.insert(records[i].country_name).second) {
      throw Error(Errc::duplicate_country,
                  fmt::format("row {}: '{}' appears twice", i + 2,
                              records[i].country_name));
    }
  }
  return Dataset(std::move(records), std::move(source_label));
}

Dataset load_dataset(const std::string& path, std::string_view schema_version) {
  auto text = csv::read_file(path);
  auto ds = parse_dataset(text, std::filesystem::path(path).filename().string(),
                          schema_version);
  auto mtime = std::filesystem::last_write_time(path);
  auto sys = std::chrono::file_clock::to_sys(mtime);
  auto day = std::chrono::floor<std::chrono::days>(sys);
  return Dataset(std::vector<CountryRecord>(ds.records().begin(), ds.records().end()),
                 ds.source_label(), std::chrono::year_month_day(day));
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out = csv::format_row(country_table_columns());
  for (const auto& r : ds.records()) {
    csv::Row row = {r.country_name, r.iso3.value_or(""),
                    std::string(continent_name(r.continent))};
    for (Field f : kAllFields) {
      auto v = r.get(f);
      row.push_back(v ? format_number(*v) : std::string());
    }
    out += csv::format_row(row);
  }
  return out;
}

double compute_perception_gap(const CountryRecord& r) {
  auto actual = r.get(Field::willing_1pct);
  auto perceived = r.get(Field::perceived_willing_pct);
  if (!actual) throw Error(Errc::missing_field, r.country_name + ": willing_1pct");
  if (!perceived) {
    throw Error(Errc::missing_field, r.country_name + ": perceived_willing_pct");
  }
  return *perceived - *actual;
}

GapSummary dataset_gap_summary(const Dataset& ds) {
  std::vector<double> gaps;
  for (const auto& r : ds.records()) {
    if (r.has(Field::willing_1pct) && r.has(Field::perceived_willing_pct)) {
      gaps.push_back(compute_perception_gap(r));
    }
  }
  if (gaps.size() < 2) {
    throw Error(Errc::insufficient_data,
                fmt::format("{} usable records, need at least 2", gaps.size()));
  }
  const double n = static_cast<double>(gaps.size());
  double sum = 0, abs_sum = 0;
  for (double g : gaps) {
    sum += g;
    abs_sum += std::abs(g);
  }
  const double mean = sum / n;
  double ss = 0;
  for (double g : gaps) ss += (g - mean) * (g - mean);
  const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);

  GapSummary s;
  s.mean_gap = mean;
  s.mean_abs_gap = abs_sum / n;
  s.ci95_lo = mean - 1.96 * se;
  s.ci95_hi = mean + 1.96 * se;
  s.n = gaps.size();
  return s;
}

Dataset complete_subset(const Dataset& ds, std::span<const Field> fields) {
  std::vector<CountryRecord> kept;
  for (const auto& r : ds.records()) {
    bool complete = std::all_of(fields.begin(), fields.end(),
                                [&](Field f) { return r.has(f); });
    if (complete) kept.push_back(r);
  }
  return Dataset(std::move(kept), ds.source_label(), ds.as_of());
}

Dataset complete_subset(const Dataset& ds) {
  auto fields = default_completeness_fields();
  return complete_subset(ds, fields);
}

}  // namespace pgh
