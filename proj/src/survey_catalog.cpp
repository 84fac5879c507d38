#include "pgh/survey_catalog.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include "pgh/csv.hpp"
#include "pgh/error.hpp"

namespace pgh {

extern const char* const kBuiltinSurveyItemsCsv;

namespace {

const std::vector<std::string> kColumns = {
    "item_id",         "scope",         "topic_label", "population_desc",
    "first_order_question", "first_order_options", "others_clause",
    "own_statement",   "belief_noun",   "scale_lo",    "scale_hi",
    "reconstructed",   "note"};

double parse_number(const std::string& text, const std::string& what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(Errc::schema_mismatch, fmt::format("{}: '{}' is not a number", what, text));
  }
  return v;
}

}  // namespace

std::string substitute_country(std::string_view text, std::string_view country) {
  static constexpr std::string_view kToken = "{country}";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = text.find(kToken, pos);
    out.append(text.substr(pos, hit - pos));
    if (hit == std::string_view::npos) break;
    out.append(country);
    pos = hit + kToken.size();
  }
  return out;
}

std::string SurveyItem::population_for(std::string_view country) const {
  return substitute_country(population_desc, country);
}

std::string SurveyItem::second_order_question(std::string_view country) const {
  return fmt::format("how many respondents in {} they think {}.", country,
                     substitute_country(others_clause, country));
}

SurveyCatalog SurveyCatalog::parse(std::string_view csv_text) {
  auto rows = csv::parse(csv_text);
  if (rows.empty() || rows[0] != kColumns) {
    throw Error(Errc::schema_mismatch, "survey catalog header does not match the item schema");
  }
  SurveyCatalog cat;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != kColumns.size()) {
      throw Error(Errc::schema_mismatch, fmt::format("catalog row {} has {} cells", i + 1, row.size()));
    }
    SurveyItem item;
    item.item_id = row[0];
    if (row[1] == "global") {
      item.scope = ItemScope::global;
    } else if (row[1] == "us_policy") {
      item.scope = ItemScope::us_policy;
    } else {
      throw Error(Errc::schema_mismatch, fmt::format("catalog row {}: unknown scope '{}'", i + 1, row[1]));
    }
    item.topic_label = row[2];
    item.population_desc = row[3];
    item.first_order_question = row[4];
    item.first_order_options = row[5];
    item.others_clause = row[6];
    item.own_statement = row[7];
    item.belief_noun = row[8];
    item.scale_lo = parse_number(row[9], item.item_id + " scale_lo");
    item.scale_hi = parse_number(row[10], item.item_id + " scale_hi");
    item.reconstructed = row[11] == "1";
    item.note = row[12];

    if (item.item_id.empty()) {
      throw Error(Errc::schema_mismatch, fmt::format("catalog row {}: empty item_id", i + 1));
    }
    if (!ids.insert(item.item_id).second) {
      throw Error(Errc::schema_mismatch, "duplicate item_id " + item.item_id);
    }
    if (item.first_order_question.empty() || item.others_clause.empty()) {
      throw Error(Errc::schema_mismatch, item.item_id + ": question text is empty");
    }
    if (item.scale_lo != 0 || item.scale_hi != 100) {
      throw Error(Errc::schema_mismatch, item.item_id + ": scale must be [0, 100]");
    }
    cat.items_.push_back(std::move(item));
  }
  return cat;
}

SurveyCatalog SurveyCatalog::load(const std::string& path) {
  return parse(csv::read_file(path));
}

const SurveyCatalog& SurveyCatalog::builtin() {
  static const SurveyCatalog catalog = parse(kBuiltinSurveyItemsCsv);
  return catalog;
}

const SurveyItem& SurveyCatalog::get_item(std::string_view item_id) const {
  for (const auto& item : items_) {
    if (item.item_id == item_id) return item;
  }
  throw Error(Errc::unknown_item, std::string(item_id));
}

bool SurveyCatalog::contains(std::string_view item_id) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const SurveyItem& i) { return i.item_id == item_id; });
}

std::vector<SurveyItem> SurveyCatalog::list_items(ItemFilter filter) const {
  std::vector<SurveyItem> out;
  for (const auto& item : items_) {
    bool keep = filter == ItemFilter::all ||
                (filter == ItemFilter::global && item.scope == ItemScope::global) ||
                (filter == ItemFilter::us_policy && item.scope == ItemScope::us_policy);
    if (keep) out.push_back(item);
  }
  return out;
}

}  // namespace pgh
