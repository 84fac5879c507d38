#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pgh {

enum class ItemScope { global, us_policy };
enum class ItemFilter { global, us_policy, all };

/// A first-order / second-order question pair. Text fields may contain the
/// placeholder {country}, substituted at render time.
struct SurveyItem {
  std::string item_id;
  ItemScope scope = ItemScope::global;
  std::string topic_label;
  std::string population_desc;
  std::string first_order_question;
  std::string first_order_options;
  /// Verb phrase describing the attitude held by others, e.g. "are willing
  /// to contribute ...". Used by both the second-order question and the
  /// closing instruction.
  std::string others_clause;
  /// Verb phrase for the observed first-order share, e.g. "said they ...".
  std::string own_statement;
  /// Noun used in the closing note ("beliefs about others' <noun>").
  std::string belief_noun;
  double scale_lo = 0;
  double scale_hi = 100;
  /// True when question wording is reconstructed from a topic label
  /// rather than the original questionnaire.
  bool reconstructed = false;
  std::string note;

  [[nodiscard]] std::string population_for(std::string_view country) const;
  [[nodiscard]] std::string second_order_question(std::string_view country) const;

  friend bool operator==(const SurveyItem&, const SurveyItem&) = default;
};

std::string substitute_country(std::string_view text, std::string_view country);

/// Immutable item registry. Thread-safe by immutability.
class SurveyCatalog {
 public:
  /// Parses the catalog data file format (see data/survey_items.csv).
  static SurveyCatalog parse(std::string_view csv_text);
  static SurveyCatalog load(const std::string& path);
  /// The catalog shipped in data/survey_items.csv, compiled in.
  static const SurveyCatalog& builtin();

  [[nodiscard]] const SurveyItem& get_item(std::string_view item_id) const;
  [[nodiscard]] bool contains(std::string_view item_id) const;
  [[nodiscard]] std::vector<SurveyItem> list_items(ItemFilter filter) const;
  [[nodiscard]] std::size_t size() const { return items_.size(); }

 private:
  std::vector<SurveyItem> items_;
};

inline constexpr std::string_view kGlobalItemId = "GCCS-1PCT";

}  // namespace pgh
