#pragma once

#include <bitset>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pgh/country_data.hpp"
#include "pgh/survey_catalog.hpp"

namespace pgh {

enum class ConditionKind { stage, ablation, counterfactual };

enum class Ablation {
  no_econ,
  no_religion,
  no_demo,
  no_climate,
  no_own_willingness,
  name_only,
};

enum class Counterfactual {
  cf_willingness_flip,
  cf_gdp_flip,
  cf_name_mismatch,
};

enum class PromptFormat { natural, structured };

inline constexpr Ablation kAllAblations[] = {
    Ablation::no_econ,    Ablation::no_religion,        Ablation::no_demo,
    Ablation::no_climate, Ablation::no_own_willingness, Ablation::name_only};
inline constexpr Counterfactual kAllCounterfactuals[] = {
    Counterfactual::cf_willingness_flip, Counterfactual::cf_gdp_flip,
    Counterfactual::cf_name_mismatch};

std::string_view ablation_name(Ablation a) noexcept;
std::string_view counterfactual_name(Counterfactual c) noexcept;
std::string_view format_name(PromptFormat f) noexcept;
std::optional<Ablation> parse_ablation(std::string_view s) noexcept;
std::optional<Counterfactual> parse_counterfactual(std::string_view s) noexcept;

struct StageId {
  int value = 8;
  auto operator<=>(const StageId&) const = default;
};

/// Which information is shown and how. Exactly one of stage / ablation /
/// counterfactual is set by construction.
class PromptCondition {
 public:
  using Id = std::variant<StageId, Ablation, Counterfactual>;

  static PromptCondition stage(int stage_id, PromptFormat format = PromptFormat::natural);
  static PromptCondition ablation(Ablation a, PromptFormat format = PromptFormat::natural);
  static PromptCondition counterfactual(Counterfactual c,
                                        PromptFormat format = PromptFormat::natural);

  /// Accepts the forms produced by key(): "stage-3", "no_econ",
  /// "cf_gdp_flip", each optionally suffixed with "/natural" or
  /// "/structured".
  static PromptCondition parse(std::string_view key);

  [[nodiscard]] ConditionKind kind() const noexcept;
  [[nodiscard]] const Id& id() const noexcept { return id_; }
  [[nodiscard]] PromptFormat format() const noexcept { return format_; }
  [[nodiscard]] std::optional<int> stage_id() const noexcept;
  [[nodiscard]] std::optional<Ablation> ablation_id() const noexcept;
  [[nodiscard]] std::optional<Counterfactual> cf_id() const noexcept;
  [[nodiscard]] PromptCondition with_format(PromptFormat f) const;

  /// Stable textual key, e.g. "stage-8/natural".
  [[nodiscard]] std::string key() const;

  friend bool operator==(const PromptCondition&, const PromptCondition&) = default;
  friend std::strong_ordering operator<=>(const PromptCondition& a,
                                          const PromptCondition& b);

 private:
  PromptCondition(Id id, PromptFormat format) : id_(id), format_(format) {}
  Id id_;
  PromptFormat format_;
};

enum class BlockKind { demographics, economics, temperature, own_willingness };

inline constexpr BlockKind kBlockOrder[] = {BlockKind::demographics, BlockKind::economics,
                                            BlockKind::temperature,
                                            BlockKind::own_willingness};

using FieldSet = std::bitset<kFieldCount>;

FieldSet field_set(std::initializer_list<Field> fields);
bool contains(const FieldSet& set, Field f);

/// Fields carried by an information block.
FieldSet block_fields(BlockKind b);

/// Blocks shown by a stage (1..8). Stages 2-5 each show one block; 6 is
/// demographics + economics, 7 adds temperature, 8 shows everything.
std::vector<BlockKind> stage_blocks(int stage_id);

/// Fields an ablation hides from the full (stage-8) prompt.
FieldSet ablation_footprint(Ablation a);

/// Fields that may appear in the prompt under this condition.
FieldSet visible_fields(const PromptCondition& condition);

inline constexpr std::string_view kNotAvailable = "data not available";

/// Text for one value as it appears in a prompt: one decimal for ages,
/// percents and temperatures, "$" with thousands separators for GDP,
/// three decimals for HDI. Missing values read "data not available".
/// Throws unknown_field for fields that never appear in prompts.
std::string format_value(Field field, std::optional<double> value);

/// One (field, formatted value) pair shown in a prompt.
struct Fact {
  Field field;
  std::string value_text;
  friend bool operator==(const Fact&, const Fact&) = default;
  friend auto operator<=>(const Fact&, const Fact&) = default;
};

struct InfoBlock {
  BlockKind kind;
  std::vector<Fact> facts;
  std::string text;
};

/// Blocks implied by the condition in fixed order; blocks whose fields are
/// all hidden are dropped.
std::vector<InfoBlock> render_info_blocks(
    const CountryRecord& record, const PromptCondition& condition,
    const SurveyItem& item = SurveyCatalog::builtin().get_item(kGlobalItemId));

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;
  PromptCondition condition = PromptCondition::stage(8);
  /// Name shown in the prompt (differs from the data owner under
  /// cf_name_mismatch).
  std::string country_name;
  std::string item_id;
  /// SHA-256 over (system_text, user_text, item_id).
  std::string content_hash;
  /// The facts shown, with their numeric values. Offline agents read these
  /// instead of parsing text.
  std::vector<Fact> facts;
  std::vector<std::pair<Field, std::optional<double>>> shown_values;
};

std::string render_system_prompt();

/// Assembles info blocks, survey context, second-order elicitation, the
/// instruction naming the shown categories, and the answer-format line.
/// The record is rendered as given; pass the effective record for
/// counterfactual conditions.
RenderedPrompt render_user_prompt(const CountryRecord& record, const SurveyItem& item,
                                  const PromptCondition& condition);

std::string prompt_content_hash(std::string_view system_text, std::string_view user_text,
                                std::string_view item_id);

}  // namespace pgh
