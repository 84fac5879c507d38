#include "pgh/prompt_engine.hpp"

#include <fmt/format.h>

#include <cmath>

#include "pgh/error.hpp"
#include "pgh/hash.hpp"

namespace pgh {

namespace {

constexpr std::string_view kSystemPrompt =
    "You are a prediction assistant making estimates based ONLY on the information "
    "provided in this specific prompt.\n"
    "\n"
    "CRITICAL INSTRUCTIONS:\n"
    "\n"
    "1. Do NOT cite, reference, or mention ANY research papers, academic studies, "
    "surveys, or authors (including but not limited to André et al., Sparkman et "
    "al., Leviston et al., Lees et al., or any other researchers).\n"
    "2. Do NOT use any memorized data, statistics, or percentages from your training "
    "about climate change opinions, pluralistic ignorance, or survey results.\n"
    "3. Treat this as a completely NOVEL scenario—ignore any similar studies you "
    "may have seen during training.\n"
    "4. Do NOT reference phrases such as ‘research shows,’ ‘studies "
    "indicate,’ ‘surveys have found,’ or similar language.\n"
    "5. Base your estimate ONLY on:\n"
    " - General reasoning about human psychology and behavior\n"
    " - The specific information provided in this prompt\n"
    " - First principles about how people form beliefs about others\n"
    "\n"
    "Your task is to predict what percentage people THINK others believe "
    "(second-order belief), not what people actually believe (first-order belief). "
    "This is a prediction task requiring general reasoning, not recall of specific "
    "research findings.\n"
    "\n"
    "Response format: Provide ONLY a JSON object containing a single number between 0 "
    "and 100 with one decimal place: {\"prediction\": XX.X}\n"
    "\n"
    "Do not include any explanation, reasoning, or text—only the JSON.";

constexpr std::string_view kAblationNames[] = {
    "no_econ", "no_religion", "no_demo", "no_climate", "no_own_willingness", "name_only"};
constexpr std::string_view kCounterfactualNames[] = {
    "cf_willingness_flip", "cf_gdp_flip", "cf_name_mismatch"};

FieldSet all_prompt_fields() {
  FieldSet s;
  for (BlockKind b : kBlockOrder) s |= block_fields(b);
  return s;
}

// "a", "a and b", "a, b, and c".
std::string join_list(const std::vector<std::string>& parts) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts[0];
  if (parts.size() == 2) return parts[0] + " and " + parts[1];
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    if (i + 1 == parts.size()) out += "and ";
    out += parts[i];
  }
  return out;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string with_commas(long long v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  int count = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (count && count % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++count;
  }
  if (v < 0) out.push_back('-');
  return {out.rbegin(), out.rend()};
}

// Round half away from zero at the given number of decimals. Values are
// nudged by a relative epsilon first so that decimal literals such as 7.25
// or 0.8425 (stored slightly below the tie) still round up.
std::string fixed(double v, int decimals) {
  double scale = std::pow(10.0, decimals);
  double scaled = v * scale;
  double nudged = scaled + std::copysign(std::abs(scaled) * 1e-12 + 1e-9, scaled);
  double rounded = std::round(nudged);
  if (rounded == 0.0) rounded = 0.0;  // no "-0.0"
  return fmt::format("{:.{}f}", rounded / scale, decimals);
}

std::string unit_suffix(Field f) {
  switch (f) {
    case Field::mean_age: return " years";
    case Field::avg_temp_2010_2019: return "°C";
    case Field::tertiary_education_pct:
    case Field::religiosity_pct:
    case Field::top1_income_share_pct:
    case Field::top1_wealth_share_pct:
    case Field::internet_penetration_pct:
    case Field::willing_1pct:
    case Field::willing_smaller_pct:
      return "%";
    default:
      return "";
  }
}

struct BlockBuilder {
  const CountryRecord& record;
  const FieldSet& visible;
  std::vector<Fact> facts;

  bool shows(Field f) const { return contains(visible, f); }
  bool present(Field f) const { return record.has(f); }

  std::string value(Field f) {
    std::string text = format_value(f, record.get(f));
    facts.push_back({f, text});
    return text;
  }
  std::string with_unit(Field f) { return value(f) + unit_suffix(f); }
};

struct StructuredLabel {
  Field field;
  std::string_view label;
};

std::string structured_label(Field f, const SurveyItem& item) {
  switch (f) {
    case Field::mean_age: return "Average age of respondents";
    case Field::tertiary_education_pct: return "Share of people who have completed a tertiary education";
    case Field::religiosity_pct: return "Share who say religion is important in daily life";
    case Field::gdp_pc_ppp_2021: return "GDP per capita (PPP, 2021)";
    case Field::top1_income_share_pct: return "Share of total income held by the top 1%";
    case Field::top1_wealth_share_pct: return "Share of total wealth held by the top 1%";
    case Field::hdi_2021: return "Human Development Index (2021)";
    case Field::avg_temp_2010_2019: return "Average temperature from 2010 to 2019";
    case Field::willing_1pct: return "Share of people in this survey who " + item.own_statement;
    case Field::willing_smaller_pct: return "Additional share who would contribute a smaller amount";
    default: throw Error(Errc::unknown_field, std::string(field_name(f)));
  }
}

std::optional<InfoBlock> natural_block(BlockKind kind, const CountryRecord& r,
                                       const FieldSet& visible, const SurveyItem& item) {
  BlockBuilder b{r, visible, {}};
  std::string text;
  switch (kind) {
    case BlockKind::demographics: {
      std::vector<std::string> clauses;
      if (b.shows(Field::mean_age)) {
        clauses.push_back(b.present(Field::mean_age)
                              ? "the average age of respondents is " + b.with_unit(Field::mean_age)
                              : "the average age of respondents is " + b.value(Field::mean_age));
      }
      if (b.shows(Field::tertiary_education_pct)) {
        clauses.push_back(
            b.present(Field::tertiary_education_pct)
                ? b.with_unit(Field::tertiary_education_pct) +
                      " of the people have completed a tertiary education"
                : "the share of people who have completed a tertiary education is " +
                      b.value(Field::tertiary_education_pct));
      }
      if (b.shows(Field::religiosity_pct)) {
        clauses.push_back(b.present(Field::religiosity_pct)
                              ? b.with_unit(Field::religiosity_pct) +
                                    " say religion is important in daily life"
                              : "the share who say religion is important in daily life is " +
                                    b.value(Field::religiosity_pct));
      }
      if (clauses.empty()) return std::nullopt;
      text = fmt::format("In {}, {}.", r.country_name, join_list(clauses));
      break;
    }
    case BlockKind::economics: {
      std::vector<std::string> clauses;
      if (b.shows(Field::gdp_pc_ppp_2021)) {
        clauses.push_back("GDP per capita (PPP, 2021) is " + b.value(Field::gdp_pc_ppp_2021));
      }
      bool income_clause = false;
      if (b.shows(Field::top1_income_share_pct)) {
        if (b.present(Field::top1_income_share_pct)) {
          clauses.push_back("the top 1% holds " + b.with_unit(Field::top1_income_share_pct) +
                            " of total income");
          income_clause = true;
        } else {
          clauses.push_back("the top 1% income share is " +
                            b.value(Field::top1_income_share_pct));
        }
      }
      if (b.shows(Field::top1_wealth_share_pct)) {
        if (b.present(Field::top1_wealth_share_pct)) {
          clauses.push_back((income_clause ? "" : "the top 1% holds ") +
                            b.with_unit(Field::top1_wealth_share_pct) + " of total wealth");
        } else {
          clauses.push_back("the top 1% wealth share is " +
                            b.value(Field::top1_wealth_share_pct));
        }
      }
      std::vector<std::string> sentences;
      if (!clauses.empty()) sentences.push_back(capitalize(join_list(clauses)) + ".");
      if (b.shows(Field::hdi_2021)) {
        sentences.push_back("The Human Development Index (2021) is " +
                            b.value(Field::hdi_2021) + ".");
      }
      if (sentences.empty()) return std::nullopt;
      text = sentences.size() == 1 ? sentences[0] : sentences[0] + " " + sentences[1];
      break;
    }
    case BlockKind::temperature: {
      if (!b.shows(Field::avg_temp_2010_2019)) return std::nullopt;
      text = "The average temperature from 2010 to 2019 is " +
             (b.present(Field::avg_temp_2010_2019) ? b.with_unit(Field::avg_temp_2010_2019)
                                                    : b.value(Field::avg_temp_2010_2019)) +
             ".";
      break;
    }
    case BlockKind::own_willingness: {
      if (!b.shows(Field::willing_1pct) && !b.shows(Field::willing_smaller_pct)) {
        return std::nullopt;
      }
      std::string main;
      if (b.shows(Field::willing_1pct)) {
        main = b.present(Field::willing_1pct)
                   ? fmt::format("In this survey, {} of people {}",
                                 b.with_unit(Field::willing_1pct), item.own_statement)
                   : fmt::format("In this survey, the share of people who {} is {}",
                                 item.own_statement, b.value(Field::willing_1pct));
      }
      // The smaller-amount clause exists only when its value does.
      if (b.shows(Field::willing_smaller_pct) && b.present(Field::willing_smaller_pct)) {
        std::string smaller = b.with_unit(Field::willing_smaller_pct);
        main = main.empty()
                   ? fmt::format("In this survey, {} of people would contribute a smaller amount",
                                 smaller)
                   : fmt::format("{}, and an additional {} would contribute a smaller amount",
                                 main, smaller);
      }
      if (main.empty()) return std::nullopt;
      text = main + ".";
      break;
    }
  }
  return InfoBlock{kind, std::move(b.facts), std::move(text)};
}

std::optional<InfoBlock> structured_block(BlockKind kind, const CountryRecord& r,
                                          const FieldSet& visible, const SurveyItem& item) {
  BlockBuilder b{r, visible, {}};
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    Field f = static_cast<Field>(i);
    if (!contains(block_fields(kind), f) || !b.shows(f)) continue;
    if (f == Field::willing_smaller_pct && !b.present(f)) continue;
    std::string shown = b.present(f) ? b.with_unit(f) : b.value(f);
    lines.push_back(fmt::format("- {}: {}", structured_label(f, item), shown));
  }
  if (lines.empty()) return std::nullopt;
  std::string text;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) text.push_back('\n');
    text += lines[i];
  }
  return InfoBlock{kind, std::move(b.facts), std::move(text)};
}

std::string category_phrase(BlockKind b, const SurveyItem& item) {
  switch (b) {
    case BlockKind::demographics: return "socio-demographic";
    case BlockKind::economics: return "macro-economic indicators";
    case BlockKind::temperature: return "temperature data";
    case BlockKind::own_willingness: return "the actual " + item.belief_noun + " data";
  }
  return {};
}

}  // namespace

std::string_view ablation_name(Ablation a) noexcept {
  return kAblationNames[static_cast<std::size_t>(a)];
}

std::string_view counterfactual_name(Counterfactual c) noexcept {
  return kCounterfactualNames[static_cast<std::size_t>(c)];
}

std::string_view format_name(PromptFormat f) noexcept {
  return f == PromptFormat::natural ? "natural" : "structured";
}

std::optional<Ablation> parse_ablation(std::string_view s) noexcept {
  for (Ablation a : kAllAblations) {
    if (ablation_name(a) == s) return a;
  }
  return std::nullopt;
}

std::optional<Counterfactual> parse_counterfactual(std::string_view s) noexcept {
  for (Counterfactual c : kAllCounterfactuals) {
    if (counterfactual_name(c) == s) return c;
  }
  return std::nullopt;
}

PromptCondition PromptCondition::stage(int stage_id, PromptFormat format) {
  if (stage_id < 1 || stage_id > 8) {
    throw Error(Errc::config_invalid, fmt::format("stage {} outside 1..8", stage_id));
  }
  return PromptCondition(StageId{stage_id}, format);
}

PromptCondition PromptCondition::ablation(Ablation a, PromptFormat format) {
  return PromptCondition(a, format);
}

PromptCondition PromptCondition::counterfactual(Counterfactual c, PromptFormat format) {
  return PromptCondition(c, format);
}

PromptCondition PromptCondition::parse(std::string_view key) {
  PromptFormat format = PromptFormat::natural;
  if (auto slash = key.find('/'); slash != std::string_view::npos) {
    auto f = key.substr(slash + 1);
    if (f == "natural") {
      format = PromptFormat::natural;
    } else if (f == "structured") {
      format = PromptFormat::structured;
    } else {
      throw Error(Errc::config_invalid, fmt::format("unknown prompt format '{}'", f));
    }
    key = key.substr(0, slash);
  }
  if (key.substr(0, 6) == "stage-" && key.size() == 7 && key[6] >= '1' && key[6] <= '8') {
    return stage(key[6] - '0', format);
  }
  if (auto a = parse_ablation(key)) return ablation(*a, format);
  if (auto c = parse_counterfactual(key)) return counterfactual(*c, format);
  throw Error(Errc::config_invalid, fmt::format("unknown condition '{}'", key));
}

ConditionKind PromptCondition::kind() const noexcept {
  return static_cast<ConditionKind>(id_.index());
}

std::optional<int> PromptCondition::stage_id() const noexcept {
  if (auto* s = std::get_if<StageId>(&id_)) return s->value;
  return std::nullopt;
}

std::optional<Ablation> PromptCondition::ablation_id() const noexcept {
  if (auto* a = std::get_if<Ablation>(&id_)) return *a;
  return std::nullopt;
}

std::optional<Counterfactual> PromptCondition::cf_id() const noexcept {
  if (auto* c = std::get_if<Counterfactual>(&id_)) return *c;
  return std::nullopt;
}

PromptCondition PromptCondition::with_format(PromptFormat f) const {
  return PromptCondition(id_, f);
}

std::string PromptCondition::key() const {
  std::string head;
  if (auto s = stage_id()) {
    head = fmt::format("stage-{}", *s);
  } else if (auto a = ablation_id()) {
    head = std::string(ablation_name(*a));
  } else {
    head = std::string(counterfactual_name(*cf_id()));
  }
  return head + "/" + std::string(format_name(format_));
}

std::strong_ordering operator<=>(const PromptCondition& a, const PromptCondition& b) {
  if (auto c = a.id_.index() <=> b.id_.index(); c != 0) return c;
  if (auto c = a.id_ <=> b.id_; c != 0) return c;
  return a.format_ <=> b.format_;
}

FieldSet field_set(std::initializer_list<Field> fields) {
  FieldSet s;
  for (Field f : fields) s.set(static_cast<std::size_t>(f));
  return s;
}

bool contains(const FieldSet& set, Field f) { return set.test(static_cast<std::size_t>(f)); }

FieldSet block_fields(BlockKind b) {
  switch (b) {
    case BlockKind::demographics:
      return field_set({Field::mean_age, Field::tertiary_education_pct, Field::religiosity_pct});
    case BlockKind::economics:
      return field_set({Field::gdp_pc_ppp_2021, Field::top1_income_share_pct,
                        Field::top1_wealth_share_pct, Field::hdi_2021});
    case BlockKind::temperature:
      return field_set({Field::avg_temp_2010_2019});
    case BlockKind::own_willingness:
      return field_set({Field::willing_1pct, Field::willing_smaller_pct});
  }
  return {};
}

std::vector<BlockKind> stage_blocks(int stage_id) {
  using B = BlockKind;
  switch (stage_id) {
    case 1: return {};
    case 2: return {B::demographics};
    case 3: return {B::economics};
    case 4: return {B::temperature};
    case 5: return {B::own_willingness};
    case 6: return {B::demographics, B::economics};
    case 7: return {B::demographics, B::economics, B::temperature};
    case 8: return {B::demographics, B::economics, B::temperature, B::own_willingness};
    default:
      throw Error(Errc::config_invalid, fmt::format("stage {} outside 1..8", stage_id));
  }
}

FieldSet ablation_footprint(Ablation a) {
  switch (a) {
    case Ablation::no_econ: return block_fields(BlockKind::economics);
    case Ablation::no_religion: return field_set({Field::religiosity_pct});
    case Ablation::no_demo: return block_fields(BlockKind::demographics);
    case Ablation::no_climate: return block_fields(BlockKind::temperature);
    case Ablation::no_own_willingness: return block_fields(BlockKind::own_willingness);
    case Ablation::name_only: return all_prompt_fields();
  }
  throw Error(Errc::unknown_ablation, "unrecognized ablation");
}

FieldSet visible_fields(const PromptCondition& condition) {
  if (auto s = condition.stage_id()) {
    FieldSet v;
    for (BlockKind b : stage_blocks(*s)) v |= block_fields(b);
    return v;
  }
  if (auto a = condition.ablation_id()) return all_prompt_fields() & ~ablation_footprint(*a);
  return all_prompt_fields();
}

std::string format_value(Field field, std::optional<double> value) {
  switch (field) {
    case Field::mean_age:
    case Field::tertiary_education_pct:
    case Field::religiosity_pct:
    case Field::top1_income_share_pct:
    case Field::top1_wealth_share_pct:
    case Field::avg_temp_2010_2019:
    case Field::internet_penetration_pct:
    case Field::willing_1pct:
    case Field::willing_smaller_pct:
      return value ? fixed(*value, 1) : std::string(kNotAvailable);
    case Field::gdp_pc_ppp_2021: {
      if (!value) return std::string(kNotAvailable);
      auto whole = static_cast<long long>(std::llround(*value));
      return "$" + with_commas(whole);
    }
    case Field::hdi_2021:
      return value ? fixed(*value, 3) : std::string(kNotAvailable);
    default:
      throw Error(Errc::unknown_field,
                  fmt::format("{} is not rendered in prompts", field_name(field)));
  }
}

std::vector<InfoBlock> render_info_blocks(const CountryRecord& record,
                                          const PromptCondition& condition,
                                          const SurveyItem& item) {
  const FieldSet visible = visible_fields(condition);
  std::vector<InfoBlock> blocks;
  for (BlockKind kind : kBlockOrder) {
    if ((block_fields(kind) & visible).none()) continue;
    auto block = condition.format() == PromptFormat::natural
                     ? natural_block(kind, record, visible, item)
                     : structured_block(kind, record, visible, item);
    if (block) blocks.push_back(std::move(*block));
  }
  return blocks;
}

std::string render_system_prompt() { return std::string(kSystemPrompt); }

std::string prompt_content_hash(std::string_view system_text, std::string_view user_text,
                                std::string_view item_id) {
  Digest d;
  d.add(system_text).add(user_text).add(item_id);
  return d.hex();
}

RenderedPrompt render_user_prompt(const CountryRecord& record, const SurveyItem& item,
                                  const PromptCondition& condition) {
  if (record.country_name.empty()) {
    throw Error(Errc::render_failure, "record has no country name");
  }
  if (item.first_order_question.empty() || item.others_clause.empty() ||
      item.population_desc.empty() || item.own_statement.empty()) {
    throw Error(Errc::render_failure, item.item_id + ": template field is empty");
  }
  const std::string& country = record.country_name;
  auto blocks = render_info_blocks(record, condition, item);

  std::string text;
  if (!blocks.empty()) {
    if (condition.format() == PromptFormat::natural) {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) text.push_back(' ');
        text += blocks[i].text;
      }
    } else {
      text = fmt::format("Country information for {}:", country);
      for (const auto& b : blocks) text += "\n" + b.text;
    }
    text += "\n\n";
  }

  text += fmt::format(
      "In a nationally representative survey with a probability-based sample of {}, "
      "respondents were asked: “{}” Responses: {}. Don't know and refused were "
      "coded as missing data. Respondents were then asked {} Responses: between 0% and "
      "100%, (Don't know), (Refused).",
      item.population_for(country), substitute_country(item.first_order_question, country),
      item.first_order_options, item.second_order_question(country));

  std::vector<std::string> categories = {"the country"};
  for (const auto& b : blocks) categories.push_back(category_phrase(b.kind, item));

  text += fmt::format(
      "\n\nBased on {} shown above, estimate what respondents in {} on average thought "
      "about how many **other** respondents in {} {}. Note: You are estimating people's "
      "beliefs about others' {}, not the actual {} itself. Respond with a single number "
      "between 0 and 100, with one decimal place.",
      join_list(categories), country, country,
      substitute_country(item.others_clause, country), item.belief_noun, item.belief_noun);

  RenderedPrompt p;
  p.system_text = render_system_prompt();
  p.user_text = std::move(text);
  p.condition = condition;
  p.country_name = country;
  p.item_id = item.item_id;
  p.content_hash = prompt_content_hash(p.system_text, p.user_text, p.item_id);
  for (const auto& b : blocks) {
    for (const auto& f : b.facts) {
      p.facts.push_back(f);
      p.shown_values.emplace_back(f.field, record.get(f.field));
    }
  }
  return p;
}

}  // namespace pgh
