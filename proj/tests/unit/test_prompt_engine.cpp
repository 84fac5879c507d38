#include <doctest.h>

#include <algorithm>
#include <set>

#include "pgh/error.hpp"
#include "pgh/prompt_engine.hpp"
#include "pgh/survey_catalog.hpp"
#include "support/synth.hpp"

using namespace pgh;

namespace {

const SurveyItem& global_item() { return SurveyCatalog::builtin().get_item(kGlobalItemId); }

std::vector<Fact> sorted_facts(const CountryRecord& r, int stage,
                               PromptFormat fmt = PromptFormat::natural) {
  auto p = render_user_prompt(r, global_item(), PromptCondition::stage(stage, fmt));
  std::sort(p.facts.begin(), p.facts.end());
  return p.facts;
}

std::vector<Fact> merged(std::initializer_list<std::vector<Fact>> parts) {
  std::vector<Fact> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  std::sort(out.begin(), out.end());
  return out;
}

bool has(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("system prompt matches the golden file") {
  CHECK(render_system_prompt() == test::read_text(test::kFixtureDir + "/golden/system_prompt.txt"));
}

TEST_CASE("argentina stage 8 natural prompt matches the golden file byte for byte") {
  auto p = render_user_prompt(test::argentina(), global_item(), PromptCondition::stage(8));
  auto golden = test::read_text(test::kFixtureDir + "/golden/argentina_gccs-1pct_stage-8_natural.txt");
  CHECK(p.user_text == golden);
  for (const char* s : {"$29,484", "0.842", "15.3°C", "62.2%", "14.3%"}) CHECK(has(p.user_text, s));
  CHECK(p.country_name == "Argentina");
  CHECK(p.item_id == kGlobalItemId);
  CHECK(p.content_hash.size() == 64);
}

TEST_CASE("value formatting") {
  CHECK(format_value(Field::gdp_pc_ppp_2021, 29484.0) == "$29,484");
  CHECK(format_value(Field::gdp_pc_ppp_2021, 1234567.5) == "$1,234,568");
  CHECK(format_value(Field::gdp_pc_ppp_2021, 999.4) == "$999");
  CHECK(format_value(Field::hdi_2021, 0.8415) == "0.842");
  CHECK(format_value(Field::mean_age, 42.05) == "42.1");
  CHECK(format_value(Field::avg_temp_2010_2019, -2.25) == "-2.3");
  CHECK(format_value(Field::willing_1pct, 62.2) == "62.2");
  CHECK(format_value(Field::willing_1pct, 7.0) == "7.0");
  CHECK(format_value(Field::hdi_2021, std::nullopt) == kNotAvailable);
  CHECK_THROWS_AS(format_value(Field::perceived_willing_pct, 40.0), Error);
}

TEST_CASE("condition keys parse and print") {
  CHECK(PromptCondition::parse("stage-3").key() == "stage-3/natural");
  CHECK(PromptCondition::parse("no_econ/structured").key() == "no_econ/structured");
  CHECK(PromptCondition::parse("cf_gdp_flip").cf_id() == Counterfactual::cf_gdp_flip);
  CHECK_THROWS_AS(PromptCondition::parse("stage-9"), Error);
  CHECK_THROWS_AS(PromptCondition::parse("no_weather"), Error);
  CHECK_THROWS_AS(PromptCondition::stage(0), Error);
}

TEST_CASE("stage fact sets compose over randomized records") {
  Rng rng(2024);
  for (std::size_t i = 0; i < 150; ++i) {
    auto r = test::random_record(rng, i, i % 3 == 0 ? 0.25 : 0.0);
    for (auto fmt : {PromptFormat::natural, PromptFormat::structured}) {
      auto s2 = sorted_facts(r, 2, fmt), s3 = sorted_facts(r, 3, fmt), s4 = sorted_facts(r, 4, fmt),
           s5 = sorted_facts(r, 5, fmt);
      CHECK(sorted_facts(r, 1, fmt).empty());
      CHECK(sorted_facts(r, 8, fmt) == merged({s2, s3, s4, s5}));
      CHECK(sorted_facts(r, 6, fmt) == merged({s2, s3}));
      CHECK(sorted_facts(r, 7, fmt) == merged({s2, s3, s4}));
    }
  }
}

TEST_CASE("natural and structured prompts carry the same facts") {
  Rng rng(7);
  for (std::size_t i = 0; i < 60; ++i) {
    auto r = test::random_record(rng, i, 0.15);
    for (int s = 1; s <= 8; ++s) {
      CHECK(sorted_facts(r, s, PromptFormat::natural) == sorted_facts(r, s, PromptFormat::structured));
    }
    for (Ablation a : kAllAblations) {
      auto n = render_user_prompt(r, global_item(), PromptCondition::ablation(a));
      auto st = render_user_prompt(r, global_item(), PromptCondition::ablation(a, PromptFormat::structured));
      CHECK(n.facts == st.facts);
      if (!n.facts.empty()) CHECK(n.user_text != st.user_text);
    }
  }
}

TEST_CASE("structured prompt layout") {
  auto p = render_user_prompt(test::argentina(), global_item(),
                              PromptCondition::stage(8, PromptFormat::structured));
  CHECK(p.user_text.rfind("Country information for Argentina:\n- ", 0) == 0);
  CHECK(has(p.user_text, "$29,484"));
  CHECK(has(p.user_text, "0.842"));
}

TEST_CASE("ablations hide exactly their footprint") {
  const auto r = test::argentina();
  auto text = [&](Ablation a) {
    return render_user_prompt(r, global_item(), PromptCondition::ablation(a)).user_text;
  };
  auto econ = text(Ablation::no_econ);
  for (const char* s : {"$29,484", "13.0%", "24.9%", "0.842"}) CHECK_FALSE(has(econ, s));
  for (const char* s : {"42.1", "52.3%", "15.3°C", "62.2%"}) CHECK(has(econ, s));

  auto rel = text(Ablation::no_religion);
  CHECK_FALSE(has(rel, "52.3%"));
  CHECK_FALSE(has(rel, "religion"));
  CHECK(has(rel, "10.8%"));

  auto demo = text(Ablation::no_demo);
  for (const char* s : {"42.1", "10.8%", "52.3%"}) CHECK_FALSE(has(demo, s));
  CHECK(has(demo, "$29,484"));

  auto climate = text(Ablation::no_climate);
  CHECK_FALSE(has(climate, "15.3"));

  auto own = text(Ablation::no_own_willingness);
  CHECK_FALSE(has(own, "62.2%"));
  CHECK_FALSE(has(own, "14.3%"));
  CHECK_FALSE(has(own, "actual willingness data"));

  auto bare = text(Ablation::name_only);
  for (const char* s : {"42.1", "$29,484", "15.3", "62.2%", "0.842"}) CHECK_FALSE(has(bare, s));
  CHECK(bare == render_user_prompt(r, global_item(), PromptCondition::stage(1)).user_text);

  for (Ablation a : kAllAblations) {
    auto p = render_user_prompt(r, global_item(), PromptCondition::ablation(a));
    for (const auto& f : p.facts) CHECK_FALSE(contains(ablation_footprint(a), f.field));
  }
}

TEST_CASE("footprints") {
  CHECK(ablation_footprint(Ablation::no_econ) ==
        field_set({Field::gdp_pc_ppp_2021, Field::top1_income_share_pct, Field::top1_wealth_share_pct,
                   Field::hdi_2021}));
  CHECK(ablation_footprint(Ablation::no_religion) == field_set({Field::religiosity_pct}));
  CHECK(ablation_footprint(Ablation::no_own_willingness) ==
        field_set({Field::willing_1pct, Field::willing_smaller_pct}));
  CHECK_FALSE(contains(ablation_footprint(Ablation::no_demo), Field::gdp_pc_ppp_2021));
}

TEST_CASE("missing values are said, not invented") {
  auto r = test::argentina();
  r.set(Field::hdi_2021, std::nullopt);
  r.set(Field::willing_smaller_pct, std::nullopt);
  auto p = render_user_prompt(r, global_item(), PromptCondition::stage(8));
  CHECK(has(p.user_text, "not available"));
  CHECK_FALSE(has(p.user_text, "smaller amount"));
  CHECK_FALSE(has(p.user_text, "0.0"));
}

TEST_CASE("every catalog item renders and names the country") {
  for (const auto& item : SurveyCatalog::builtin().list_items(ItemFilter::all)) {
    auto p = render_user_prompt(test::argentina(), item, PromptCondition::stage(8));
    CHECK(has(p.user_text, "**other**"));
    CHECK(has(p.user_text, "people's beliefs about others'"));
    CHECK_FALSE(has(p.user_text, "{country}"));
  }
}

TEST_CASE("prompt hash follows content") {
  auto a = render_user_prompt(test::argentina(), global_item(), PromptCondition::stage(8));
  auto b = render_user_prompt(test::argentina(), global_item(), PromptCondition::stage(8));
  auto c = render_user_prompt(test::argentina(), global_item(), PromptCondition::stage(7));
  CHECK(a.content_hash == b.content_hash);
  CHECK(a.content_hash != c.content_hash);
  // name_only and stage 1 render the same text and so share a hash.
  auto d = render_user_prompt(test::argentina(), global_item(), PromptCondition::ablation(Ablation::name_only));
  CHECK(d.content_hash == render_user_prompt(test::argentina(), global_item(), PromptCondition::stage(1)).content_hash);
}
