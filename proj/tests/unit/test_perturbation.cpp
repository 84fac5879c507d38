#include <doctest.h>

#include <set>

#include "pgh/error.hpp"
#include "pgh/perturbation.hpp"
#include "support/synth.hpp"

using namespace pgh;

namespace {

CountryRecord with(Field f, std::optional<double> v) {
  auto r = test::argentina();
  r.set(f, v);
  return r;
}

}  // namespace

TEST_CASE("willingness flip boundaries") {
  for (double w : {0.0, 12.5, 49.9, 50.0}) {
    auto p = flip_willingness(with(Field::willing_1pct, w));
    CHECK(*p.effective.get(Field::willing_1pct) == 75.0);
    CHECK(*p.effective.get(Field::willing_smaller_pct) == 15.0);
  }
  for (double w : {50.1, 50.0000001, 62.2, 100.0}) {
    auto p = flip_willingness(with(Field::willing_1pct, w));
    CHECK(*p.effective.get(Field::willing_1pct) == 15.0);
    CHECK(*p.effective.get(Field::willing_smaller_pct) == 10.0);
  }
  auto p = flip_willingness(test::argentina());
  CHECK(changed_fields(p) == field_set({Field::willing_1pct, Field::willing_smaller_pct}));
  CHECK_FALSE(name_changed(p));
  CHECK_THROWS_AS(flip_willingness(with(Field::willing_1pct, std::nullopt)), Error);
}

TEST_CASE("gdp flip boundaries") {
  for (double g : {1.0, 19999.99, 20000.0}) {
    CHECK(*flip_gdp(with(Field::gdp_pc_ppp_2021, g)).effective.get(Field::gdp_pc_ppp_2021) == 65000.0);
  }
  for (double g : {20000.01, 29484.0, 150000.0}) {
    CHECK(*flip_gdp(with(Field::gdp_pc_ppp_2021, g)).effective.get(Field::gdp_pc_ppp_2021) == 2000.0);
  }
  auto p = flip_gdp(test::argentina());
  CHECK(changed_fields(p) == field_set({Field::gdp_pc_ppp_2021}));
  auto prompt = render_perturbed(p, SurveyCatalog::builtin().get_item(kGlobalItemId));
  CHECK(prompt.user_text.find("$2,000") != std::string::npos);
  CHECK(prompt.user_text.find("$29,484") == std::string::npos);
  try {
    flip_gdp(with(Field::gdp_pc_ppp_2021, std::nullopt));
    FAIL("expected missing_gdp");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_gdp);
  }
}

TEST_CASE("ablation leaves values alone and records the footprint") {
  for (Ablation a : kAllAblations) {
    auto p = ablate(test::argentina(), a);
    CHECK(changed_fields(p).none());
    CHECK(p.suppressed == ablation_footprint(a));
    CHECK(p.effective == p.base);
  }
}

TEST_CASE("name mismatch swaps rich and poor names") {
  auto ds = test::projection_world(60, 3);
  auto out = mismatch_names(ds, 17);
  std::set<std::string> rich, poor;
  for (const auto& r : ds.records()) {
    double g = *r.get(Field::gdp_pc_ppp_2021);
    if (g > kRichPoolMinGdp) rich.insert(r.country_name);
    if (g < kPoorPoolMaxGdp) poor.insert(r.country_name);
  }
  REQUIRE_FALSE(rich.empty());
  REQUIRE_FALSE(poor.empty());
  CHECK(out.size() == rich.size() + poor.size());
  for (const auto& p : out) {
    CHECK(name_changed(p));
    CHECK(changed_fields(p).none());
    CHECK_FALSE(p.effective.iso3.has_value());
    if (rich.count(p.base.country_name)) CHECK(poor.count(p.effective.country_name) == 1);
    if (poor.count(p.base.country_name)) CHECK(rich.count(p.effective.country_name) == 1);
  }
  // Same seed, same deal; another seed, another deal.
  auto again = mismatch_names(ds, 17);
  auto other = mismatch_names(ds, 18);
  bool differs = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].effective.country_name == again[i].effective.country_name);
    differs = differs || out[i].effective.country_name != other[i].effective.country_name;
  }
  CHECK(differs);
}

TEST_CASE("name mismatch needs both pools") {
  auto r = test::argentina();  // mid-income
  try {
    mismatch_names(Dataset({r}, "one"), 1);
    FAIL("expected empty_pool");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_pool);
  }
}

TEST_CASE("perturb_dataset skips records without the flipped field") {
  auto a = test::argentina();
  auto b = with(Field::willing_1pct, std::nullopt);
  b.country_name = "Chile";
  Dataset ds({a, b}, "two");
  auto out = perturb_dataset(ds, PromptCondition::counterfactual(Counterfactual::cf_willingness_flip), 0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].base.country_name == "Argentina");
  CHECK_THROWS_AS(perturb_dataset(ds, PromptCondition::stage(8), 0), Error);
}
