#include "pgh/perturbation.hpp"

#include <fmt/format.h>

#include "pgh/error.hpp"
#include "pgh/rng.hpp"

namespace pgh {

namespace {

PerturbedRecord start(const CountryRecord& r, PromptCondition condition) {
  return PerturbedRecord{r, condition, r, {}, {}};
}

std::vector<std::string> deal_names(const std::vector<const CountryRecord*>& pool,
                                    std::size_t count, Rng& rng) {
  std::vector<std::string> names;
  std::vector<std::string> deck;
  while (names.size() < count) {
    if (deck.empty()) {
      for (const auto* r : pool) deck.push_back(r->country_name);
      rng.shuffle(std::span<std::string>(deck));
    }
    names.push_back(std::move(deck.back()));
    deck.pop_back();
  }
  return names;
}

}  // namespace

FieldSet changed_fields(const PerturbedRecord& p) {
  FieldSet s;
  for (Field f : kAllFields) {
    if (p.base.get(f) != p.effective.get(f)) s.set(static_cast<std::size_t>(f));
  }
  return s;
}

PerturbedRecord ablate(const CountryRecord& record, Ablation ablation) {
  auto p = start(record, PromptCondition::ablation(ablation));
  p.suppressed = ablation_footprint(ablation);
  std::string hidden;
  for (Field f : kAllFields) {
    if (contains(p.suppressed, f)) {
      if (!hidden.empty()) hidden += ", ";
      hidden += field_name(f);
    }
  }
  p.provenance_note = fmt::format("{}: suppressed {}", ablation_name(ablation), hidden);
  return p;
}

PerturbedRecord flip_willingness(const CountryRecord& record) {
  auto w = record.get(Field::willing_1pct);
  if (!w) throw Error(Errc::missing_willingness, record.country_name);
  auto p = start(record, PromptCondition::counterfactual(Counterfactual::cf_willingness_flip));
  const bool low = *w <= kWillingnessFlipThreshold;
  p.effective.set(Field::willing_1pct, low ? 75.0 : 15.0);
  p.effective.set(Field::willing_smaller_pct, low ? 15.0 : 10.0);
  p.provenance_note = fmt::format("cf_willingness_flip: willing_1pct {} -> {}", *w,
                                  low ? "75 (+15 smaller)" : "15 (+10 smaller)");
  return p;
}

PerturbedRecord flip_gdp(const CountryRecord& record) {
  auto g = record.get(Field::gdp_pc_ppp_2021);
  if (!g) throw Error(Errc::missing_gdp, record.country_name);
  auto p = start(record, PromptCondition::counterfactual(Counterfactual::cf_gdp_flip));
  const double flipped = *g <= kGdpFlipThreshold ? 65'000.0 : 2'000.0;
  p.effective.set(Field::gdp_pc_ppp_2021, flipped);
  p.provenance_note = fmt::format("cf_gdp_flip: gdp_pc_ppp_2021 {} -> {}", *g, flipped);
  return p;
}

std::vector<PerturbedRecord> mismatch_names(const Dataset& ds, std::uint64_t seed) {
  std::vector<const CountryRecord*> rich, poor;
  for (const auto& r : ds.records()) {
    auto g = r.get(Field::gdp_pc_ppp_2021);
    if (!g) continue;
    if (*g > kRichPoolMinGdp) rich.push_back(&r);
    if (*g < kPoorPoolMaxGdp) poor.push_back(&r);
  }
  if (rich.empty() || poor.empty()) {
    throw Error(Errc::empty_pool, fmt::format("rich pool has {}, poor pool has {} countries",
                                              rich.size(), poor.size()));
  }

  Rng rng(derive_seed(seed, fnv1a("cf_name_mismatch")));
  auto names_for_rich = deal_names(poor, rich.size(), rng);
  auto names_for_poor = deal_names(rich, poor.size(), rng);

  std::vector<std::pair<const CountryRecord*, std::string>> assigned;
  for (std::size_t i = 0; i < rich.size(); ++i) assigned.emplace_back(rich[i], names_for_rich[i]);
  for (std::size_t i = 0; i < poor.size(); ++i) assigned.emplace_back(poor[i], names_for_poor[i]);

  // Dataset order.
  std::vector<PerturbedRecord> out;
  for (const auto& r : ds.records()) {
    for (const auto& [rec, name] : assigned) {
      if (rec != &r) continue;
      auto p = start(r, PromptCondition::counterfactual(Counterfactual::cf_name_mismatch));
      p.effective.country_name = name;
      p.effective.iso3.reset();
      p.provenance_note = fmt::format("cf_name_mismatch: {} shown as {} (seed {})",
                                      r.country_name, name, seed);
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<PerturbedRecord> perturb_dataset(const Dataset& ds,
                                             const PromptCondition& condition,
                                             std::uint64_t seed) {
  std::vector<PerturbedRecord> out;
  if (auto a = condition.ablation_id()) {
    for (const auto& r : ds.records()) out.push_back(ablate(r, *a));
  } else if (auto c = condition.cf_id()) {
    switch (*c) {
      case Counterfactual::cf_willingness_flip:
        for (const auto& r : ds.records()) {
          if (r.has(Field::willing_1pct)) out.push_back(flip_willingness(r));
        }
        break;
      case Counterfactual::cf_gdp_flip:
        for (const auto& r : ds.records()) {
          if (r.has(Field::gdp_pc_ppp_2021)) out.push_back(flip_gdp(r));
        }
        break;
      case Counterfactual::cf_name_mismatch:
        out = mismatch_names(ds, seed);
        break;
    }
  } else {
    throw Error(Errc::config_invalid, "stage conditions are not perturbations");
  }
  for (auto& p : out) p.condition = condition;
  return out;
}

RenderedPrompt render_perturbed(const PerturbedRecord& p, const SurveyItem& item) {
  return render_user_prompt(p.effective, item, p.condition);
}

}  // namespace pgh
