#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgh/country_data.hpp"
#include "pgh/prompt_engine.hpp"

namespace pgh {

/// A record as it will be shown under an ablation or counterfactual.
/// Ablations leave `effective` equal to `base` and list what is hidden in
/// `suppressed`; counterfactuals rewrite values in `effective`.
struct PerturbedRecord {
  CountryRecord base;
  PromptCondition condition = PromptCondition::ablation(Ablation::name_only);
  CountryRecord effective;
  FieldSet suppressed;
  std::string provenance_note;
};

/// Fields whose value differs between base and effective. Country name
/// changes are reported separately by name_changed().
FieldSet changed_fields(const PerturbedRecord& p);
inline bool name_changed(const PerturbedRecord& p) {
  return p.base.country_name != p.effective.country_name;
}

PerturbedRecord ablate(const CountryRecord& record, Ablation ablation);

inline constexpr double kWillingnessFlipThreshold = 50.0;
inline constexpr double kGdpFlipThreshold = 20'000.0;
inline constexpr double kPoorPoolMaxGdp = 5'000.0;
inline constexpr double kRichPoolMinGdp = 40'000.0;

/// willing_1pct <= 50 becomes (75, 15); above 50 becomes (15, 10).
PerturbedRecord flip_willingness(const CountryRecord& record);

/// GDP per capita <= 20,000 becomes 65,000; above becomes 2,000. Other
/// economic indicators are untouched.
PerturbedRecord flip_gdp(const CountryRecord& record);

/// Gives each rich-pool country (GDP > 40,000) the name of a poor-pool
/// country (GDP < 5,000) and vice versa, keeping covariates. Countries in
/// neither pool are left out. Names are dealt from a seeded shuffle of the
/// opposite pool, reshuffled each time the pool is exhausted.
std::vector<PerturbedRecord> mismatch_names(const Dataset& ds, std::uint64_t seed);

/// Perturbs a whole dataset for one ablation or counterfactual condition.
/// Records lacking the input a flip needs are skipped.
std::vector<PerturbedRecord> perturb_dataset(const Dataset& ds,
                                             const PromptCondition& condition,
                                             std::uint64_t seed);

RenderedPrompt render_perturbed(const PerturbedRecord& p, const SurveyItem& item);

}  // namespace pgh
