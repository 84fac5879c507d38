#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgh/country_data.hpp"
#include "pgh/eval_metrics.hpp"
#include "pgh/llm_gateway.hpp"
#include "pgh/prompt_engine.hpp"

namespace pgh {

inline constexpr std::string_view kConfigSchemaVersion = "1";

/// Where a mock_memorizer endpoint gets its name -> value table.
/// "dataset" uses the observed perceived share of each loaded country;
/// anything else is a CSV path with columns country_name,value.
struct ModelSpec {
  ModelEndpoint endpoint;
  std::string memorizer_source = "dataset";
};

struct ExperimentConfig {
  std::filesystem::path dataset_path;
  /// Ground truth for items other than the global one; CSV with columns
  /// item_id,country_name,first_order_pct,perceived_pct.
  std::optional<std::filesystem::path> item_outcomes_path;
  std::vector<std::string> item_ids;
  std::vector<ModelSpec> models;
  std::vector<PromptCondition> conditions;
  std::uint64_t seed = 0;
  int concurrency_limit = 4;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path output_dir;
  std::vector<Field> completeness_columns = default_completeness_fields();
  bool strict_parse = false;
  int bootstrap_resamples = 10000;
};

/// Parses the JSON config format (schema_version "1"). Relative paths are
/// resolved against base_dir. Throws config_invalid.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate_config(const ExperimentConfig& config);

/// Canonical JSON of everything that affects results. Output and cache
/// locations and the worker count are left out, so moving a run does not
/// change its id.
std::string config_snapshot(const ExperimentConfig& config);

/// Per-item outcomes for the non-global survey items.
struct ItemOutcome {
  std::string item_id;
  std::string country_name;
  double first_order_pct = 0;
  double perceived_pct = 0;
};
std::vector<ItemOutcome> parse_item_outcomes(std::string_view csv_text);

/// The records prompts are rendered from for one item. The global item
/// uses the dataset as is. Other items take the dataset row for each
/// listed country (or a bare row when absent) with willingness set to the
/// item's first-order share, the smaller-amount share cleared and the
/// perceived share set to the item's outcome.
Dataset item_dataset(const Dataset& ds, std::string_view item_id,
                     const std::vector<ItemOutcome>& outcomes);

struct LedgerPrediction {
  std::string model_id;
  std::string condition;
  std::string item_id;
  /// Owner of the data in the prompt.
  std::string country;
  std::string shown_name;
  std::string prompt_hash;
  std::optional<double> prediction;
  std::string raw_text;
  ParseStatus parse_status = ParseStatus::failed;
  int retries_used = 0;
  std::string timestamp;
  /// Observed value for the data owner and for the shown name.
  std::optional<double> actual;
  std::optional<double> shown_actual;
};

struct LedgerFailure {
  std::string model_id;
  std::string condition;
  std::string item_id;
  std::string country;
  std::string error;
};

/// A ledger read back into memory. Everything a report needs lives here.
struct LedgerView {
  std::string run_id;
  std::string config_json;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 10000;
  Dataset dataset;
  std::vector<LedgerPrediction> predictions;
  std::vector<LedgerFailure> failures;
  std::size_t report_events = 0;
  bool complete = false;
};

LedgerView parse_ledger(std::string_view ndjson);
LedgerView load_ledger(const std::filesystem::path& path);

/// One report per (model, condition, item), sorted by that key.
std::vector<EvalReport> compute_reports(const LedgerView& view);

struct RunOptions {
  /// Stop after writing this many cells in this invocation.
  std::optional<std::size_t> stop_after;
  /// Drop http_chat endpoints.
  bool offline = false;
  std::function<std::unique_ptr<Backend>(const ModelSpec&, const Dataset&)> backend_factory;
  std::optional<Clock> clock;
  std::ostream* log = nullptr;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 2;
inline constexpr int kExitInterrupted = 3;

struct RunResult {
  int exit_code = kExitOk;
  std::string run_id;
  std::filesystem::path ledger_path;
  std::size_t cells_total = 0;
  std::size_t cells_resumed = 0;
  std::size_t cells_run = 0;
  std::vector<std::string> failed_cells;
  std::uint64_t backend_calls = 0;
  std::uint64_t cache_hits = 0;
  std::vector<EvalReport> reports;
};

/// Runs every (model, condition, item, country) cell in lexicographic
/// order and appends to <output_dir>/ledger.ndjson. An existing ledger for
/// the same run id is verified and continued; a finished one is left as is.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::unique_ptr<Backend> make_backend(const ModelSpec& spec, const Dataset& ds);

// Mechanism diagnostics.

/// A rise counts when paired p < .05 and the MAE grows by at least 1 point;
/// a change is small when |delta MAE| < 1 point.
inline constexpr double kSignificanceAlpha = 0.05;
inline constexpr double kMeaningfulDeltaMae = 1.0;

enum class Verdict { inference_consistent, memorization_consistent, indeterminate };
std::string_view verdict_name(Verdict v) noexcept;

struct PerturbationDelta {
  std::string condition;
  std::size_t n = 0;
  PairedDelta delta;
  bool significant_rise = false;
  bool small = false;
};

struct MechanismVerdict {
  std::string model_id;
  std::string base_condition;
  std::vector<PerturbationDelta> deltas;
  /// On name-mismatch cells: MAE against the shown country's value and
  /// against the data owner's value.
  std::optional<double> mismatch_mae_vs_shown;
  std::optional<double> mismatch_mae_vs_owner;
  Verdict verdict = Verdict::indeterminate;
  std::string rationale;
};

/// Per model: paired delta MAE of every ablation and counterfactual against
/// the base condition on the global item. Needs the base, cf_gdp_flip,
/// cf_name_mismatch and a willingness condition (no_own_willingness or
/// cf_willingness_flip) in the base's format; otherwise missing_condition.
std::vector<MechanismVerdict> diagnose_mechanism(const LedgerView& view,
                                                 std::string_view base_condition = "stage-8/natural",
                                                 int resamples = 10000, std::uint64_t seed = 0);

std::string mechanism_table(const std::vector<MechanismVerdict>& verdicts);

enum class ReportFormat { summary_table, per_country_table, table1_style, fig3_style, plotdata };
std::string_view report_format_name(ReportFormat f) noexcept;
std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept;

/// File name -> content for one view. Deterministic given the ledger.
/// Throws missing_view_inputs when the ledger lacks what the view needs.
std::map<std::string, std::string> render_report(const LedgerView& view, ReportFormat format);

/// Writes render_report's files into out_dir and returns their paths.
std::vector<std::filesystem::path> emit_report(const LedgerView& view, ReportFormat format,
                                               const std::filesystem::path& out_dir);

/// Covariates of the parallel regressions, in table order.
std::vector<Field> table1_covariates();

}  // namespace pgh
