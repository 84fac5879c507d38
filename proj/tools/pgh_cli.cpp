// Command-line front end: ingest, render, run, diagnose, report, bench.
#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "pgh/country_data.hpp"
#include "pgh/csv.hpp"
#include "pgh/error.hpp"
#include "pgh/perturbation.hpp"
#include "pgh/prompt_engine.hpp"
#include "pgh/runner.hpp"
#include "pgh/stats_bench.hpp"
#include "pgh/survey_catalog.hpp"

namespace fs = std::filesystem;
using namespace pgh;

namespace {

std::vector<Field> parse_fields(const std::vector<std::string>& names) {
  std::vector<Field> out;
  for (const auto& n : names) {
    auto f = parse_field(n);
    if (!f) throw Error(Errc::unknown_field, n);
    out.push_back(*f);
  }
  return out;
}

int cmd_ingest(const std::string& path, const std::vector<std::string>& completeness) {
  auto ds = load_dataset(path);
  auto cols = completeness.empty() ? default_completeness_fields() : parse_fields(completeness);
  auto complete = complete_subset(ds, cols);
  fmt::print("records: {}\ncomplete: {}\ncontent_hash: {}\n", ds.size(), complete.size(),
             ds.content_hash());
  try {
    auto g = dataset_gap_summary(ds);
    fmt::print("mean_gap: {:.2f} (95% CI {:.2f} to {:.2f}, n = {})\nmean_abs_gap: {:.2f}\n",
               g.mean_gap, g.ci95_lo, g.ci95_hi, g.n, g.mean_abs_gap);
  } catch (const Error& e) {
    if (e.code() != Errc::insufficient_data) throw;
    fmt::print("mean_gap: n/a ({})\n", e.what());
  }
  return 0;
}

int cmd_render(const std::string& dataset, const std::string& country, const std::string& condition,
               const std::string& item_id, std::uint64_t seed, const std::string& golden) {
  auto ds = load_dataset(dataset);
  const auto& item = SurveyCatalog::builtin().get_item(item_id);
  auto cond = PromptCondition::parse(condition);
  RenderedPrompt prompt;
  if (cond.kind() == ConditionKind::stage) {
    const auto* rec = ds.find(country);
    if (!rec) throw Error(Errc::unknown_country, country);
    prompt = render_user_prompt(*rec, item, cond);
  } else {
    bool found = false;
    for (const auto& p : perturb_dataset(ds, cond, seed)) {
      if (p.base.country_name == country) {
        prompt = render_perturbed(p, item);
        found = true;
      }
    }
    if (!found) throw Error(Errc::unknown_country, country + " is not part of " + cond.key());
  }
  if (!golden.empty()) {
    auto expected = csv::read_file(golden);
    if (expected == prompt.user_text) {
      fmt::print("identical to {}\n", golden);
      return 0;
    }
    std::size_t i = 0;
    while (i < expected.size() && i < prompt.user_text.size() && expected[i] == prompt.user_text[i]) ++i;
    fmt::print(stderr, "differs from {} at byte {}\n", golden, i);
    return 1;
  }
  fmt::print("[system]\n{}\n\n[user]\n{}\n\n[hash] {}\n", prompt.system_text, prompt.user_text,
             prompt.content_hash);
  return 0;
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  std::string cache_dir;
  std::string out;
  std::optional<std::size_t> stop_after;
};

ExperimentConfig apply_overrides(const RunArgs& a) {
  auto cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
  if (!a.out.empty()) cfg.output_dir = a.out;
  return cfg;
}

int cmd_run(const RunArgs& a) {
  auto cfg = apply_overrides(a);
  RunOptions opts;
  opts.offline = a.offline;
  opts.stop_after = a.stop_after;
  opts.log = &std::cerr;
  auto res = run_experiment(cfg, opts);
  fmt::print("run_id: {}\nledger: {}\ncells: {} (resumed {}, run {})\nbackend_calls: {}\ncache_hits: {}\n",
             res.run_id, res.ledger_path.string(), res.cells_total, res.cells_resumed, res.cells_run,
             res.backend_calls, res.cache_hits);
  for (const auto& r : res.reports) {
    fmt::print("{} {} {}: n={} mae={:.2f} rmse={:.2f} r={}\n", r.model_id, r.condition, r.item_id,
               r.n, r.mae, r.rmse, r.has_pearson ? fmt::format("{:.2f}", r.pearson.r) : "n/a");
  }
  for (const auto& c : res.failed_cells) fmt::print(stderr, "failed: {}\n", c);
  if (res.exit_code == kExitInterrupted) fmt::print(stderr, "stopped early; rerun to resume\n");
  return res.exit_code;
}

fs::path ledger_path(const std::string& ledger, const RunArgs& a) {
  if (!ledger.empty()) return ledger;
  if (a.config.empty()) throw Error(Errc::config_invalid, "pass --ledger or --config");
  return apply_overrides(a).output_dir / "ledger.ndjson";
}

int cmd_diagnose(const fs::path& ledger, const std::string& base, int resamples,
                 const std::string& out) {
  auto view = load_ledger(ledger);
  auto verdicts = diagnose_mechanism(view, base, resamples, view.seed);
  for (const auto& v : verdicts) {
    fmt::print("{}: {} ({})\n", v.model_id, verdict_name(v.verdict), v.rationale);
    for (const auto& d : v.deltas) {
      fmt::print("  {:<28} dMAE {:+.2f} [{:.2f}, {:.2f}] p={:.3f}\n", d.condition, d.delta.delta_mae,
                 d.delta.ci_lo, d.delta.ci_hi, d.delta.p_value);
    }
  }
  auto dir = out.empty() ? ledger.parent_path() : fs::path(out);
  fs::create_directories(dir);
  std::ofstream(dir / "mechanism.csv", std::ios::trunc) << mechanism_table(verdicts);
  return 0;
}

int cmd_report(const fs::path& ledger, const std::string& format, const std::string& out) {
  auto view = load_ledger(ledger);
  auto dir = out.empty() ? ledger.parent_path() : fs::path(out);
  std::vector<ReportFormat> formats;
  if (format == "all") {
    formats = {ReportFormat::summary_table, ReportFormat::per_country_table,
               ReportFormat::table1_style, ReportFormat::fig3_style, ReportFormat::plotdata};
  } else {
    auto f = parse_report_format(format);
    if (!f) throw Error(Errc::config_invalid, "unknown format " + format);
    formats = {*f};
  }
  for (auto f : formats) {
    try {
      for (const auto& p : emit_report(view, f, dir)) fmt::print("{}\n", p.string());
    } catch (const Error& e) {
      if (e.code() != Errc::missing_view_inputs || format != "all") throw;
      fmt::print(stderr, "skipped {}: {}\n", report_format_name(f), e.what());
    }
  }
  return 0;
}

int cmd_bench(std::string dataset, const std::vector<std::string>& completeness,
              std::optional<std::uint64_t> seed_arg, int iterations, std::string out,
              const std::string& config_path) {
  auto cols = completeness.empty() ? default_completeness_fields() : parse_fields(completeness);
  std::uint64_t seed = seed_arg.value_or(0);
  if (!config_path.empty()) {
    // Dataset, completeness set, seed and output directory come from the config.
    auto cfg = load_config(config_path);
    dataset = cfg.dataset_path.string();
    if (completeness.empty()) cols = cfg.completeness_columns;
    if (!seed_arg) seed = cfg.seed;
    if (out.empty()) out = cfg.output_dir.string();
  }
  if (dataset.empty()) throw Error(Errc::config_invalid, "bench needs a dataset or --config");
  auto ds = load_dataset(dataset);
  auto complete = complete_subset(ds, cols);
  BenchmarkOptions opts;
  opts.seed = seed;
  auto splits = split_train_test(complete, 0.8, iterations, seed);
  auto results = fit_benchmarks(complete, splits, opts);

  std::vector<csv::Row> rows = {{"iteration", "ols_test_mae", "lasso_test_mae", "ols_test_rmse",
                                 "lasso_test_rmse", "lasso_lambda"}};
  for (const auto& r : results) {
    rows.push_back({std::to_string(r.iteration), fmt::format("{:.4f}", r.ols_test_mae),
                    fmt::format("{:.4f}", r.lasso_test_mae), fmt::format("{:.4f}", r.ols_test_rmse),
                    fmt::format("{:.4f}", r.lasso_test_rmse), fmt::format("{}", r.lasso_lambda)});
  }
  auto summarize = [&](auto member, const char* name) {
    std::vector<double> v;
    for (const auto& r : results) v.push_back(r.*member);
    double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    double half = 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
    fmt::print("{}: {:.2f} (95% CI {:.2f} to {:.2f})\n", name, m, m - half, m + half);
  };
  fmt::print("countries: {} complete of {}\n", complete.size(), ds.size());
  summarize(&BenchmarkIteration::ols_test_mae, "ols_test_mae");
  summarize(&BenchmarkIteration::lasso_test_mae, "lasso_test_mae");
  summarize(&BenchmarkIteration::ols_test_rmse, "ols_test_rmse");
  summarize(&BenchmarkIteration::lasso_test_rmse, "lasso_test_rmse");
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "bench.csv", std::ios::trunc);
    for (const auto& r : rows) f << csv::format_row(r);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-order belief prediction harness"};
  app.require_subcommand(1);

  std::string dataset, country, condition = "stage-8", item = std::string(kGlobalItemId), golden;
  std::string ledger, format = "all", base = "stage-8", out;
  std::vector<std::string> completeness;
  std::uint64_t seed = 0;
  int iterations = 10, resamples = 10000;
  RunArgs run;

  auto* ingest = app.add_subcommand("ingest", "Validate a country table");
  ingest->add_option("dataset", dataset, "Country table CSV")->required();
  ingest->add_option("--completeness", completeness, "Columns a complete record needs");

  auto* render = app.add_subcommand("render", "Print a prompt or compare it to a golden file");
  render->add_option("dataset", dataset, "Country table CSV")->required();
  render->add_option("--country", country, "Country name")->required();
  render->add_option("--condition", condition, "e.g. stage-8, no_econ/structured");
  render->add_option("--item", item, "Survey item id");
  render->add_option("--seed", seed, "Seed for cf_name_mismatch");
  render->add_option("--golden", golden, "Compare the user prompt with this file");

  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a config");
  run_cmd->add_option("--config", run.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--seed", run.seed, "Override the config seed");
  run_cmd->add_flag("--offline", run.offline, "Skip http endpoints");
  run_cmd->add_option("--cache-dir", run.cache_dir, "Override the response cache directory");
  run_cmd->add_option("--out", run.out, "Override the output directory");
  run_cmd->add_option("--stop-after", run.stop_after, "Stop after this many cells");

  auto* diag = app.add_subcommand("diagnose", "Mechanism suite on a finished ledger");
  diag->add_option("--ledger", ledger, "Ledger file");
  diag->add_option("--config", run.config, "Config whose output directory holds the ledger");
  diag->add_option("--out", out, "Directory for mechanism.csv");
  diag->add_option("--base", base, "Base condition");
  diag->add_option("--resamples", resamples, "Bootstrap resamples");

  auto* report = app.add_subcommand("report", "Emit report views from a ledger");
  report->add_option("--ledger", ledger, "Ledger file");
  report->add_option("--config", run.config, "Config whose output directory holds the ledger");
  report->add_option("--format", format,
                     "summary_table, per_country_table, table1_style, fig3_style, plotdata or all");
  report->add_option("--out", out, "Output directory");

  auto* bench = app.add_subcommand("bench", "OLS and Lasso baselines on repeated splits");
  std::optional<std::uint64_t> bench_seed;
  bench->add_option("dataset", dataset, "Country table CSV");
  bench->add_option("--config", run.config, "Take dataset, completeness set and seed from a config");
  bench->add_option("--completeness", completeness, "Columns a complete record needs");
  bench->add_option("--seed", bench_seed, "Split seed");
  bench->add_option("--iterations", iterations, "Number of splits");
  bench->add_option("--out", out, "Directory for bench.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(dataset, completeness);
    if (*render) return cmd_render(dataset, country, condition, item, seed, golden);
    if (*run_cmd) return cmd_run(run);
    if (*diag) return cmd_diagnose(ledger_path(ledger, run), base, resamples, out);
    if (*report) return cmd_report(ledger_path(ledger, run), format, out);
    if (*bench) return cmd_bench(dataset, completeness, bench_seed, iterations, out, run.config);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
