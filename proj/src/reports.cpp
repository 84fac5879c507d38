#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "pgh/csv.hpp"
#include "pgh/error.hpp"
#include "pgh/rng.hpp"
#include "pgh/runner.hpp"
#include "pgh/stats_bench.hpp"
#include "pgh/survey_catalog.hpp"

namespace pgh {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return fmt::format("{:.4f}", v); }
std::string full(double v) { return fmt::format("{}", v); }
std::string opt_full(std::optional<double> v) { return v ? full(*v) : std::string(); }

std::string format_suffix(std::string_view condition_key) {
  auto slash = condition_key.find('/');
  return slash == std::string_view::npos ? std::string("natural")
                                         : std::string(condition_key.substr(slash + 1));
}

std::string table_text(const std::vector<csv::Row>& rows) {
  std::string out;
  for (const auto& r : rows) out += csv::format_row(r);
  return out;
}

struct Point {
  double prediction;
  double actual;
  std::optional<double> shown_actual;
};

// model -> condition -> country -> point, global item only, usable rows only.
using PointIndex = std::map<std::string, std::map<std::string, std::map<std::string, Point>>>;

PointIndex index_global(const LedgerView& view) {
  PointIndex idx;
  for (const auto& p : view.predictions) {
    if (p.item_id != kGlobalItemId || !p.prediction || !p.actual) continue;
    idx[p.model_id][p.condition][p.country] = {*p.prediction, *p.actual, p.shown_actual};
  }
  return idx;
}

std::string report_row_label(Field f) { return std::string(field_name(f)); }

}  // namespace

std::string_view verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::inference_consistent: return "inference-consistent";
    case Verdict::memorization_consistent: return "memorization-consistent";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

std::vector<MechanismVerdict> diagnose_mechanism(const LedgerView& view,
                                                 std::string_view base_condition, int resamples,
                                                 std::uint64_t seed) {
  const std::string base_key = PromptCondition::parse(base_condition).key();
  const std::string fmt_suffix = format_suffix(base_key);
  auto key_of = [&](std::string_view name) { return fmt::format("{}/{}", name, fmt_suffix); };
  const std::string wtp_ablation = key_of(ablation_name(Ablation::no_own_willingness));
  const std::string wtp_flip = key_of(counterfactual_name(Counterfactual::cf_willingness_flip));
  const std::string gdp_flip = key_of(counterfactual_name(Counterfactual::cf_gdp_flip));
  const std::string mismatch = key_of(counterfactual_name(Counterfactual::cf_name_mismatch));

  std::vector<std::string> suite;
  for (Ablation a : kAllAblations) suite.push_back(key_of(ablation_name(a)));
  for (Counterfactual c : kAllCounterfactuals) suite.push_back(key_of(counterfactual_name(c)));

  auto idx = index_global(view);
  if (idx.empty()) throw Error(Errc::missing_condition, "no usable predictions in the ledger");

  std::vector<MechanismVerdict> out;
  for (const auto& [model, by_cond] : idx) {
    auto need = [&](const std::string& key) {
      if (!by_cond.count(key)) {
        throw Error(Errc::missing_condition, fmt::format("{} has no {} predictions", model, key));
      }
    };
    need(base_key);
    need(gdp_flip);
    need(mismatch);
    if (!by_cond.count(wtp_ablation) && !by_cond.count(wtp_flip)) {
      throw Error(Errc::missing_condition,
                  fmt::format("{} has neither {} nor {}", model, wtp_ablation, wtp_flip));
    }
    const auto& base = by_cond.at(base_key);

    MechanismVerdict v;
    v.model_id = model;
    v.base_condition = base_key;
    std::map<std::string, const PerturbationDelta*> by_name;
    for (const auto& cond : suite) {
      auto it = by_cond.find(cond);
      if (it == by_cond.end()) continue;
      KeyedErrors b, x;
      for (const auto& [country, pt] : it->second) {
        auto bp = base.find(country);
        if (bp == base.end()) continue;
        b.keys.push_back(country);
        x.keys.push_back(country);
        b.abs_errors.push_back(std::abs(bp->second.prediction - bp->second.actual));
        x.abs_errors.push_back(std::abs(pt.prediction - pt.actual));
      }
      if (b.keys.size() < 2) {
        throw Error(Errc::missing_condition,
                    fmt::format("{}: fewer than two countries shared by {} and {}", model, base_key, cond));
      }
      PerturbationDelta d;
      d.condition = cond;
      d.n = b.keys.size();
      d.delta = paired_delta_mae(b, x, resamples, derive_seed(seed, fnv1a(model + '\x1f' + cond)));
      d.significant_rise =
          d.delta.p_value < kSignificanceAlpha && d.delta.delta_mae >= kMeaningfulDeltaMae;
      d.small = std::abs(d.delta.delta_mae) < kMeaningfulDeltaMae;
      v.deltas.push_back(d);
    }
    for (const auto& d : v.deltas) by_name[d.condition] = &d;

    double vs_shown = 0, vs_owner = 0;
    std::size_t n_mm = 0;
    for (const auto& [country, pt] : by_cond.at(mismatch)) {
      if (!pt.shown_actual) continue;
      vs_shown += std::abs(pt.prediction - *pt.shown_actual);
      vs_owner += std::abs(pt.prediction - pt.actual);
      ++n_mm;
    }
    if (n_mm > 0) {
      v.mismatch_mae_vs_shown = vs_shown / static_cast<double>(n_mm);
      v.mismatch_mae_vs_owner = vs_owner / static_cast<double>(n_mm);
    }

    auto rises = [&](const std::string& key) {
      auto it = by_name.find(key);
      return it != by_name.end() && it->second->significant_rise;
    };
    const bool willingness_sensitive = rises(wtp_ablation) || rises(wtp_flip);
    const bool name_small = by_name.at(mismatch)->small;
    const bool gdp_small = by_name.at(gdp_flip)->small;
    const bool follows_names = v.mismatch_mae_vs_shown && v.mismatch_mae_vs_owner &&
                               *v.mismatch_mae_vs_shown < *v.mismatch_mae_vs_owner &&
                               rises(mismatch);
    if (willingness_sensitive && name_small && gdp_small) {
      v.verdict = Verdict::inference_consistent;
      v.rationale = "willingness change raises error; name swap and GDP flip do not";
    } else if (follows_names) {
      v.verdict = Verdict::memorization_consistent;
      v.rationale = "under swapped names predictions track the named country";
    } else {
      v.verdict = Verdict::indeterminate;
      v.rationale = fmt::format("willingness_sensitive={} name_small={} gdp_small={}",
                                willingness_sensitive, name_small, gdp_small);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string mechanism_table(const std::vector<MechanismVerdict>& verdicts) {
  std::vector<csv::Row> rows = {{"model_id", "verdict", "base_condition", "condition", "n",
                                 "delta_mae", "ci_lo", "ci_hi", "p_value", "significant_rise",
                                 "small", "mismatch_mae_vs_shown", "mismatch_mae_vs_owner"}};
  for (const auto& v : verdicts) {
    for (const auto& d : v.deltas) {
      rows.push_back({v.model_id, std::string(verdict_name(v.verdict)), v.base_condition,
                      d.condition, std::to_string(d.n), num(d.delta.delta_mae),
                      num(d.delta.ci_lo), num(d.delta.ci_hi), num(d.delta.p_value),
                      d.significant_rise ? "1" : "0", d.small ? "1" : "0",
                      v.mismatch_mae_vs_shown ? num(*v.mismatch_mae_vs_shown) : "",
                      v.mismatch_mae_vs_owner ? num(*v.mismatch_mae_vs_owner) : ""});
    }
  }
  return table_text(rows);
}

std::string_view report_format_name(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::summary_table: return "summary_table";
    case ReportFormat::per_country_table: return "per_country_table";
    case ReportFormat::table1_style: return "table1_style";
    case ReportFormat::fig3_style: return "fig3_style";
    case ReportFormat::plotdata: return "plotdata";
  }
  return "summary_table";
}

std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept {
  for (auto f : {ReportFormat::summary_table, ReportFormat::per_country_table,
                 ReportFormat::table1_style, ReportFormat::fig3_style, ReportFormat::plotdata}) {
    if (report_format_name(f) == s) return f;
  }
  return std::nullopt;
}

std::vector<Field> table1_covariates() {
  return {Field::willing_1pct,     Field::mean_age,
          Field::tertiary_education_pct, Field::religiosity_pct,
          Field::hdi_2021,         Field::gdp_pc_ppp_2021,
          Field::top1_income_share_pct,  Field::avg_temp_2010_2019};
}

namespace {

std::map<std::string, std::string> summary_files(const LedgerView& view) {
  auto reports = compute_reports(view);
  std::vector<csv::Row> rows = {{"model_id", "condition", "item_id", "n", "n_failed", "mae",
                                 "rmse", "pearson_r", "r_ci_lo", "r_ci_hi", "r_squared",
                                 "mean_bias", "mae_ci_lo", "mae_ci_hi", "resamples"}};
  for (const auto& r : reports) {
    auto corr = [&](double v) { return r.has_pearson ? num(v) : std::string(); };
    rows.push_back({r.model_id, r.condition, r.item_id, std::to_string(r.n),
                    std::to_string(r.n_failed), num(r.mae), num(r.rmse), corr(r.pearson.r),
                    corr(r.pearson.lo), corr(r.pearson.hi), corr(r.r_squared), num(r.mean_bias),
                    num(r.bootstrap.lo), num(r.bootstrap.hi), std::to_string(r.bootstrap.resamples)});
  }

  // Absolute error against internet penetration and GDP, per model and condition.
  std::vector<csv::Row> het = {{"model_id", "condition", "covariate", "n", "slope", "intercept",
                                "r", "r_squared", "p_value"}};
  for (const auto& [model, by_cond] : index_global(view)) {
    for (const auto& [cond, points] : by_cond) {
      for (Field cov : {Field::internet_penetration_pct, Field::gdp_pc_ppp_2021}) {
        std::vector<double> errs, xs;
        for (const auto& [country, pt] : points) {
          const auto* rec = view.dataset.find(country);
          if (!rec || !rec->has(cov)) continue;
          errs.push_back(std::abs(pt.prediction - pt.actual));
          xs.push_back(*rec->get(cov));
        }
        if (errs.size() < 10) continue;
        try {
          auto fit = heterogeneity_regression(errs, xs);
          het.push_back({model, cond, std::string(field_name(cov)), std::to_string(fit.n),
                         full(fit.slope), full(fit.intercept), num(fit.r), num(fit.r_squared),
                         num(fit.p)});
        } catch (const Error& e) {
          if (e.code() != Errc::degenerate_variance) throw;
        }
      }
    }
  }
  return {{"summary.csv", table_text(rows)}, {"heterogeneity.csv", table_text(het)}};
}

std::map<std::string, std::string> per_country_files(const LedgerView& view) {
  std::vector<csv::Row> rows = {{"country", "shown_name", "model_id", "condition", "item_id",
                                 "prediction", "actual", "abs_error", "parse_status"}};
  auto preds = view.predictions;
  std::sort(preds.begin(), preds.end(), [](const LedgerPrediction& a, const LedgerPrediction& b) {
    return std::tie(a.model_id, a.condition, a.item_id, a.country) <
           std::tie(b.model_id, b.condition, b.item_id, b.country);
  });
  for (const auto& p : preds) {
    std::string err = p.prediction && p.actual ? full(std::abs(*p.prediction - *p.actual)) : "";
    rows.push_back({p.country, p.shown_name, p.model_id, p.condition, p.item_id,
                    opt_full(p.prediction), opt_full(p.actual), err,
                    std::string(parse_status_name(p.parse_status))});
  }
  return {{"per_country.csv", table_text(rows)}};
}

struct Table1Column {
  std::string name;
  std::optional<RegressionFit> fit;
};

std::map<std::string, std::string> table1_files(const LedgerView& view) {
  const std::string base_key = PromptCondition::stage(8).key();
  const auto covariates = table1_covariates();
  auto idx = index_global(view);

  std::vector<std::string> models;
  for (const auto& [model, by_cond] : idx) {
    if (by_cond.count(base_key)) models.push_back(model);
  }
  if (models.empty()) {
    throw Error(Errc::missing_view_inputs, "table1_style needs " + base_key + " predictions");
  }

  auto fit_column = [&](const std::map<std::string, double>* predicted) -> std::optional<RegressionFit> {
    std::vector<CountryRecord> rows;
    for (const auto& r : view.dataset.records()) {
      CountryRecord row = r;
      if (predicted) {
        auto it = predicted->find(r.country_name);
        row.set(Field::perceived_willing_pct,
                it == predicted->end() ? std::nullopt : std::optional<double>(it->second));
      }
      rows.push_back(std::move(row));
    }
    Dataset ds(std::move(rows), view.dataset.source_label());
    auto dm = build_design(ds, covariates, Field::perceived_willing_pct);
    try {
      return ols_fit(standardize(dm), true);
    } catch (const Error& e) {
      if (e.code() == Errc::zero_variance_column || e.code() == Errc::rank_deficient ||
          e.code() == Errc::insufficient_n) {
        return std::nullopt;
      }
      throw;
    }
  };

  std::vector<Table1Column> columns;
  columns.push_back({"actual", fit_column(nullptr)});
  for (const auto& model : models) {
    std::map<std::string, double> predicted;
    for (const auto& [country, pt] : idx.at(model).at(base_key)) predicted[country] = pt.prediction;
    columns.push_back({model, fit_column(&predicted)});
  }

  csv::Row header = {"term"};
  for (const auto& c : columns) header.push_back(c.name);
  std::vector<csv::Row> display = {header};
  std::vector<csv::Row> numeric = {{"term", "column", "estimate", "se", "p_value", "stars"}};
  auto cell = [](double b, double se, double p) {
    return fmt::format("{:.3f}{} ({:.3f})", b, significance_stars(p), se);
  };
  for (std::size_t j = 0; j < covariates.size(); ++j) {
    csv::Row row = {report_row_label(covariates[j])};
    for (const auto& c : columns) {
      if (!c.fit) {
        row.push_back("n/a");
        continue;
      }
      auto ji = static_cast<Eigen::Index>(j);
      double b = c.fit->coefficients(ji), se = c.fit->standard_errors(ji), p = c.fit->p_values(ji);
      row.push_back(cell(b, se, p));
      numeric.push_back({row[0], c.name, full(b), full(se), full(p), significance_stars(p)});
    }
    display.push_back(row);
  }
  csv::Row constant = {"constant"}, obs = {"observations"}, r2 = {"r_squared"}, adj = {"adj_r_squared"};
  for (const auto& c : columns) {
    if (!c.fit) {
      for (auto* r : {&constant, &obs, &r2, &adj}) r->push_back("n/a");
      continue;
    }
    constant.push_back(cell(c.fit->intercept, c.fit->intercept_se, c.fit->intercept_p));
    obs.push_back(std::to_string(c.fit->n));
    r2.push_back(fmt::format("{:.3f}", c.fit->r_squared));
    adj.push_back(fmt::format("{:.3f}", c.fit->adj_r_squared));
    numeric.push_back({"constant", c.name, full(c.fit->intercept), full(c.fit->intercept_se),
                       full(c.fit->intercept_p), significance_stars(c.fit->intercept_p)});
    numeric.push_back({"r_squared", c.name, full(c.fit->r_squared), "", "", ""});
    numeric.push_back({"adj_r_squared", c.name, full(c.fit->adj_r_squared), "", "", ""});
    numeric.push_back({"observations", c.name, std::to_string(c.fit->n), "", "", ""});
  }
  display.push_back(constant);
  display.push_back(obs);
  display.push_back(r2);
  display.push_back(adj);
  return {{"table1.csv", table_text(display)}, {"table1_coefficients.csv", table_text(numeric)}};
}

std::map<std::string, std::string> fig3_files(const LedgerView& view) {
  struct Row {
    int stage;
    std::string model;
    std::string format;
    EvalReport rep;
  };
  std::vector<Row> rows;
  for (auto& r : compute_reports(view)) {
    if (r.item_id != kGlobalItemId || r.n == 0) continue;
    auto cond = PromptCondition::parse(r.condition);
    if (auto s = cond.stage_id()) {
      rows.push_back({*s, r.model_id, std::string(format_name(cond.format())), std::move(r)});
    }
  }
  if (rows.empty()) throw Error(Errc::missing_view_inputs, "fig3_style needs stage predictions");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.stage, a.model, a.format) < std::tie(b.stage, b.model, b.format);
  });
  std::vector<csv::Row> out = {{"stage", "model", "format", "mae", "ci_lo", "ci_hi"}};
  for (const auto& r : rows) {
    out.push_back({std::to_string(r.stage), r.model, r.format, num(r.rep.mae),
                   num(r.rep.bootstrap.lo), num(r.rep.bootstrap.hi)});
  }
  return {{"fig3.csv", table_text(out)}};
}

std::map<std::string, std::string> plotdata_files(const LedgerView& view) {
  std::vector<csv::Row> rows = {{"country", "iso3", "continent", "model_id", "condition",
                                 "item_id", "shown_name", "prediction", "actual", "abs_error",
                                 "willing_1pct", "predicted_gap", "actual_gap",
                                 "internet_penetration_pct", "gdp_pc_ppp_2021"}};
  auto preds = view.predictions;
  std::sort(preds.begin(), preds.end(), [](const LedgerPrediction& a, const LedgerPrediction& b) {
    return std::tie(a.model_id, a.condition, a.item_id, a.country) <
           std::tie(b.model_id, b.condition, b.item_id, b.country);
  });
  for (const auto& p : preds) {
    if (!p.prediction) continue;
    const auto* rec = view.dataset.find(p.country);
    const bool global = p.item_id == kGlobalItemId && rec;
    std::optional<double> w = global ? rec->get(Field::willing_1pct) : std::nullopt;
    auto gap = [&](std::optional<double> perceived) -> std::string {
      return w && perceived ? full(*perceived - *w) : "";
    };
    rows.push_back({p.country, rec && rec->iso3 ? *rec->iso3 : "",
                    rec ? std::string(continent_name(rec->continent)) : "", p.model_id,
                    p.condition, p.item_id, p.shown_name, full(*p.prediction), opt_full(p.actual),
                    p.actual ? full(std::abs(*p.prediction - *p.actual)) : "", opt_full(w),
                    gap(p.prediction), gap(p.actual),
                    rec ? opt_full(rec->get(Field::internet_penetration_pct)) : "",
                    rec ? opt_full(rec->get(Field::gdp_pc_ppp_2021)) : ""});
  }
  return {{"plotdata.csv", table_text(rows)}};
}

}  // namespace

std::map<std::string, std::string> render_report(const LedgerView& view, ReportFormat format) {
  if (view.predictions.empty()) {
    throw Error(Errc::missing_view_inputs, "the ledger has no predictions");
  }
  switch (format) {
    case ReportFormat::summary_table: return summary_files(view);
    case ReportFormat::per_country_table: return per_country_files(view);
    case ReportFormat::table1_style: return table1_files(view);
    case ReportFormat::fig3_style: return fig3_files(view);
    case ReportFormat::plotdata: return plotdata_files(view);
  }
  throw Error(Errc::missing_view_inputs, "unknown report format");
}

std::vector<fs::path> emit_report(const LedgerView& view, ReportFormat format,
                                  const fs::path& out_dir) {
  auto files = render_report(view, format);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& [name, content] : files) {
    auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace pgh
