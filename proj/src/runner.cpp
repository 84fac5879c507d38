#include "pgh/runner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "pgh/csv.hpp"
#include "pgh/error.hpp"
#include "pgh/hash.hpp"
#include "pgh/http_backend.hpp"
#include "pgh/perturbation.hpp"
#include "pgh/rng.hpp"
#include "pgh/survey_catalog.hpp"

namespace pgh {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(Errc::config_invalid, msg); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(fmt::format("'{}' has the wrong type", key));
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known,
                         std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      invalid(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ModelSpec parse_model(const json& j, const fs::path& base) {
  if (!j.is_object()) invalid("each model must be an object");
  reject_unknown_keys(j,
                      {"model_id", "backend", "base_url", "model_name", "credentials_env",
                       "timeout_seconds", "max_retries", "retry_backoff_seconds", "max_in_flight",
                       "strict_parse", "constant_value", "jitter_amplitude", "seed",
                       "memorizer_table"},
                      "model");
  ModelSpec spec;
  auto& ep = spec.endpoint;
  ep.model_id = get_or<std::string>(j, "model_id", "");
  if (ep.model_id.empty()) invalid("model_id is required");
  auto kind = parse_backend_kind(get_or<std::string>(j, "backend", ""));
  if (!kind) invalid(fmt::format("model {}: unknown or missing backend", ep.model_id));
  ep.backend_kind = *kind;
  ep.base_url = get_or<std::string>(j, "base_url", "");
  ep.model_name = get_or<std::string>(j, "model_name", "");
  ep.credentials_env = get_or<std::string>(j, "credentials_env", "");
  ep.timeout_seconds = get_or<double>(j, "timeout_seconds", ep.timeout_seconds);
  ep.max_retries = get_or<int>(j, "max_retries", ep.max_retries);
  ep.retry_backoff_seconds = get_or<double>(j, "retry_backoff_seconds", ep.retry_backoff_seconds);
  ep.max_in_flight = get_or<int>(j, "max_in_flight", ep.max_in_flight);
  ep.strict_parse = get_or<bool>(j, "strict_parse", false);
  ep.constant_value = get_or<double>(j, "constant_value", ep.constant_value);
  ep.jitter_amplitude = get_or<double>(j, "jitter_amplitude", ep.jitter_amplitude);
  ep.seed = get_or<std::uint64_t>(j, "seed", ep.seed);
  spec.memorizer_source = get_or<std::string>(j, "memorizer_table", "dataset");
  if (spec.memorizer_source != "dataset") {
    spec.memorizer_source = resolve(base, spec.memorizer_source).string();
  }
  return spec;
}

std::string file_digest(const fs::path& p) { return sha256_hex(csv::read_file(p.string())); }

std::string cell_key(std::string_view model, std::string_view cond, std::string_view item,
                     std::string_view country) {
  return fmt::format("{} | {} | {} | {}", model, cond, item, country);
}

json opt_number(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json field_list(const FieldSet& set) {
  json out = json::array();
  for (Field f : kAllFields) {
    if (contains(set, f)) out.push_back(std::string(field_name(f)));
  }
  return out;
}

class Semaphore {
 public:
  explicit Semaphore(int n) : count_(std::max(1, n)) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

struct Cell {
  std::size_t model_index = 0;
  std::string model_id;
  std::string condition;
  std::string item_id;
  std::string country;
  RenderedPrompt prompt;
  std::optional<double> actual;
  std::optional<double> shown_actual;
};

std::string event_line(const std::string& run_id, std::size_t seq, std::string_view type,
                       json data) {
  json e;
  e["run_id"] = run_id;
  e["seq"] = seq;
  e["type"] = type;
  e["data"] = std::move(data);
  return e.dump() + "\n";
}

std::vector<std::string> split_lines(const std::string& text, bool& partial_tail) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  partial_tail = false;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      partial_tail = true;
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

json report_json(const EvalReport& r) {
  json j;
  j["model_id"] = r.model_id;
  j["condition"] = r.condition;
  j["item_id"] = r.item_id;
  j["n"] = r.n;
  j["n_failed"] = r.n_failed;
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["pearson_r"] = r.has_pearson ? json(r.pearson.r) : json(nullptr);
  j["r_ci_lo"] = r.has_pearson ? json(r.pearson.lo) : json(nullptr);
  j["r_ci_hi"] = r.has_pearson ? json(r.pearson.hi) : json(nullptr);
  j["r_squared"] = r.has_pearson ? json(r.r_squared) : json(nullptr);
  j["mean_bias"] = r.mean_bias;
  j["mae_ci_lo"] = r.bootstrap.lo;
  j["mae_ci_hi"] = r.bootstrap.hi;
  j["resamples"] = r.bootstrap.resamples;
  return j;
}

std::vector<std::string> failed_cells(const LedgerView& view) {
  std::vector<std::string> out;
  for (const auto& f : view.failures) {
    out.push_back(cell_key(f.model_id, f.condition, f.item_id, f.country));
  }
  for (const auto& p : view.predictions) {
    if (!p.prediction) out.push_back(cell_key(p.model_id, p.condition, p.item_id, p.country));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  json j = json::parse(json_text.begin(), json_text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) invalid("config is not a JSON object");
  reject_unknown_keys(j,
                      {"schema_version", "dataset_path", "item_outcomes_path", "item_ids",
                       "models", "conditions", "seed", "concurrency_limit", "cache_dir",
                       "output_dir", "completeness_columns", "strict_parse",
                       "bootstrap_resamples"},
                      "config");
  auto version = get_or<std::string>(j, "schema_version", "");
  if (version != kConfigSchemaVersion) {
    invalid(fmt::format("schema_version must be \"{}\", got \"{}\"", kConfigSchemaVersion, version));
  }

  ExperimentConfig c;
  auto dataset = get_or<std::string>(j, "dataset_path", "");
  if (dataset.empty()) invalid("dataset_path is required");
  c.dataset_path = resolve(base_dir, dataset);
  if (auto p = get_or<std::string>(j, "item_outcomes_path", ""); !p.empty()) {
    c.item_outcomes_path = resolve(base_dir, p);
  }
  c.item_ids = get_or<std::vector<std::string>>(j, "item_ids", {std::string(kGlobalItemId)});
  if (j.contains("models")) {
    if (!j.at("models").is_array()) invalid("models must be a list");
    for (const auto& m : j.at("models")) c.models.push_back(parse_model(m, base_dir));
  }
  for (const auto& key : get_or<std::vector<std::string>>(j, "conditions", {})) {
    try {
      c.conditions.push_back(PromptCondition::parse(key));
    } catch (const Error& e) {
      invalid(fmt::format("condition '{}': {}", key, e.what()));
    }
  }
  if (!j.contains("seed") || !j.at("seed").is_number_integer()) {
    invalid("seed is required and must be a non-negative integer");
  }
  if (j.at("seed").is_number_unsigned()) {
    c.seed = j.at("seed").get<std::uint64_t>();
  } else {
    auto s = j.at("seed").get<std::int64_t>();
    if (s < 0) invalid("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  c.concurrency_limit = get_or<int>(j, "concurrency_limit", c.concurrency_limit);
  if (auto p = get_or<std::string>(j, "cache_dir", ""); !p.empty()) {
    c.cache_dir = resolve(base_dir, p);
  }
  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "out"));
  if (j.contains("completeness_columns")) {
    c.completeness_columns.clear();
    for (const auto& name : get_or<std::vector<std::string>>(j, "completeness_columns", {})) {
      auto f = parse_field(name);
      if (!f) invalid(fmt::format("unknown completeness column '{}'", name));
      c.completeness_columns.push_back(*f);
    }
  }
  c.strict_parse = get_or<bool>(j, "strict_parse", false);
  c.bootstrap_resamples = get_or<int>(j, "bootstrap_resamples", c.bootstrap_resamples);
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = csv::read_file(path.string());
  } catch (const Error& e) {
    invalid(e.what());
  }
  return parse_config(text, fs::absolute(path).parent_path());
}

void validate_config(const ExperimentConfig& c) {
  if (c.models.empty()) invalid("at least one model is required");
  if (c.conditions.empty()) invalid("at least one condition is required");
  if (c.item_ids.empty()) invalid("at least one item is required");
  if (c.concurrency_limit < 1) invalid("concurrency_limit must be >= 1");
  if (c.bootstrap_resamples < 1) invalid("bootstrap_resamples must be >= 1");
  std::set<std::string> ids;
  for (const auto& m : c.models) {
    const auto& ep = m.endpoint;
    if (!ids.insert(ep.model_id).second) invalid("duplicate model_id " + ep.model_id);
    if (ep.max_retries < 0) invalid(ep.model_id + ": max_retries must be >= 0");
    if (ep.max_in_flight < 1) invalid(ep.model_id + ": max_in_flight must be >= 1");
    if (ep.timeout_seconds <= 0) invalid(ep.model_id + ": timeout_seconds must be > 0");
    if (ep.backend_kind == BackendKind::http_chat &&
        (ep.base_url.empty() || ep.model_name.empty() || ep.credentials_env.empty())) {
      invalid(ep.model_id + ": http_chat needs base_url, model_name and credentials_env");
    }
  }
  const auto& catalog = SurveyCatalog::builtin();
  std::set<std::string> items;
  for (const auto& id : c.item_ids) {
    if (!catalog.contains(id)) invalid("unknown item " + id);
    if (!items.insert(id).second) invalid("duplicate item " + id);
    if (id != kGlobalItemId && !c.item_outcomes_path) {
      invalid("item " + id + " needs item_outcomes_path for its ground truth");
    }
  }
  std::set<std::string> conds;
  for (const auto& cond : c.conditions) {
    if (!conds.insert(cond.key()).second) invalid("duplicate condition " + cond.key());
  }
}

std::string config_snapshot(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["item_ids"] = c.item_ids;
  j["item_outcomes_sha256"] =
      c.item_outcomes_path ? json(file_digest(*c.item_outcomes_path)) : json(nullptr);
  json models = json::array();
  for (const auto& m : c.models) {
    const auto& ep = m.endpoint;
    json e;
    e["model_id"] = ep.model_id;
    e["backend"] = backend_kind_name(ep.backend_kind);
    e["base_url"] = ep.base_url;
    e["model_name"] = ep.model_name;
    e["credentials_env"] = ep.credentials_env;
    e["timeout_seconds"] = ep.timeout_seconds;
    e["max_retries"] = ep.max_retries;
    e["retry_backoff_seconds"] = ep.retry_backoff_seconds;
    e["max_in_flight"] = ep.max_in_flight;
    e["strict_parse"] = ep.strict_parse || c.strict_parse;
    e["constant_value"] = ep.constant_value;
    e["jitter_amplitude"] = ep.jitter_amplitude;
    e["seed"] = ep.seed;
    e["temperature"] = ModelEndpoint::temperature;
    if (ep.backend_kind == BackendKind::mock_memorizer) {
      e["memorizer_table"] = m.memorizer_source == "dataset"
                                 ? std::string("dataset")
                                 : "sha256:" + file_digest(m.memorizer_source);
    }
    models.push_back(e);
  }
  j["models"] = models;
  json conds = json::array();
  for (const auto& cond : c.conditions) conds.push_back(cond.key());
  j["conditions"] = conds;
  j["seed"] = c.seed;
  json cols = json::array();
  for (Field f : c.completeness_columns) cols.push_back(std::string(field_name(f)));
  j["completeness_columns"] = cols;
  j["strict_parse"] = c.strict_parse;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  return j.dump();
}

// ---------------------------------------------------------------- items

std::vector<ItemOutcome> parse_item_outcomes(std::string_view csv_text) {
  auto rows = csv::parse(csv_text);
  const std::vector<std::string> expected = {"item_id", "country_name", "first_order_pct",
                                             "perceived_pct"};
  if (rows.empty() || rows[0] != expected) {
    throw Error(Errc::schema_mismatch,
                "item outcomes need columns item_id,country_name,first_order_pct,perceived_pct");
  }
  std::vector<ItemOutcome> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != expected.size()) {
      throw Error(Errc::schema_mismatch, fmt::format("item outcomes row {} has {} cells", i + 1, r.size()));
    }
    ItemOutcome o;
    o.item_id = r[0];
    o.country_name = r[1];
    auto number = [&](const std::string& cell, const char* col) {
      double v = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !(v >= 0 && v <= 100)) {
        throw Error(Errc::value_out_of_range,
                    fmt::format("item outcomes row {} column {}: '{}'", i + 1, col, cell));
      }
      return v;
    };
    o.first_order_pct = number(r[2], "first_order_pct");
    o.perceived_pct = number(r[3], "perceived_pct");
    if (!seen.emplace(o.item_id, o.country_name).second) {
      throw Error(Errc::duplicate_country,
                  fmt::format("item outcomes list {} twice for {}", o.country_name, o.item_id));
    }
    out.push_back(std::move(o));
  }
  return out;
}

Dataset item_dataset(const Dataset& ds, std::string_view item_id,
                     const std::vector<ItemOutcome>& outcomes) {
  if (item_id == kGlobalItemId) return ds;
  std::vector<CountryRecord> records;
  for (const auto& o : outcomes) {
    if (o.item_id != item_id) continue;
    CountryRecord r;
    if (const auto* base = ds.find(o.country_name)) {
      r = *base;
    } else {
      auto continent = lookup_continent(o.country_name);
      if (!continent) {
        throw Error(Errc::unknown_country, "no continent known for " + o.country_name);
      }
      r.country_name = o.country_name;
      r.continent = *continent;
    }
    r.set(Field::willing_1pct, o.first_order_pct);
    r.set(Field::willing_smaller_pct, std::nullopt);
    r.set(Field::perceived_willing_pct, o.perceived_pct);
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw Error(Errc::missing_field, fmt::format("no outcomes for item {}", item_id));
  }
  return Dataset(std::move(records), ds.source_label() + "#" + std::string(item_id), ds.as_of());
}

// ---------------------------------------------------------------- ledger

LedgerView parse_ledger(std::string_view ndjson) {
  LedgerView view;
  std::size_t expected_seq = 0;
  std::size_t start = 0;
  bool have_dataset = false;
  while (start < ndjson.size()) {
    auto nl = ndjson.find('\n', start);
    auto line = ndjson.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? ndjson.size() : nl + 1;
    if (line.empty()) continue;
    json e = json::parse(line.begin(), line.end(), nullptr, false);
    if (e.is_discarded() || !e.is_object() || !e.contains("type") || !e.contains("data")) {
      throw Error(Errc::ledger_mismatch, fmt::format("event {} is not valid", expected_seq));
    }
    try {
      auto run_id = e.at("run_id").get<std::string>();
      if (view.run_id.empty()) view.run_id = run_id;
      if (run_id != view.run_id) throw Error(Errc::ledger_mismatch, "mixed run ids");
      if (e.at("seq").get<std::size_t>() != expected_seq) {
        throw Error(Errc::ledger_mismatch, fmt::format("sequence gap at {}", expected_seq));
      }
      ++expected_seq;
      const auto type = e.at("type").get<std::string>();
      const auto& d = e.at("data");
      if (type == "config") {
        view.config_json = d.dump();
        view.seed = d.at("seed").get<std::uint64_t>();
        view.bootstrap_resamples = d.at("bootstrap_resamples").get<int>();
      } else if (type == "dataset") {
        view.dataset = parse_dataset(d.at("csv").get<std::string>(),
                                     d.at("source_label").get<std::string>());
        have_dataset = true;
      } else if (type == "prediction") {
        LedgerPrediction p;
        p.model_id = d.at("model_id").get<std::string>();
        p.condition = d.at("condition").get<std::string>();
        p.item_id = d.at("item_id").get<std::string>();
        p.country = d.at("country").get<std::string>();
        p.shown_name = d.at("shown_name").get<std::string>();
        p.prompt_hash = d.at("prompt_hash").get<std::string>();
        p.prediction = number_or_null(d, "prediction");
        p.raw_text = d.at("raw_text").get<std::string>();
        auto status = parse_parse_status(d.at("parse_status").get<std::string>());
        if (!status) throw Error(Errc::ledger_mismatch, "bad parse_status");
        p.parse_status = *status;
        p.retries_used = d.at("retries_used").get<int>();
        p.timestamp = d.at("timestamp").get<std::string>();
        p.actual = number_or_null(d, "actual");
        p.shown_actual = number_or_null(d, "shown_actual");
        view.predictions.push_back(std::move(p));
      } else if (type == "cell_failed") {
        view.failures.push_back({d.at("model_id").get<std::string>(),
                                 d.at("condition").get<std::string>(),
                                 d.at("item_id").get<std::string>(),
                                 d.at("country").get<std::string>(),
                                 d.at("error").get<std::string>()});
      } else if (type == "report") {
        ++view.report_events;
      } else if (type == "mark") {
        if (d.at("label").get<std::string>() == "run_complete") view.complete = true;
      } else if (type != "perturbation_manifest") {
        throw Error(Errc::ledger_mismatch, "unknown event type " + type);
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::ledger_mismatch, fmt::format("event {}: {}", expected_seq, ex.what()));
    }
  }
  if (view.config_json.empty() || !have_dataset) {
    throw Error(Errc::ledger_mismatch, "ledger lacks its config or dataset event");
  }
  return view;
}

LedgerView load_ledger(const fs::path& path) { return parse_ledger(csv::read_file(path.string())); }

std::vector<EvalReport> compute_reports(const LedgerView& view) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<CountryError>> rows;
  std::map<Key, std::size_t> failed;
  for (const auto& p : view.predictions) {
    Key key{p.model_id, p.condition, p.item_id};
    auto& bucket = rows[key];
    if (p.prediction && p.actual) {
      bucket.push_back({p.country, *p.prediction, *p.actual, 0.0});
    } else if (!p.prediction) {
      ++failed[key];
    }
  }
  for (const auto& f : view.failures) ++failed[Key{f.model_id, f.condition, f.item_id}];
  for (const auto& [key, n] : failed) rows[key];

  std::vector<EvalReport> reports;
  for (auto& [key, bucket] : rows) {
    const auto& [model, cond, item] = key;
    EvalReport rep;
    if (bucket.empty()) {
      rep.model_id = model;
      rep.condition = cond;
      rep.item_id = item;
    } else {
      auto seed = derive_seed(view.seed, fnv1a(model + '\x1f' + cond + '\x1f' + item));
      rep = evaluate(model, cond, item, std::move(bucket), view.bootstrap_resamples, seed);
    }
    if (auto it = failed.find(key); it != failed.end()) rep.n_failed = it->second;
    reports.push_back(std::move(rep));
  }
  return reports;
}

// ---------------------------------------------------------------- backends

std::unique_ptr<Backend> make_backend(const ModelSpec& spec, const Dataset& ds) {
  switch (spec.endpoint.backend_kind) {
    case BackendKind::http_chat: return std::make_unique<HttpChatBackend>();
    case BackendKind::mock_projection: return std::make_unique<MockProjectionBackend>();
    case BackendKind::mock_constant: return std::make_unique<MockConstantBackend>();
    case BackendKind::mock_memorizer: {
      std::map<std::string, double, std::less<>> table;
      if (spec.memorizer_source == "dataset") {
        for (const auto& r : ds.records()) {
          if (auto v = r.get(Field::perceived_willing_pct)) table.emplace(r.country_name, *v);
        }
      } else {
        auto rows = csv::parse(csv::read_file(spec.memorizer_source));
        if (rows.empty() || rows[0] != csv::Row{"country_name", "value"}) {
          throw Error(Errc::schema_mismatch, "memorizer table needs columns country_name,value");
        }
        for (std::size_t i = 1; i < rows.size(); ++i) {
          if (rows[i].size() != 2) throw Error(Errc::schema_mismatch, "memorizer table row size");
          table.emplace(rows[i][0], std::stod(rows[i][1]));
        }
      }
      return std::make_unique<MockMemorizerBackend>(std::move(table));
    }
  }
  throw Error(Errc::config_invalid, "unknown backend");
}

// ---------------------------------------------------------------- run

RunResult run_experiment(const ExperimentConfig& config_in, const RunOptions& options) {
  ExperimentConfig config = config_in;
  if (options.offline) {
    std::vector<ModelSpec> kept;
    for (auto& m : config.models) {
      if (m.endpoint.backend_kind == BackendKind::http_chat) {
        if (options.log) *options.log << "offline: skipping " << m.endpoint.model_id << "\n";
      } else {
        kept.push_back(std::move(m));
      }
    }
    config.models = std::move(kept);
  }
  validate_config(config);
  for (auto& m : config.models) m.endpoint.strict_parse = m.endpoint.strict_parse || config.strict_parse;
  std::sort(config.models.begin(), config.models.end(),
            [](const ModelSpec& a, const ModelSpec& b) { return a.endpoint.model_id < b.endpoint.model_id; });

  const Dataset ds = load_dataset(config.dataset_path.string());
  std::string outcomes_csv;
  std::vector<ItemOutcome> outcomes;
  if (config.item_outcomes_path) {
    outcomes_csv = csv::read_file(config.item_outcomes_path->string());
    outcomes = parse_item_outcomes(outcomes_csv);
  }
  const auto& catalog = SurveyCatalog::builtin();

  const std::string snapshot = config_snapshot(config);
  const std::string run_id = sha256_hex(snapshot + "\n" + ds.content_hash()).substr(0, 16);

  // Header events.
  std::vector<std::pair<std::string, json>> header;
  header.emplace_back("config", json::parse(snapshot));
  {
    json d;
    d["source_label"] = config.dataset_path.filename().string();
    d["content_hash"] = ds.content_hash();
    d["csv"] = serialize_dataset(ds);
    d["item_outcomes_csv"] = config.item_outcomes_path ? json(outcomes_csv) : json(nullptr);
    header.emplace_back("dataset", std::move(d));
  }

  // Cells, grouped by condition and item, then sorted.
  std::vector<std::string> item_ids = config.item_ids;
  std::sort(item_ids.begin(), item_ids.end());
  std::vector<PromptCondition> conditions = config.conditions;
  std::sort(conditions.begin(), conditions.end(),
            [](const PromptCondition& a, const PromptCondition& b) { return a.key() < b.key(); });

  struct Rendered {
    std::string country;
    RenderedPrompt prompt;
    std::optional<double> actual;
    std::optional<double> shown_actual;
  };
  std::vector<Cell> cells;
  for (const auto& cond : conditions) {
    for (const auto& item_id : item_ids) {
      const auto& item = catalog.get_item(item_id);
      Dataset ids = item_dataset(ds, item_id, outcomes);
      auto truth = [&](const std::string& name) -> std::optional<double> {
        const auto* r = ids.find(name);
        return r ? r->get(Field::perceived_willing_pct) : std::nullopt;
      };
      std::vector<Rendered> rendered;
      if (cond.kind() == ConditionKind::stage) {
        for (const auto& r : ids.records()) {
          rendered.push_back({r.country_name, render_user_prompt(r, item, cond),
                              truth(r.country_name), truth(r.country_name)});
        }
      } else {
        auto perturbed = perturb_dataset(ids, cond, config.seed);
        json entries = json::array();
        for (const auto& p : perturbed) {
          json e;
          e["country"] = p.base.country_name;
          e["shown_name"] = p.effective.country_name;
          e["changed"] = field_list(changed_fields(p));
          e["suppressed"] = field_list(p.suppressed);
          e["note"] = p.provenance_note;
          entries.push_back(std::move(e));
          rendered.push_back({p.base.country_name, render_perturbed(p, item),
                              truth(p.base.country_name), truth(p.effective.country_name)});
        }
        json d;
        d["condition"] = cond.key();
        d["item_id"] = item_id;
        d["entries"] = std::move(entries);
        header.emplace_back("perturbation_manifest", std::move(d));
      }
      for (std::size_t m = 0; m < config.models.size(); ++m) {
        for (const auto& r : rendered) {
          cells.push_back({m, config.models[m].endpoint.model_id, cond.key(), item_id, r.country,
                           r.prompt, r.actual, r.shown_actual});
        }
      }
    }
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return std::tie(a.model_id, a.condition, a.item_id, a.country) <
           std::tie(b.model_id, b.condition, b.item_id, b.country);
  });

  RunResult result;
  result.run_id = run_id;
  result.cells_total = cells.size();
  fs::create_directories(config.output_dir);
  result.ledger_path = config.output_dir / "ledger.ndjson";

  std::vector<std::string> header_lines;
  for (std::size_t i = 0; i < header.size(); ++i) {
    header_lines.push_back(event_line(run_id, i, header[i].first, header[i].second));
  }

  // Resume: keep the verified header and cell prefix of an existing ledger.
  std::size_t done_cells = 0;
  std::string kept;
  bool already_complete = false;
  if (fs::exists(result.ledger_path)) {
    bool partial_tail = false;
    auto lines = split_lines(csv::read_file(result.ledger_path.string()), partial_tail);
    if (lines.size() < header_lines.size()) {
      throw Error(Errc::ledger_mismatch, "existing ledger is shorter than its header");
    }
    for (std::size_t i = 0; i < header_lines.size(); ++i) {
      if (lines[i] + "\n" != header_lines[i]) {
        throw Error(Errc::ledger_mismatch,
                    fmt::format("existing ledger at {} belongs to a different run or config",
                                result.ledger_path.string()));
      }
      kept += header_lines[i];
    }
    for (std::size_t i = header_lines.size(); i < lines.size() && done_cells < cells.size(); ++i) {
      json e = json::parse(lines[i], nullptr, false);
      if (e.is_discarded()) break;
      auto type = e.value("type", "");
      if (type != "prediction" && type != "cell_failed") break;
      const auto& d = e.at("data");
      const auto& c = cells[done_cells];
      if (e.value("seq", std::size_t{0}) != i ||
          cell_key(d.value("model_id", ""), d.value("condition", ""), d.value("item_id", ""),
                   d.value("country", "")) != cell_key(c.model_id, c.condition, c.item_id, c.country)) {
        throw Error(Errc::ledger_mismatch, fmt::format("cell event {} is out of order", i));
      }
      kept += lines[i] + "\n";
      ++done_cells;
    }
    if (done_cells == cells.size() && !partial_tail && !lines.empty()) {
      json last = json::parse(lines.back(), nullptr, false);
      already_complete = !last.is_discarded() && last.value("type", "") == "mark" &&
                         last.at("data").value("label", "") == "run_complete";
    }
    result.cells_resumed = done_cells;
  }

  if (already_complete) {
    auto view = load_ledger(result.ledger_path);
    result.reports = compute_reports(view);
    result.failed_cells = failed_cells(view);
    result.exit_code = result.failed_cells.empty() ? kExitOk : kExitPartialFailure;
    return result;
  }

  {
    auto tmp = result.ledger_path;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << (kept.empty() ? [&] {
      std::string all;
      for (const auto& l : header_lines) all += l;
      return all;
    }() : kept);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out.close();
    fs::rename(tmp, result.ledger_path);
  }

  bool all_mock = std::all_of(config.models.begin(), config.models.end(), [](const ModelSpec& m) {
    return m.endpoint.backend_kind != BackendKind::http_chat;
  });
  Clock clock = options.clock ? *options.clock : (all_mock ? fixed_clock() : system_clock());

  std::vector<ModelEndpoint> endpoints;
  for (const auto& m : config.models) {
    endpoints.push_back(m.endpoint);
    endpoints.back().strict_parse = m.endpoint.strict_parse || config.strict_parse;
  }
  std::vector<std::unique_ptr<Backend>> backends;
  std::vector<std::unique_ptr<Semaphore>> gates;
  for (const auto& m : config.models) {
    backends.push_back(options.backend_factory ? options.backend_factory(m, ds) : make_backend(m, ds));
    gates.push_back(std::make_unique<Semaphore>(m.endpoint.max_in_flight));
  }
  std::optional<ResponseCache> cache;
  if (config.cache_dir) cache.emplace(*config.cache_dir);

  const std::size_t begin = done_cells;
  const std::size_t end =
      options.stop_after ? std::min(cells.size(), begin + *options.stop_after) : cells.size();
  const std::size_t seq0 = header_lines.size();

  std::mutex mu;
  std::condition_variable ready;
  std::map<std::size_t, std::pair<std::string, bool>> finished;  // index -> (line, failed)
  std::atomic<std::size_t> next{begin};
  std::atomic<std::uint64_t> cache_hits{0};

  auto run_cell = [&](std::size_t i) -> std::pair<std::string, bool> {
    const Cell& c = cells[i];
    const auto& ep = endpoints[c.model_index];
    QueryContext ctx{cache ? &*cache : nullptr, clock, c.country};
    std::string error;
    for (int attempt = 0;; ++attempt) {
      try {
        gates[c.model_index]->acquire();
        PredictionRecord rec;
        try {
          rec = query(ep, *backends[c.model_index], c.prompt, ctx);
        } catch (...) {
          gates[c.model_index]->release();
          throw;
        }
        gates[c.model_index]->release();
        if (rec.cached) cache_hits.fetch_add(1);
        json d;
        d["model_id"] = c.model_id;
        d["condition"] = c.condition;
        d["item_id"] = c.item_id;
        d["country"] = c.country;
        d["shown_name"] = rec.shown_name;
        d["prompt_hash"] = rec.prompt_hash;
        d["prediction"] = opt_number(rec.value);
        d["raw_text"] = rec.raw_text;
        d["parse_status"] = parse_status_name(rec.parse_status);
        d["retries_used"] = rec.retries_used;
        d["timestamp"] = rec.timestamp;
        d["actual"] = opt_number(c.actual);
        d["shown_actual"] = opt_number(c.shown_actual);
        return {event_line(run_id, seq0 + i, "prediction", std::move(d)),
                rec.parse_status == ParseStatus::failed};
      } catch (const RateLimitedError& e) {
        error = e.what();
        if (attempt >= ep.max_retries) break;
        std::this_thread::sleep_for(
            std::chrono::duration<double>(std::clamp(e.retry_after_seconds(), 0.0, 60.0)));
      } catch (const std::exception& e) {
        error = e.what();
        break;
      }
    }
    json d;
    d["model_id"] = c.model_id;
    d["condition"] = c.condition;
    d["item_id"] = c.item_id;
    d["country"] = c.country;
    d["error"] = error;
    return {event_line(run_id, seq0 + i, "cell_failed", std::move(d)), true};
  };

  std::vector<std::thread> workers;
  const auto n_workers = static_cast<std::size_t>(
      std::max<std::size_t>(1, std::min<std::size_t>(config.concurrency_limit, end - begin)));
  for (std::size_t w = 0; w < n_workers && begin < end; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
        auto outcome = run_cell(i);
        {
          std::lock_guard lock(mu);
          finished.emplace(i, std::move(outcome));
        }
        ready.notify_all();
      }
    });
  }

  {
    std::ofstream out(result.ledger_path, std::ios::binary | std::ios::app);
    for (std::size_t i = begin; i < end; ++i) {
      std::pair<std::string, bool> outcome;
      {
        std::unique_lock lock(mu);
        ready.wait(lock, [&] { return finished.count(i) > 0; });
        outcome = std::move(finished.at(i));
        finished.erase(i);
      }
      out << outcome.first;
      out.flush();
      ++result.cells_run;
    }
  }
  for (auto& t : workers) t.join();
  for (const auto& b : backends) result.backend_calls += b->calls();
  result.cache_hits = cache_hits.load();

  if (end < cells.size()) {
    result.exit_code = kExitInterrupted;
    return result;
  }

  // Reports are computed from the ledger alone.
  auto view = load_ledger(result.ledger_path);
  result.reports = compute_reports(view);
  {
    std::ofstream out(result.ledger_path, std::ios::binary | std::ios::app);
    std::size_t seq = seq0 + cells.size();
    out << event_line(run_id, seq++, "mark", json{{"label", "cells_complete"}, {"timestamp", clock()}});
    for (const auto& r : result.reports) out << event_line(run_id, seq++, "report", report_json(r));
    out << event_line(run_id, seq++, "mark", json{{"label", "run_complete"}, {"timestamp", clock()}});
    if (!out) throw Error(Errc::io_error, "cannot append to " + result.ledger_path.string());
  }
  result.failed_cells = failed_cells(view);
  result.exit_code = result.failed_cells.empty() ? kExitOk : kExitPartialFailure;

  auto files = render_report(load_ledger(result.ledger_path), ReportFormat::summary_table);
  for (const auto& [name, content] : files) {
    std::ofstream out(config.output_dir / name, std::ios::binary | std::ios::trunc);
    out << content;
  }
  json stats;
  stats["run_id"] = run_id;
  stats["cells_total"] = result.cells_total;
  stats["cells_resumed"] = result.cells_resumed;
  stats["cells_run"] = result.cells_run;
  stats["backend_calls"] = result.backend_calls;
  stats["cache_hits"] = result.cache_hits;
  stats["failed_cells"] = result.failed_cells;
  std::ofstream(config.output_dir / "run_stats.json", std::ios::trunc) << stats.dump(2) << "\n";
  return result;
}

}  // namespace pgh
