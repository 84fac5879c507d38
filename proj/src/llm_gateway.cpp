#include "pgh/llm_gateway.hpp"

#include <fmt/format.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "pgh/error.hpp"
#include "pgh/hash.hpp"
#include "pgh/rng.hpp"

namespace pgh {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> bare_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sanitize(std::string_view id) {
  std::string out;
  for (char c : id) {
    bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                c == '-' || c == '_' || c == '.';
    out.push_back(keep ? c : '_');
  }
  return out;
}

json payload_json(const CachedResponse& e) {
  json j;
  j["model_id"] = e.model_id;
  j["prompt_hash"] = e.prompt_hash;
  j["raw_text"] = e.raw_text;
  j["value"] = e.value ? json(*e.value) : json(nullptr);
  j["parse_status"] = parse_status_name(e.parse_status);
  j["retries_used"] = e.retries_used;
  return j;
}

}  // namespace

std::string_view backend_kind_name(BackendKind k) noexcept {
  switch (k) {
    case BackendKind::http_chat: return "http_chat";
    case BackendKind::mock_projection: return "mock_projection";
    case BackendKind::mock_memorizer: return "mock_memorizer";
    case BackendKind::mock_constant: return "mock_constant";
  }
  return "unknown";
}

std::optional<BackendKind> parse_backend_kind(std::string_view s) noexcept {
  for (auto k : {BackendKind::http_chat, BackendKind::mock_projection,
                 BackendKind::mock_memorizer, BackendKind::mock_constant}) {
    if (backend_kind_name(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view parse_status_name(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::clamped: return "clamped";
    case ParseStatus::retried_ok: return "retried_ok";
    case ParseStatus::failed: return "failed";
  }
  return "failed";
}

std::optional<ParseStatus> parse_parse_status(std::string_view s) noexcept {
  for (auto st : {ParseStatus::ok, ParseStatus::clamped, ParseStatus::retried_ok,
                  ParseStatus::failed}) {
    if (parse_status_name(st) == s) return st;
  }
  return std::nullopt;
}

double round_one_decimal(double v) {
  double scaled = v * 10.0;
  // Decimal ties such as 7.25 are stored a hair below the tie in binary.
  double nudged = scaled + std::copysign(std::abs(scaled) * 1e-12 + 1e-9, scaled);
  double r = std::round(nudged) / 10.0;
  return r == 0.0 ? 0.0 : r;
}

ParseResult parse_prediction(std::string_view raw, bool strict) {
  auto text = trim(raw);
  std::optional<double> number;

  auto doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (!doc.is_discarded() && doc.is_object() && doc.size() == 1 && doc.contains("prediction")) {
    const auto& v = doc["prediction"];
    if (v.is_number() && std::isfinite(v.get<double>())) number = v.get<double>();
  } else if (!strict) {
    number = bare_number(text);
  }
  if (!number) return {};

  ParseResult r;
  r.valid = true;
  double rounded = round_one_decimal(*number);
  if (rounded < 0.0 || rounded > 100.0) {
    r.clamped = true;
    rounded = std::clamp(rounded, 0.0, 100.0);
  }
  r.value = rounded;
  return r;
}

std::string format_prediction_json(double value) {
  return fmt::format("{{\"prediction\": {:.1f}}}", round_one_decimal(value));
}

double mock_projection_predict(
    std::string_view shown_name,
    const std::vector<std::pair<Field, std::optional<double>>>& shown_values,
    double jitter_amplitude, std::uint64_t seed) {
  auto shown = [&](Field f) -> std::optional<double> {
    for (const auto& [field, value] : shown_values) {
      if (field == f) return value;
    }
    return std::nullopt;
  };
  if (auto w = shown(Field::willing_1pct)) {
    double jitter = 0.0;
    if (jitter_amplitude != 0.0) {
      Rng rng(derive_seed(seed, fnv1a(shown_name)));
      jitter = jitter_amplitude * (2.0 * rng.uniform01() - 1.0);
    }
    return std::clamp(0.8 * *w - 10.0 + jitter, 0.0, 100.0);
  }
  if (auto hdi = shown(Field::hdi_2021)) {
    return std::clamp(0.4 * (*hdi * 100.0) + 20.0, 0.0, 100.0);
  }
  return kGlobalBelievedShare;
}

double mock_memorizer_predict(const std::map<std::string, double, std::less<>>& table,
                              std::string_view country_name) {
  auto it = table.find(country_name);
  return it == table.end() ? kGlobalBelievedShare : it->second;
}

std::string MockConstantBackend::do_complete(const ModelEndpoint& ep, const RenderedPrompt&) {
  return format_prediction_json(ep.constant_value);
}

std::string MockProjectionBackend::do_complete(const ModelEndpoint& ep,
                                               const RenderedPrompt& prompt) {
  return format_prediction_json(mock_projection_predict(
      prompt.country_name, prompt.shown_values, ep.jitter_amplitude, ep.seed));
}

std::string MockMemorizerBackend::do_complete(const ModelEndpoint&, const RenderedPrompt& prompt) {
  return format_prediction_json(mock_memorizer_predict(table_, prompt.country_name));
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(std::string_view model_id,
                                              std::string_view prompt_hash) const {
  auto model_dir = sanitize(model_id) + "-" + sha256_hex(model_id).substr(0, 8);
  return dir_ / model_dir / (std::string(prompt_hash) + ".json");
}

std::string ResponseCache::serialize(const CachedResponse& entry) {
  json j = payload_json(entry);
  j["checksum"] = sha256_hex(payload_json(entry).dump());
  return j.dump() + "\n";
}

CachedResponse ResponseCache::deserialize(std::string_view text) {
  auto j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("checksum")) {
    throw Error(Errc::cache_corruption, "entry is not a checksummed object");
  }
  try {
    CachedResponse e;
    e.model_id = j.at("model_id").get<std::string>();
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    e.raw_text = j.at("raw_text").get<std::string>();
    if (!j.at("value").is_null()) e.value = j.at("value").get<double>();
    auto status = parse_parse_status(j.at("parse_status").get<std::string>());
    if (!status) throw Error(Errc::cache_corruption, "bad parse_status");
    e.parse_status = *status;
    e.retries_used = j.at("retries_used").get<int>();
    if (sha256_hex(payload_json(e).dump()) != j.at("checksum").get<std::string>()) {
      throw Error(Errc::cache_corruption, "checksum mismatch for " + e.prompt_hash);
    }
    return e;
  } catch (const json::exception& ex) {
    throw Error(Errc::cache_corruption, ex.what());
  }
}

std::optional<CachedResponse> ResponseCache::get(std::string_view model_id,
                                                 std::string_view prompt_hash) const {
  auto path = path_for(model_id, prompt_hash);
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto entry = deserialize(read_all(path));
  if (entry.model_id != model_id || entry.prompt_hash != prompt_hash) {
    throw Error(Errc::cache_corruption, "entry key does not match its file name: " + path.string());
  }
  return entry;
}

void ResponseCache::put(const CachedResponse& entry) const {
  namespace fs = std::filesystem;
  auto path = path_for(entry.model_id, entry.prompt_hash);
  auto bytes = serialize(entry);

  auto check_existing = [&] {
    if (read_all(path) != bytes) {
      throw Error(Errc::key_conflict,
                  fmt::format("{} / {} already cached with different content", entry.model_id,
                              entry.prompt_hash));
    }
  };
  if (fs::exists(path)) {
    check_existing();
    return;
  }
  fs::create_directories(path.parent_path());

  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  tmp += fmt::format(".{}.{}.tmp", std::hash<std::thread::id>{}(std::this_thread::get_id()),
                     counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << bytes;
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
  }
  // A hard link publishes the complete file atomically and fails if
  // another writer got there first.
  std::error_code ec;
  fs::create_hard_link(tmp, path, ec);
  fs::remove(tmp);
  if (ec) {
    if (!fs::exists(path)) throw Error(Errc::io_error, "cannot publish " + path.string());
    check_existing();
  }
}

Clock fixed_clock(std::string stamp) {
  return [stamp = std::move(stamp)] { return stamp; };
}

Clock system_clock() {
  return [] {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
}

PredictionRecord query(const ModelEndpoint& endpoint, Backend& backend,
                       const RenderedPrompt& prompt, const QueryContext& ctx) {
  PredictionRecord rec;
  rec.model_id = endpoint.model_id;
  rec.country_name = ctx.data_country.empty() ? prompt.country_name : ctx.data_country;
  rec.shown_name = prompt.country_name;
  rec.item_id = prompt.item_id;
  rec.condition = prompt.condition;
  rec.prompt_hash = prompt.content_hash;

  if (ctx.cache) {
    if (auto hit = ctx.cache->get(endpoint.model_id, prompt.content_hash)) {
      rec.value = hit->value;
      rec.raw_text = hit->raw_text;
      rec.parse_status = hit->parse_status;
      rec.retries_used = hit->retries_used;
      rec.cached = true;
      rec.timestamp = ctx.clock();
      return rec;
    }
  }

  std::string last_raw;
  for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0 && endpoint.retry_backoff_seconds > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(
          endpoint.retry_backoff_seconds * std::pow(2.0, attempt - 1)));
    }
    std::string raw;
    try {
      raw = backend.complete(endpoint, prompt);
    } catch (const Error& e) {
      if (e.code() != Errc::transport_error || attempt == endpoint.max_retries) throw;
      continue;
    }
    auto parsed = parse_prediction(raw, endpoint.strict_parse);
    if (!parsed.valid) {
      last_raw = std::move(raw);
      continue;
    }
    rec.value = parsed.value;
    rec.raw_text = std::move(raw);
    rec.retries_used = attempt;
    rec.parse_status = parsed.clamped   ? ParseStatus::clamped
                       : attempt > 0    ? ParseStatus::retried_ok
                                        : ParseStatus::ok;
    rec.timestamp = ctx.clock();
    if (ctx.cache) {
      ctx.cache->put({endpoint.model_id, rec.prompt_hash, rec.raw_text, rec.value,
                      rec.parse_status, rec.retries_used});
    }
    return rec;
  }

  rec.raw_text = std::move(last_raw);
  rec.retries_used = endpoint.max_retries;
  rec.parse_status = ParseStatus::failed;
  rec.timestamp = ctx.clock();
  return rec;
}

}  // namespace pgh
