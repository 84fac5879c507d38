#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "pgh/prompt_engine.hpp"

namespace pgh {

enum class BackendKind { http_chat, mock_projection, mock_memorizer, mock_constant };

std::string_view backend_kind_name(BackendKind k) noexcept;
std::optional<BackendKind> parse_backend_kind(std::string_view s) noexcept;

/// Decoding is always greedy: there is no temperature knob to set.
struct ModelEndpoint {
  std::string model_id;
  BackendKind backend_kind = BackendKind::mock_constant;

  // http_chat only.
  std::string base_url;
  std::string model_name;
  /// Name of the environment variable holding the API key. The key itself
  /// is read at request time and never stored.
  std::string credentials_env;
  double timeout_seconds = 60.0;

  int max_retries = 3;
  double retry_backoff_seconds = 0.0;
  int max_in_flight = 4;
  bool strict_parse = false;

  // Mock agents.
  double constant_value = 42.0;
  double jitter_amplitude = 0.0;
  std::uint64_t seed = 0;

  static constexpr double temperature = 0.0;
};

enum class ParseStatus { ok, clamped, retried_ok, failed };

std::string_view parse_status_name(ParseStatus s) noexcept;
std::optional<ParseStatus> parse_parse_status(std::string_view s) noexcept;

/// Rounds half away from zero to one decimal.
double round_one_decimal(double v);

struct ParseResult {
  bool valid = false;
  std::optional<double> value;
  bool clamped = false;
};

/// Accepts {"prediction": <number>} as the whole response; unless strict,
/// also a bare number that is the whole trimmed response. The value is
/// rounded to one decimal, then clamped into [0, 100].
ParseResult parse_prediction(std::string_view raw, bool strict = false);

struct PredictionRecord {
  std::string model_id;
  /// The country whose data (and ground truth) the prompt carries.
  std::string country_name;
  /// The name printed in the prompt; differs under cf_name_mismatch.
  std::string shown_name;
  std::string item_id;
  PromptCondition condition = PromptCondition::stage(8);
  std::string prompt_hash;
  std::optional<double> value;
  std::string raw_text;
  ParseStatus parse_status = ParseStatus::failed;
  int retries_used = 0;
  bool cached = false;
  std::string timestamp;
};

/// A model that answers prompts with raw text. Implementations throw
/// Error(transport_error), Error(auth_error) or RateLimitedError.
class Backend {
 public:
  virtual ~Backend() = default;
  std::string complete(const ModelEndpoint& endpoint, const RenderedPrompt& prompt) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_complete(endpoint, prompt);
  }
  [[nodiscard]] std::uint64_t calls() const { return calls_.load(); }

 private:
  virtual std::string do_complete(const ModelEndpoint& endpoint,
                                  const RenderedPrompt& prompt) = 0;
  std::atomic<std::uint64_t> calls_{0};
};

inline constexpr double kGlobalBelievedShare = 43.0;

/// Social projection with a downward bias: 0.8 * own willingness - 10 plus
/// a small per-name jitter when willingness is shown; otherwise
/// 0.4 * HDI(x100) + 20 when HDI is shown; otherwise 43.
double mock_projection_predict(
    std::string_view shown_name,
    const std::vector<std::pair<Field, std::optional<double>>>& shown_values,
    double jitter_amplitude, std::uint64_t seed);

/// Table value for the name, ignoring covariates; 43 for unknown names.
double mock_memorizer_predict(const std::map<std::string, double, std::less<>>& table,
                              std::string_view country_name);

std::string format_prediction_json(double value);

class MockConstantBackend : public Backend {
 private:
  std::string do_complete(const ModelEndpoint& ep, const RenderedPrompt&) override;
};

class MockProjectionBackend : public Backend {
 private:
  std::string do_complete(const ModelEndpoint& ep, const RenderedPrompt& prompt) override;
};

class MockMemorizerBackend : public Backend {
 public:
  explicit MockMemorizerBackend(std::map<std::string, double, std::less<>> table)
      : table_(std::move(table)) {}

 private:
  std::string do_complete(const ModelEndpoint& ep, const RenderedPrompt& prompt) override;
  std::map<std::string, double, std::less<>> table_;
};

/// The response-level part of a prediction, keyed by (model, prompt hash).
/// Condition and country are not part of it: identical prompts share one
/// answer.
struct CachedResponse {
  std::string model_id;
  std::string prompt_hash;
  std::string raw_text;
  std::optional<double> value;
  ParseStatus parse_status = ParseStatus::ok;
  int retries_used = 0;

  friend bool operator==(const CachedResponse&, const CachedResponse&) = default;
};

/// One file per key: <dir>/<model>/<prompt_hash>.json holding the response
/// and a SHA-256 checksum of it. Entries are write-once; a second write of
/// identical bytes succeeds, different bytes raise key_conflict.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  [[nodiscard]] std::optional<CachedResponse> get(std::string_view model_id,
                                                  std::string_view prompt_hash) const;
  void put(const CachedResponse& entry) const;
  [[nodiscard]] std::filesystem::path path_for(std::string_view model_id,
                                               std::string_view prompt_hash) const;

  static std::string serialize(const CachedResponse& entry);
  static CachedResponse deserialize(std::string_view text);

 private:
  std::filesystem::path dir_;
};

/// Returns an ISO-8601 timestamp.
using Clock = std::function<std::string()>;
Clock fixed_clock(std::string stamp = "1970-01-01T00:00:00Z");
Clock system_clock();

struct QueryContext {
  const ResponseCache* cache = nullptr;
  Clock clock = fixed_clock();
  /// Owner of the data in the prompt; defaults to the shown name.
  std::string data_country;
};

/// Sends the prompt, re-sending the identical prompt up to max_retries
/// times while the answer does not parse (or the transport fails). A cache
/// hit returns without calling the backend. Parse exhaustion yields
/// parse_status == failed with the last raw text kept; transport errors
/// that outlast the retries, auth errors and rate limiting are thrown.
PredictionRecord query(const ModelEndpoint& endpoint, Backend& backend,
                       const RenderedPrompt& prompt, const QueryContext& ctx = {});

}  // namespace pgh
