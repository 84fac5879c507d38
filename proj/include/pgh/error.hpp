#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pgh {

enum class Errc {
  io_error,
  file_not_found,
  schema_mismatch,
  value_out_of_range,
  duplicate_country,
  unknown_country,
  missing_field,
  insufficient_data,
  unknown_item,
  unknown_field,
  render_failure,
  unknown_ablation,
  missing_willingness,
  missing_gdp,
  empty_pool,
  transport_error,
  auth_error,
  rate_limited,
  parse_failed,
  cache_corruption,
  key_conflict,
  zero_variance_column,
  rank_deficient,
  insufficient_n,
  not_standardized,
  empty_dataset,
  length_mismatch,
  empty_input,
  degenerate_variance,
  key_mismatch,
  config_invalid,
  missing_condition,
  missing_view_inputs,
  ledger_mismatch,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class RateLimitedError : public Error {
 public:
  RateLimitedError(const std::string& message, double retry_after_seconds)
      : Error(Errc::rate_limited, message),
        retry_after_(retry_after_seconds) {}

  [[nodiscard]] double retry_after_seconds() const noexcept {
    return retry_after_;
  }

 private:
  double retry_after_;
};

}  // namespace pgh
