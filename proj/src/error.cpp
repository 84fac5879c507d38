#include "pgh/error.hpp"

namespace pgh {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::io_error: return "io-error";
    case Errc::file_not_found: return "file-not-found";
    case Errc::schema_mismatch: return "schema-mismatch";
    case Errc::value_out_of_range: return "value-out-of-range";
    case Errc::duplicate_country: return "duplicate-country";
    case Errc::unknown_country: return "unknown-country";
    case Errc::missing_field: return "missing-field";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::unknown_item: return "unknown-item";
    case Errc::unknown_field: return "unknown-field";
    case Errc::render_failure: return "render-failure";
    case Errc::unknown_ablation: return "unknown-ablation";
    case Errc::missing_willingness: return "missing-willingness";
    case Errc::missing_gdp: return "missing-gdp";
    case Errc::empty_pool: return "empty-pool";
    case Errc::transport_error: return "transport-error";
    case Errc::auth_error: return "auth-error";
    case Errc::rate_limited: return "rate-limited";
    case Errc::parse_failed: return "parse-failed";
    case Errc::cache_corruption: return "cache-corruption";
    case Errc::key_conflict: return "key-conflict";
    case Errc::zero_variance_column: return "zero-variance-column";
    case Errc::rank_deficient: return "rank-deficient";
    case Errc::insufficient_n: return "insufficient-n";
    case Errc::not_standardized: return "not-standardized";
    case Errc::empty_dataset: return "empty-dataset";
    case Errc::length_mismatch: return "length-mismatch";
    case Errc::empty_input: return "empty";
    case Errc::degenerate_variance: return "degenerate-variance";
    case Errc::key_mismatch: return "key-mismatch";
    case Errc::config_invalid: return "config-invalid";
    case Errc::missing_condition: return "missing-condition";
    case Errc::missing_view_inputs: return "missing-view-inputs";
    case Errc::ledger_mismatch: return "ledger-mismatch";
  }
  return "unknown";
}

}  // namespace pgh
