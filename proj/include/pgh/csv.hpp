#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pgh::csv {

using Row = std::vector<std::string>;

/// Parses comma-separated UTF-8 text. Fields may be double-quoted, with ""
/// as an escaped quote; quoted fields may contain commas and newlines.
/// CRLF line endings and a leading byte-order mark are accepted. Blank
/// lines are skipped.
std::vector<Row> parse(std::string_view text);

/// Quotes a field only when it contains a comma, quote, or line break.
std::string escape(std::string_view field);

/// Joins one row, LF-terminated.
std::string format_row(const Row& row);

std::string read_file(const std::string& path);

}  // namespace pgh::csv
