#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iqa::detail {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> cells;
};

/// Minimal RFC 4180 reader: comma separated, optional double quotes, CRLF or
/// LF line endings. Blank lines are skipped. A leading UTF-8 BOM is dropped.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_escape(std::string_view cell);

/// Strict numeric parse of a whole cell (surrounding spaces allowed).
bool parse_double(std::string_view cell, double& out);

std::string_view trim(std::string_view s);

}  // namespace iqa::detail
