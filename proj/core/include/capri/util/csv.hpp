#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capri::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Index of a header column (case-insensitive), or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// Splits one CSV line. Supports double-quoted fields with "" escapes.
Row split_line(std::string_view line);

/// Parses CSV text. The first non-empty line is the header; blank lines are
/// skipped. Lines ending in '\r' are trimmed.
Table parse(std::string_view text);

Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace capri::csv
