#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probloc::cli {

/// Writes one RFC-4180 record terminated by CRLF. Fields containing commas,
/// quotes or line breaks are quoted.
void write_csv_record(std::ostream& os, std::span<const std::string> fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws kMissingColumn.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Parses an RFC-4180 document (CRLF or LF line endings). The first record is
/// the header; every record must have the header's width.
CsvTable read_csv(std::istream& is);

/// Strict number parsing; throws kInvalidArgument naming the column.
double parse_double(std::string_view text, std::string_view column);
long long parse_int(std::string_view text, std::string_view column);

}  // namespace probloc::cli
