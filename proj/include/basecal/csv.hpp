#pragma once

// Minimal RFC 4180 CSV: header row, comma separator, '.' decimals, fields
// quoted only when they contain a comma, quote or newline.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace basecal::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  // Index of `name` in the header; throws FormatError if absent.
  std::size_t column(const std::string& name) const;
};

// 17 significant digits; parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& s);

void write_row(std::ostream& out, const Row& row);
std::string to_string(const Table& table);
void write_file(const std::filesystem::path& path, const Table& table);

Table parse(const std::string& text);
Table read_file(const std::filesystem::path& path);

}  // namespace basecal::csv
