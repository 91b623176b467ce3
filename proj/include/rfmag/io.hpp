#pragma once

// CSV and number formatting. Numbers use the shortest round-trip representation,
// so identical values always produce identical bytes.

#include <string>
#include <vector>

namespace rfmag::io {

std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws std::invalid_argument
  std::vector<double> values(std::size_t column) const;
};

/// Comma separated, header row, LF line endings.
std::string to_csv(const CsvTable& table);

/// Parses a numeric CSV with a header row. Throws std::invalid_argument with the
/// offending line number on malformed input.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::string& path);

std::string read_text_file(const std::string& path);

}  // namespace rfmag::io
