#pragma once

// Plain comma-separated tables: no quoting, first line is the header.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dgrl::io {

// Shortest stable text for a double ("%.10g"); negative zero prints as 0.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // -1 when absent.
  int column(std::string_view name) const;
  std::vector<std::string> missing_columns(const std::vector<std::string>& required) const;
  // Throws ConfigError naming the column or the offending row.
  std::vector<double> numeric(std::string_view name) const;

  void add_row(std::vector<std::string> row);
  std::string to_text() const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace dgrl::io
