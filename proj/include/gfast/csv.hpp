#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace gfast {

/// Formats a double with 17 significant digits ("%.17g"), so values round-trip exactly.
std::string format_number(double value);

/// RFC 4180 field quoting: quotes a field containing a comma, quote or line break.
std::string csv_escape(std::string_view field);

/// Row-at-a-time CSV output with "\n" line endings.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& operator<<(double value);
  CsvWriter& operator<<(std::int64_t value);
  CsvWriter& operator<<(std::uint64_t value);
  CsvWriter& operator<<(int value) { return *this << static_cast<std::int64_t>(value); }
  CsvWriter& operator<<(bool value) { return *this << static_cast<std::int64_t>(value ? 1 : 0); }
  CsvWriter& operator<<(std::string_view value);
  CsvWriter& operator<<(const char* value) { return *this << std::string_view(value); }
  CsvWriter& operator<<(const std::string& value) { return *this << std::string_view(value); }
  /// Ends the current row; throws if its width differs from the header.
  void end_row();
  void close();

 private:
  void put(const std::string& text);

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws FormatError naming the file when missing.
  std::size_t column(std::string_view name) const;
  std::string source;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Strict numeric parse of a CSV cell; throws FormatError on garbage.
double parse_number(const std::string& cell, const std::string& where);

}  // namespace gfast
