#include "gfast/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gfast/errors.hpp"

namespace gfast {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
  if (!out_) throw Error("cannot write " + path.string());
  for (const auto& h : header) *this << h;
  end_row();
}

void CsvWriter::put(const std::string& text) {
  if (in_row_ > 0) out_ << ',';
  out_ << text;
  ++in_row_;
}

CsvWriter& CsvWriter::operator<<(double value) {
  put(format_number(value));
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::int64_t value) {
  put(std::to_string(value));
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::uint64_t value) {
  put(std::to_string(value));
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view value) {
  put(csv_escape(value));
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw Error(path_.string() + ": row has " + std::to_string(in_row_) + " fields, header has " +
                std::to_string(columns_));
  out_ << '\n';
  in_row_ = 0;
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw Error("failed writing " + path_.string());
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError(source + ": missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing artifact " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
      records.push_back(std::move(record));
      record.clear();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw FormatError(path.string() + ": unterminated quoted field");
  if (field_started || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw FormatError(path.string() + ": empty file");

  CsvTable table;
  table.source = path.string();
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw FormatError(path.string() + ": row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                        " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

double parse_number(const std::string& cell, const std::string& where) {
  if (cell == "nan") return std::nan("");
  if (cell == "inf") return INFINITY;
  if (cell == "-inf") return -INFINITY;
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty()) throw FormatError(where + ": not a number: '" + cell + "'");
  return v;
}

}  // namespace gfast
