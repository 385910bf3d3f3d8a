#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
/// newlines. A UTF-8 BOM on the first line is skipped, as are blank lines.
class Table {
 public:
  static Table parse(std::string_view text, std::string source = "<memory>");
  static Table read(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }

  /// Index of a header column, or throws ParseError on line 1.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

  /// Throws unless the header matches `expected` exactly.
  void require_header(const std::vector<std::string>& expected) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Whole-string numeric conversions; throw ParseError citing `row.line`.
double to_double(const Table& table, const Row& row, std::size_t col);
long long to_integer(const Table& table, const Row& row, std::size_t col);

}  // namespace moralprobe::csv
