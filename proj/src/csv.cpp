#include "moralprobe/csv.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "moralprobe/error.hpp"

namespace moralprobe::csv {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

}  // namespace

Table Table::parse(std::string_view text, std::string source) {
  Table table;
  table.source_ = std::move(source);

  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<Row> records;
  Row current;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = Row{};
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted)
          throw ParseError(table.source_, line, "unexpected quote inside field");
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        current.line = line;
        break;
      default:
        if (field_was_quoted)
          throw ParseError(table.source_, line, "characters after closing quote");
        field += c;
    }
  }
  if (in_quotes) throw ParseError(table.source_, line, "unterminated quoted field");
  if (!field.empty() || !current.fields.empty() || field_was_quoted) end_record();

  if (records.empty()) throw ParseError(table.source_, 1, "missing header");
  table.header_ = std::move(records.front().fields);
  records.erase(records.begin());
  for (const auto& row : records) {
    if (row.fields.size() != table.header_.size()) {
      throw ParseError(table.source_, row.line,
                       "expected " + std::to_string(table.header_.size()) +
                           " fields, found " + std::to_string(row.fields.size()));
    }
  }
  table.rows_ = std::move(records);
  return table;
}

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header_)
    if (h == name) return true;
  return false;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw ParseError(source_, 1, "missing column '" + std::string(name) + "'");
}

void Table::require_header(const std::vector<std::string>& expected) const {
  if (header_ != expected) {
    throw ParseError(source_, 1,
                     "expected header '" + join(expected) + "', found '" +
                         join(header_) + "'");
  }
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

double to_double(const Table& table, const Row& row, std::size_t col) {
  const std::string& s = row.fields.at(col);
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw ParseError(table.source(), row.line,
                     "column '" + table.header()[col] + "': not a number: '" + s + "'");
  return value;
}

long long to_integer(const Table& table, const Row& row, std::size_t col) {
  const std::string& s = row.fields.at(col);
  long long value = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw ParseError(table.source(), row.line,
                     "column '" + table.header()[col] + "': not an integer: '" + s + "'");
  return value;
}

}  // namespace moralprobe::csv
