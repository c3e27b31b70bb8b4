#include "ecodyn/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ecodyn::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError("missing column '" + std::string(name) + "'", 1);
}

namespace {

// Reads one record; false at end of input. `line` tracks physical lines.
bool read_record(std::istream& in, std::vector<std::string>& fields, long& line) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  const long start = line + 1;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted)
        throw ParseError("stray quote in field on line " + std::to_string(start), start);
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\r') {
      if (in.peek() != '\n') field += c;
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      if (was_quoted)
        throw ParseError("text after closing quote on line " + std::to_string(start), start);
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote starting on line " + std::to_string(start), start);
  ++line;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

Table read(std::istream& in) {
  Table table;
  long line = 0;
  std::string text;
  // comments and blank lines before the header
  while (in.peek() == '#' || in.peek() == '\n' || in.peek() == '\r') {
    std::getline(in, text);
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    text.erase(0, 1);
    if (!text.empty() && text.front() == ' ') text.erase(0, 1);
    table.comments.push_back(text);
  }
  if (!read_record(in, table.header, line)) throw ParseError("empty table: no header", line);
  if (!table.header.empty() && table.header.front().starts_with("\xEF\xBB\xBF"))
    table.header.front().erase(0, 3);
  std::vector<std::string> fields;
  while (read_record(in, fields, line)) {
    if (fields.size() == 1 && fields.front().empty()) continue;  // blank line
    if (fields.size() != table.header.size())
      throw ParseError("line " + std::to_string(line) + ": expected " +
                           std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line);
    table.rows.push_back(fields);
  }
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  try {
    return read(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
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
    out << quote(fields[i]);
  }
  out << '\n';
}

void write(std::ostream& out, const Table& table) {
  for (const auto& c : table.comments) out << "# " << c << '\n';
  write_row(out, table.header);
  for (const auto& r : table.rows) write_row(out, r);
}

void write_file(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write(out, table);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan" || text == "NaN") return std::nan("");
  if (text == "inf") return HUGE_VAL;
  if (text == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const char* first = text.data();
  if (!text.empty() && text.front() == '+') ++first;
  const auto res = std::from_chars(first, text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return v;
}

long parse_long(std::string_view text) {
  long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
  return v;
}

}  // namespace ecodyn::csv
