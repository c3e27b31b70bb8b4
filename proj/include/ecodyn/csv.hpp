#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ecodyn::csv {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line) : std::runtime_error(what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// A headered table of strings. Lines starting with '#' before the header are
/// provenance comments and are kept separately.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws ParseError naming it when absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 reading: quoted fields may hold commas, quotes ("") and newlines.
/// Every row must have as many fields as the header.
Table read(std::istream& in);
Table read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string quote(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);
/// Comments first (each prefixed "# "), then header and rows; LF line endings.
void write(std::ostream& out, const Table& table);
void write_file(const std::string& path, const Table& table);

/// Shortest round-trip decimal form; "nan" and "inf" / "-inf" for non-finite.
std::string format_double(double value);
/// Strict parse of a whole field; throws std::invalid_argument otherwise.
double parse_double(std::string_view text);
long parse_long(std::string_view text);

}  // namespace ecodyn::csv
