#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace edgelab::csv {

/// Shortest round-trip-safe rendering at 17 significant digits, '.' decimal.
/// NaN and infinities are written as nan, inf, -inf.
std::string format_real(double x);

/// RFC 4180 field quoting (only when the field needs it).
std::string quote(const std::string& field);

/// Writes rows with a fixed header; every row must have the header's width.
class Writer {
 public:
  Writer(std::ostream& os, std::vector<std::string> header);

  void row(const std::vector<double>& values);
  /// Mixed row: pre-formatted string fields.
  void row_fields(const std::vector<std::string>& fields);

 private:
  std::ostream& os_;
  std::size_t width_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column position by name; throws ShapeError if absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

/// Reads a numeric CSV with one header row. Throws ShapeError on ragged rows
/// or unparsable fields (reporting the line number).
Table read(std::istream& is);

}  // namespace edgelab::csv
