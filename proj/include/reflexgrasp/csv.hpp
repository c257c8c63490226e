#pragma once

#include <string>
#include <vector>

namespace reflex {

/// Minimal RFC 4180 writer; fields containing commas, quotes or newlines are
/// quoted. Output uses '\n' line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return buf_; }
  std::size_t columns() const { return columns_; }

 private:
  void append(const std::vector<std::string>& fields);

  std::string buf_;
  std::size_t columns_;
};

/// Parses text produced by CsvWriter (header included as row 0).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Shortest decimal form that round-trips through strtod.
std::string format_double(double v);

}  // namespace reflex
