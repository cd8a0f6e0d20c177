#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stopclock::csv {

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record. Returns false at end of input.
  bool next(std::vector<std::string>& fields);

  /// Line on which the most recently returned record started (1-based).
  std::size_t line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

/// Maps header names to column positions; throws SchemaError naming the first
/// missing column.
class Header {
 public:
  Header(const std::vector<std::string>& names, const std::vector<std::string_view>& required);
  std::size_t operator[](std::string_view name) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest round-trippable decimal form ("%.17g" trimmed where exact).
std::string format_double(double v);

std::optional<long long> parse_int(std::string_view s);
std::optional<double> parse_double(std::string_view s);

}  // namespace stopclock::csv
