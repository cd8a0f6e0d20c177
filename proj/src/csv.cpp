#include "stopclock/csv.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "stopclock/errors.hpp"

namespace stopclock::csv {

bool Reader::next(std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool field_was_quoted = false;
  record_line_ = line_ + 1;

  for (;;) {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      if (in_quotes) throw RowError(record_line_, "unterminated quoted field");
      if (!any) return false;
      fields.push_back(std::move(field));
      ++line_;
      return true;
    }
    any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field.empty() && !field_was_quoted) {
          in_quotes = true;
          field_was_quoted = true;
        } else {
          field.push_back(ch);
        }
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        break;
      case '\r':
        if (in_.peek() == '\n') break;
        field.push_back(ch);
        break;
      case '\n':
        ++line_;
        if (fields.empty() && field.empty() && !field_was_quoted) {
          // blank line
          record_line_ = line_ + 1;
          any = false;
          break;
        }
        fields.push_back(std::move(field));
        return true;
      default:
        field.push_back(ch);
    }
  }
}

Header::Header(const std::vector<std::string>& names, const std::vector<std::string_view>& required) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string name = names[i];
    // tolerate a UTF-8 BOM on the first column
    if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.erase(0, 3);
    index_.emplace(std::move(name), i);
  }
  for (auto col : required) {
    if (!index_.contains(std::string(col))) {
      throw SchemaError("missing required column '" + std::string(col) + "'");
    }
  }
}

std::size_t Header::operator[](std::string_view name) const {
  return index_.at(std::string(name));
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
      out << f;
      continue;
    }
    out << '"';
    for (char ch : f) {
      if (ch == '"') out << '"';
      out << ch;
    }
    out << '"';
  }
  out << '\n';
}

std::string format_double(double v) {
  if (v == 0.0) return "0";
  return fmt::format("{}", v);
}

std::optional<long long> parse_int(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace stopclock::csv
