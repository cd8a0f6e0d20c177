#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stopclock {

/// Input table is missing a required column or has an unreadable header.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// A single CSV row failed validation. `line()` is 1-based and counts the header.
class RowError : public std::runtime_error {
 public:
  RowError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A game's event stream is internally inconsistent (no period end, impossible score jump, ...).
class IntegrityError : public std::runtime_error {
 public:
  IntegrityError(const std::string& game_id, const std::string& what)
      : std::runtime_error("game " + game_id + ": " + what), game_id_(game_id) {}
  const std::string& game_id() const noexcept { return game_id_; }

 private:
  std::string game_id_;
};

class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stopclock
