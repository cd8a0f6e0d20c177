#pragma once

// Treated/control unit construction and the subgroup filters.

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stopclock/pbp.hpp"

namespace stopclock {

/// A matchable instant seen from one side's perspective.
struct Unit {
  std::string game_id;
  int t = 0;
  Side side = Side::home;
  int a = 0;         // 1 = non-official timeout called by `side`, 0 = possession
  int q = 1;         // quarter
  int p = 0;         // margin P_t
  double s = 0.0;    // seconds since the start of the quarter
  int dpre_num = 0;  // P[t-1] - P[t-lambda-1]
  double y = 0.0;    // STMC outcome
};

struct Cohort {
  std::vector<Unit> treated;
  std::vector<Unit> control_pool;
};

/// Treated: valid non-official timeouts called by `side`. Controls: valid
/// possessions of every game. Both carry `side`'s perspective.
Cohort build_units(std::span<const SegmentedGame> games, int lambda, Side side);

/// Keeps a control only if a treated unit of the same game shares its dpre_num.
std::vector<Unit> prefilter_controls(std::span<const Unit> treated, std::span<const Unit> control_pool);

enum class Subgroup : unsigned char { all, minus_last5, only_last5 };

Subgroup parse_subgroup(std::string_view name);  // throws std::invalid_argument
std::string_view to_string(Subgroup s) noexcept;

/// Last five minutes of the game are Q = 4 and S > 420. Overtime never qualifies.
bool in_last_five_minutes(const Unit& u) noexcept;

std::vector<Unit> subgroup_filter(std::span<const Unit> units, Subgroup mode);

void write_units_csv(std::ostream& out, std::span<const Unit> units);
std::vector<Unit> read_units_csv(std::istream& in);

}  // namespace stopclock
