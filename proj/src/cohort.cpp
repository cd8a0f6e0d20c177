#include "stopclock/cohort.hpp"

#include <set>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "stopclock/csv.hpp"
#include "stopclock/errors.hpp"
#include "stopclock/stmc.hpp"

namespace stopclock {

Cohort build_units(std::span<const SegmentedGame> games, int lambda, Side side) {
  require_lambda(lambda);
  Cohort out;
  for (const auto& game : games) {
    const auto windows = batch_stmc(game.instants, lambda, side);
    for (std::size_t i = 0; i < game.instants.size(); ++i) {
      const GameInstant& inst = game.instants[i];
      const WindowStats& w = windows[i];
      if (!w.valid) continue;

      int a = 0;
      if (inst.kind == InstantKind::possession) {
        a = 0;
      } else if (inst.kind == InstantKind::timeout && !inst.official && inst.side == to_team(side)) {
        a = 1;
      } else {
        continue;
      }
      Unit u;
      u.game_id = game.game_id;
      u.t = inst.t;
      u.side = side;
      u.a = a;
      u.q = inst.quarter;
      u.p = side == Side::home ? inst.margin_home : -inst.margin_home;
      u.s = inst.seconds_elapsed;
      u.dpre_num = w.dpre_num;
      u.y = w.y;
      (a == 1 ? out.treated : out.control_pool).push_back(std::move(u));
    }
  }
  return out;
}

std::vector<Unit> prefilter_controls(std::span<const Unit> treated, std::span<const Unit> control_pool) {
  std::set<std::pair<std::string_view, int>> keys;
  for (const auto& u : treated) keys.emplace(u.game_id, u.dpre_num);
  std::vector<Unit> kept;
  for (const auto& c : control_pool) {
    if (keys.contains({c.game_id, c.dpre_num})) kept.push_back(c);
  }
  return kept;
}

Subgroup parse_subgroup(std::string_view name) {
  if (name == "all") return Subgroup::all;
  if (name == "minus_last5" || name == "minus-last5") return Subgroup::minus_last5;
  if (name == "only_last5" || name == "only-last5") return Subgroup::only_last5;
  throw std::invalid_argument("unknown subgroup mode '" + std::string(name) + "'");
}

std::string_view to_string(Subgroup s) noexcept {
  switch (s) {
    case Subgroup::all:
      return "all";
    case Subgroup::minus_last5:
      return "minus_last5";
    case Subgroup::only_last5:
      break;
  }
  return "only_last5";
}

bool in_last_five_minutes(const Unit& u) noexcept { return u.q == 4 && u.s > 420.0; }

std::vector<Unit> subgroup_filter(std::span<const Unit> units, Subgroup mode) {
  std::vector<Unit> out;
  for (const auto& u : units) {
    const bool late = in_last_five_minutes(u);
    if (mode == Subgroup::all || (mode == Subgroup::minus_last5 && !late) || (mode == Subgroup::only_last5 && late)) {
      out.push_back(u);
    }
  }
  return out;
}

namespace {
constexpr std::string_view kUnitColumns[] = {"game_id", "t", "side", "a", "quarter", "seconds", "p_margin", "dpre_num", "y"};
}

void write_units_csv(std::ostream& out, std::span<const Unit> units) {
  csv::write_row(out, {std::begin(kUnitColumns), std::end(kUnitColumns)});
  for (const auto& u : units) {
    csv::write_row(out, {u.game_id, std::to_string(u.t), std::string(to_string(u.side)), std::to_string(u.a),
                         std::to_string(u.q), csv::format_double(u.s), std::to_string(u.p),
                         std::to_string(u.dpre_num), csv::format_double(u.y)});
  }
}

std::vector<Unit> read_units_csv(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw SchemaError("missing header");
  const csv::Header h(f, {std::begin(kUnitColumns), std::end(kUnitColumns)});
  std::vector<Unit> units;
  while (reader.next(f)) {
    const auto line = reader.line();
    Unit u;
    u.game_id = f[h["game_id"]];
    const auto t = csv::parse_int(f[h["t"]]);
    const auto a = csv::parse_int(f[h["a"]]);
    const auto q = csv::parse_int(f[h["quarter"]]);
    const auto s = csv::parse_double(f[h["seconds"]]);
    const auto p = csv::parse_int(f[h["p_margin"]]);
    const auto d = csv::parse_int(f[h["dpre_num"]]);
    const auto y = csv::parse_double(f[h["y"]]);
    if (!t || !a || !q || !s || !p || !d || !y) throw RowError(line, "non-numeric unit field");
    try {
      u.side = parse_side(f[h["side"]]);
    } catch (const std::invalid_argument& e) {
      throw RowError(line, e.what());
    }
    u.t = static_cast<int>(*t);
    u.a = static_cast<int>(*a);
    u.q = static_cast<int>(*q);
    u.s = *s;
    u.p = static_cast<int>(*p);
    u.dpre_num = static_cast<int>(*d);
    u.y = *y;
    units.push_back(std::move(u));
  }
  return units;
}

}  // namespace stopclock
