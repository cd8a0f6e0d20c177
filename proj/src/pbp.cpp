#include "stopclock/pbp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <unordered_map>

#include "stopclock/csv.hpp"
#include "stopclock/errors.hpp"

namespace stopclock {

std::string_view to_string(Side s) noexcept { return s == Side::home ? "home" : "away"; }

std::string_view to_string(Team t) noexcept {
  switch (t) {
    case Team::home:
      return "home";
    case Team::away:
      return "away";
    case Team::neutral:
      break;
  }
  return "neutral";
}

Side parse_side(std::string_view s) {
  if (s == "home") return Side::home;
  if (s == "away") return Side::away;
  throw std::invalid_argument("unknown side '" + std::string(s) + "'");
}

namespace {

constexpr std::string_view kPbpColumns[] = {"game_id", "period", "clock_remaining_s", "event_kind",
                                            "points",  "team",   "official",          "raw_text"};

std::optional<Team> parse_team(std::string_view s) {
  if (s == "home") return Team::home;
  if (s == "away") return Team::away;
  if (s.empty() || s == "neutral") return Team::neutral;
  return std::nullopt;
}

// Fills kind-specific fields; returns false for names outside the schema.
bool apply_event_kind(std::string_view name, PlayEvent& ev) {
  if (name == "shot_made") {
    ev.kind = EventKind::shot_made;
  } else if (name == "shot_missed") {
    ev.kind = EventKind::shot_missed;
  } else if (name == "free_throw_made") {
    ev.kind = EventKind::free_throw;
    ev.made = true;
  } else if (name == "free_throw_made_last") {
    ev.kind = EventKind::free_throw;
    ev.made = true;
    ev.last_in_trip = true;
  } else if (name == "free_throw_missed") {
    ev.kind = EventKind::free_throw;
  } else if (name == "rebound_off") {
    ev.kind = EventKind::rebound;
    ev.offensive = true;
  } else if (name == "rebound_def") {
    ev.kind = EventKind::rebound;
  } else if (name == "turnover") {
    ev.kind = EventKind::turnover;
  } else if (name == "foul") {
    ev.kind = EventKind::foul;
  } else if (name == "substitution") {
    ev.kind = EventKind::substitution;
  } else if (name == "timeout") {
    ev.kind = EventKind::timeout;
  } else if (name == "period_end") {
    ev.kind = EventKind::period_end;
  } else {
    ev.kind = EventKind::other;
    return name == "other";
  }
  return true;
}

std::string_view event_kind_name(const PlayEvent& ev) {
  switch (ev.kind) {
    case EventKind::shot_made:
      return "shot_made";
    case EventKind::shot_missed:
      return "shot_missed";
    case EventKind::free_throw:
      if (!ev.made) return "free_throw_missed";
      return ev.last_in_trip ? "free_throw_made_last" : "free_throw_made";
    case EventKind::rebound:
      return ev.offensive ? "rebound_off" : "rebound_def";
    case EventKind::turnover:
      return "turnover";
    case EventKind::foul:
      return "foul";
    case EventKind::substitution:
      return "substitution";
    case EventKind::timeout:
      return "timeout";
    case EventKind::period_end:
      return "period_end";
    case EventKind::other:
      break;
  }
  return "other";
}

PlayEvent parse_row(const std::vector<std::string>& f, const csv::Header& h, std::size_t line) {
  PlayEvent ev;
  ev.line = line;
  ev.game_id = f[h["game_id"]];
  if (ev.game_id.empty()) throw RowError(line, "empty game_id");

  const auto period = csv::parse_int(f[h["period"]]);
  if (!period) throw RowError(line, "non-numeric period '" + f[h["period"]] + "'");
  if (*period < 1) throw RowError(line, "period must be >= 1, got " + std::to_string(*period));
  ev.period = static_cast<int>(*period);

  const auto clock = csv::parse_double(f[h["clock_remaining_s"]]);
  if (!clock) throw RowError(line, "non-numeric clock '" + f[h["clock_remaining_s"]] + "'");
  if (*clock < 0.0 || *clock > period_length(ev.period)) {
    throw RowError(line, "clock " + f[h["clock_remaining_s"]] + " out of range for period " +
                             std::to_string(ev.period));
  }
  ev.clock_remaining = *clock;

  apply_event_kind(f[h["event_kind"]], ev);

  const std::string& pts = f[h["points"]];
  if (!pts.empty()) {
    const auto p = csv::parse_int(pts);
    if (!p) throw RowError(line, "non-numeric points '" + pts + "'");
    ev.points = static_cast<int>(*p);
  } else if (ev.kind == EventKind::shot_made) {
    throw RowError(line, "shot_made requires points");
  }
  if (ev.kind == EventKind::free_throw) {
    if (!pts.empty() && ev.made && ev.points != 1) throw RowError(line, "made free throw must be worth 1 point");
    ev.points = ev.made ? 1 : 0;
  } else if (ev.kind != EventKind::shot_made) {
    ev.points = 0;
  }

  const auto team = parse_team(f[h["team"]]);
  if (!team) throw RowError(line, "unknown team '" + f[h["team"]] + "'");
  ev.team = *team;

  const std::string& off = f[h["official"]];
  if (off == "1") {
    ev.official = true;
  } else if (!off.empty() && off != "0") {
    throw RowError(line, "official must be 0 or 1, got '" + off + "'");
  }
  if (ev.kind != EventKind::timeout) ev.official = false;

  ev.raw_text = f[h["raw_text"]];
  return ev;
}

}  // namespace

std::vector<Game> parse_pbp(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw SchemaError("missing header");
  const csv::Header header(fields, {std::begin(kPbpColumns), std::end(kPbpColumns)});
  const std::size_t width = fields.size();

  std::vector<Game> games;
  std::unordered_map<std::string, std::size_t> index;
  while (reader.next(fields)) {
    const std::size_t line = reader.line();
    if (fields.size() != width) {
      throw RowError(line, "expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    PlayEvent ev = parse_row(fields, header, line);
    auto [it, inserted] = index.try_emplace(ev.game_id, games.size());
    if (inserted) games.push_back(Game{ev.game_id, {}});
    games[it->second].events.push_back(std::move(ev));
  }
  for (auto& g : games) {
    std::stable_sort(g.events.begin(), g.events.end(), [](const PlayEvent& a, const PlayEvent& b) {
      if (a.period != b.period) return a.period < b.period;
      return a.clock_remaining > b.clock_remaining;
    });
  }
  return games;
}

void write_pbp_header(std::ostream& out) {
  csv::write_row(out, {std::begin(kPbpColumns), std::end(kPbpColumns)});
}

void write_pbp_event(std::ostream& out, const PlayEvent& ev) {
  const bool scoring = ev.kind == EventKind::shot_made || (ev.kind == EventKind::free_throw && ev.made);
  csv::write_row(out, {ev.game_id, std::to_string(ev.period), csv::format_double(ev.clock_remaining),
                       std::string(event_kind_name(ev)), scoring ? std::to_string(ev.points) : std::string(),
                       ev.team == Team::neutral ? std::string() : std::string(to_string(ev.team)),
                       ev.kind == EventKind::timeout ? (ev.official ? "1" : "0") : std::string(), ev.raw_text});
}

namespace {

class Segmenter {
 public:
  explicit Segmenter(const Game& game) : game_(game) {}

  std::vector<GameInstant> run() {
    int period_ends = 0;
    for (const PlayEvent& ev : game_.events) {
      if (!resolve_pending(ev)) continue;
      check_straddle(ev);
      process(ev);
      if (ev.kind == EventKind::period_end) ++period_ends;
    }
    if (period_ends == 0) fail("no period_end event");
    if (pending_ || open_) fail("events after the final period_end");
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw IntegrityError(game_.game_id, what); }

  [[noreturn]] void fail(const PlayEvent& ev, const std::string& what) const {
    throw IntegrityError(game_.game_id, "line " + std::to_string(ev.line) + ": " + what);
  }

  // Holds a made field goal open until it is clear whether an and-one trip follows.
  // Returns false when the event was fully consumed.
  bool resolve_pending(const PlayEvent& ev) {
    if (!pending_) return true;
    if (ev.kind == EventKind::foul || ev.kind == EventKind::substitution) return false;
    if (ev.kind == EventKind::free_throw && ev.team == *pending_) {
      pending_.reset();
      return true;
    }
    const Team scorer = *pending_;
    pending_.reset();
    close_possession(scorer, pending_period_, pending_clock_);
    if (ev.kind == EventKind::timeout) straddle_ = scorer;
    return true;
  }

  void check_straddle(const PlayEvent& ev) {
    if (!straddle_) return;
    switch (ev.kind) {
      case EventKind::foul:
      case EventKind::substitution:
      case EventKind::timeout:
        return;
      case EventKind::free_throw:
        if (ev.team == *straddle_) fail(ev, "free throw separated from its made field goal by a timeout");
        break;
      default:
        break;
    }
    straddle_.reset();
  }

  void add_points(const PlayEvent& ev) {
    if (ev.points < 0) fail(ev, "score decreasing");
    if (ev.team == Team::neutral) fail(ev, "scoring event without a team");
    (ev.team == Team::home ? home_ : away_) += ev.points;
  }

  void process(const PlayEvent& ev) {
    switch (ev.kind) {
      case EventKind::shot_made:
        if (ev.points < 0) fail(ev, "score decreasing");
        if (ev.points < 1 || ev.points > 3) fail(ev, "invalid field goal value " + std::to_string(ev.points));
        add_points(ev);
        open_ = true;
        offense_ = ev.team;
        pending_ = ev.team;
        pending_period_ = ev.period;
        pending_clock_ = ev.clock_remaining;
        break;
      case EventKind::shot_missed:
        open_ = true;
        if (ev.team != Team::neutral) offense_ = ev.team;
        break;
      case EventKind::free_throw:
        if (ev.made) add_points(ev);
        open_ = true;
        if (ev.made && ev.last_in_trip) {
          close_possession(ev.team != Team::neutral ? ev.team : offense_, ev.period, ev.clock_remaining, &ev);
        } else if (offense_ == Team::neutral && ev.team != Team::neutral) {
          offense_ = ev.team;
        }
        break;
      case EventKind::rebound:
        if (ev.offensive) {
          open_ = true;
          if (ev.team != Team::neutral) offense_ = ev.team;
        } else {
          const Team loser = ev.team != Team::neutral ? opposite(ev.team) : offense_;
          close_possession(loser, ev.period, ev.clock_remaining, &ev);
        }
        break;
      case EventKind::turnover:
        close_possession(ev.team != Team::neutral ? ev.team : offense_, ev.period, ev.clock_remaining, &ev);
        break;
      case EventKind::timeout:
        if (!ev.official && ev.team == Team::neutral) fail(ev, "timeout without a calling team");
        emit_interruption(InstantKind::timeout, ev.team, ev.official, ev.period,
                          elapsed_seconds(ev.period, ev.clock_remaining));
        break;
      case EventKind::period_end:
        if (open_ || home_ - away_ != recorded_margin_) {
          Team off = offense_;
          if (off == Team::neutral) off = opposite(last_offense_);
          close_possession(off, ev.period, ev.clock_remaining, &ev);
        }
        emit_interruption(InstantKind::period_end, Team::neutral, false, ev.period, elapsed_seconds(ev.period, 0.0));
        offense_ = Team::neutral;
        break;
      case EventKind::foul:
      case EventKind::substitution:
      case EventKind::other:
        break;
    }
  }

  void close_possession(Team offense, int period, double clock, const PlayEvent* ev = nullptr) {
    if (offense == Team::neutral) {
      if (ev) fail(*ev, "cannot determine which team had the possession");
      fail("cannot determine which team had the possession");
    }
    const int margin = home_ - away_;
    if (std::abs(margin - recorded_margin_) > kMaxPossessionSwing) {
      const std::string what = "possession margin swing " + std::to_string(margin - recorded_margin_) +
                               " exceeds " + std::to_string(kMaxPossessionSwing);
      if (ev) fail(*ev, what);
      fail(what);
    }
    GameInstant inst;
    inst.game_id = game_.game_id;
    inst.t = static_cast<int>(out_.size());
    inst.kind = InstantKind::possession;
    inst.side = offense;
    inst.quarter = period;
    inst.seconds_elapsed = elapsed_seconds(period, clock);
    inst.margin_home = margin;
    out_.push_back(std::move(inst));
    recorded_margin_ = margin;
    last_offense_ = offense;
    offense_ = Team::neutral;
    open_ = false;
  }

  void emit_interruption(InstantKind kind, Team side, bool official, int period, double elapsed) {
    GameInstant inst;
    inst.game_id = game_.game_id;
    inst.t = static_cast<int>(out_.size());
    inst.kind = kind;
    inst.side = side;
    inst.official = official;
    inst.quarter = period;
    inst.seconds_elapsed = elapsed;
    inst.margin_home = recorded_margin_;
    out_.push_back(std::move(inst));
  }

  const Game& game_;
  std::vector<GameInstant> out_;
  int home_ = 0;
  int away_ = 0;
  int recorded_margin_ = 0;
  bool open_ = false;
  Team offense_ = Team::neutral;
  Team last_offense_ = Team::neutral;
  std::optional<Team> pending_;
  int pending_period_ = 1;
  double pending_clock_ = 0.0;
  std::optional<Team> straddle_;
};

std::string_view instant_kind_name(InstantKind k) {
  switch (k) {
    case InstantKind::possession:
      return "possession";
    case InstantKind::timeout:
      return "timeout";
    case InstantKind::period_end:
      break;
  }
  return "period_end";
}

constexpr std::string_view kInstantColumns[] = {"game_id", "t",       "kind",           "caller",
                                                "official", "quarter", "seconds_elapsed", "margin_home"};

}  // namespace

std::vector<GameInstant> segment_instants(const Game& game) { return Segmenter(game).run(); }

std::vector<int> margin_series(std::span<const GameInstant> instants, Side side) {
  std::vector<int> p;
  p.reserve(instants.size());
  for (const auto& inst : instants) p.push_back(side == Side::home ? inst.margin_home : -inst.margin_home);
  return p;
}

void write_instants_csv(std::ostream& out, std::span<const SegmentedGame> games) {
  csv::write_row(out, {std::begin(kInstantColumns), std::end(kInstantColumns)});
  for (const auto& g : games) {
    for (const auto& inst : g.instants) {
      csv::write_row(out, {inst.game_id, std::to_string(inst.t), std::string(instant_kind_name(inst.kind)),
                           inst.kind == InstantKind::period_end ? std::string() : std::string(to_string(inst.side)),
                           inst.kind == InstantKind::timeout ? (inst.official ? "1" : "0") : std::string(),
                           std::to_string(inst.quarter), csv::format_double(inst.seconds_elapsed),
                           std::to_string(inst.margin_home)});
    }
  }
}

std::vector<SegmentedGame> read_instants_csv(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw SchemaError("missing header");
  const csv::Header h(f, {std::begin(kInstantColumns), std::end(kInstantColumns)});
  const std::size_t width = f.size();

  std::vector<SegmentedGame> games;
  std::unordered_map<std::string, std::size_t> index;
  while (reader.next(f)) {
    const std::size_t line = reader.line();
    if (f.size() != width) throw RowError(line, "unexpected field count");
    GameInstant inst;
    inst.game_id = f[h["game_id"]];
    const auto t = csv::parse_int(f[h["t"]]);
    const auto q = csv::parse_int(f[h["quarter"]]);
    const auto s = csv::parse_double(f[h["seconds_elapsed"]]);
    const auto m = csv::parse_int(f[h["margin_home"]]);
    if (!t || !q || !s || !m) throw RowError(line, "non-numeric instant field");
    if (*q < 1) throw RowError(line, "quarter must be >= 1");
    inst.t = static_cast<int>(*t);
    inst.quarter = static_cast<int>(*q);
    inst.seconds_elapsed = *s;
    inst.margin_home = static_cast<int>(*m);
    const std::string& kind = f[h["kind"]];
    if (kind == "possession") {
      inst.kind = InstantKind::possession;
    } else if (kind == "timeout") {
      inst.kind = InstantKind::timeout;
    } else if (kind == "period_end") {
      inst.kind = InstantKind::period_end;
    } else {
      throw RowError(line, "unknown instant kind '" + kind + "'");
    }
    const auto side = parse_team(f[h["caller"]]);
    if (!side) throw RowError(line, "unknown caller '" + f[h["caller"]] + "'");
    inst.side = *side;
    inst.official = f[h["official"]] == "1";

    auto [it, inserted] = index.try_emplace(inst.game_id, games.size());
    if (inserted) games.push_back(SegmentedGame{inst.game_id, {}});
    auto& g = games[it->second];
    if (inst.t != static_cast<int>(g.instants.size())) {
      throw RowError(line, "instant index " + std::to_string(inst.t) + " is not consecutive");
    }
    g.instants.push_back(std::move(inst));
  }
  return games;
}

}  // namespace stopclock
