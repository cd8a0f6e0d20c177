#pragma once

// Play-by-play ingestion and game-instant segmentation.

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stopclock {

enum class Side : unsigned char { home, away };
enum class Team : unsigned char { home, away, neutral };

constexpr Side opposite(Side s) noexcept { return s == Side::home ? Side::away : Side::home; }
constexpr Team to_team(Side s) noexcept { return s == Side::home ? Team::home : Team::away; }
constexpr Team opposite(Team t) noexcept {
  return t == Team::home ? Team::away : t == Team::away ? Team::home : Team::neutral;
}
std::string_view to_string(Side s) noexcept;
std::string_view to_string(Team t) noexcept;
Side parse_side(std::string_view s);  // throws std::invalid_argument

constexpr double kRegulationPeriodSeconds = 720.0;
constexpr double kOvertimePeriodSeconds = 300.0;
constexpr double period_length(int period) noexcept {
  return period <= 4 ? kRegulationPeriodSeconds : kOvertimePeriodSeconds;
}

/// Seconds since the start of the period, to the millisecond.
inline double elapsed_seconds(int period, double clock_remaining) noexcept {
  return std::round((period_length(period) - clock_remaining) * 1000.0) / 1000.0;
}

enum class EventKind : unsigned char {
  shot_made,
  shot_missed,
  free_throw,
  rebound,
  turnover,
  foul,
  substitution,
  timeout,
  period_end,
  other,
};

struct PlayEvent {
  std::string game_id;
  int period = 1;
  double clock_remaining = 0.0;
  EventKind kind = EventKind::other;
  int points = 0;             // shot_made: field-goal value; free_throw: 1 when made
  bool made = false;          // free_throw
  bool last_in_trip = false;  // free_throw
  bool offensive = false;     // rebound
  bool official = false;      // timeout
  Team team = Team::neutral;
  std::string raw_text;
  std::size_t line = 0;  // source line, 0 when synthesized
};

struct Game {
  std::string game_id;
  std::vector<PlayEvent> events;
};

/// Parses the canonical play-by-play CSV
/// (`game_id,period,clock_remaining_s,event_kind,points,team,official,raw_text`).
/// Games keep first-appearance order; events within a game are stably sorted by
/// (period asc, clock desc). Throws SchemaError / RowError.
std::vector<Game> parse_pbp(std::istream& in);

/// Writes events back in the canonical schema (used by the simulator).
void write_pbp_header(std::ostream& out);
void write_pbp_event(std::ostream& out, const PlayEvent& ev);

enum class InstantKind : unsigned char { possession, timeout, period_end };

struct GameInstant {
  std::string game_id;
  int t = 0;
  InstantKind kind = InstantKind::possession;
  Team side = Team::neutral;  // offense for possessions, caller for timeouts
  bool official = false;
  int quarter = 1;
  double seconds_elapsed = 0.0;
  int margin_home = 0;

  bool is_interruption() const noexcept { return kind != InstantKind::possession; }
};

struct SegmentedGame {
  std::string game_id;
  std::vector<GameInstant> instants;
};

/// Largest margin swing a single possession may carry (three plus one).
constexpr int kMaxPossessionSwing = 4;

/// Splits one ordered game into possessions, timeouts and period ends.
/// Throws IntegrityError for games that cannot be segmented consistently.
std::vector<GameInstant> segment_instants(const Game& game);

/// P_t from the perspective of `side`.
std::vector<int> margin_series(std::span<const GameInstant> instants, Side side);

void write_instants_csv(std::ostream& out, std::span<const SegmentedGame> games);
std::vector<SegmentedGame> read_instants_csv(std::istream& in);

}  // namespace stopclock
