#include "stopclock/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "stopclock/parallel.hpp"
#include "stopclock/rng.hpp"

namespace stopclock {

void SimConfig::validate() const {
  double total = 0.0;
  for (double p : score_dist) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("score probabilities must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("score probabilities must sum to 1");
  const auto& pol = policy;
  if (!(pol.pi0 >= 0.0 && pol.pi1 <= 1.0 && pol.pi0 <= pol.pi1)) {
    throw std::invalid_argument("call probabilities need 0 <= pi0 <= pi1 <= 1");
  }
  if (!(std::abs(delta) <= 1.0)) throw std::invalid_argument("|delta| must not exceed 1");
  if (lambda < 2 || lambda % 2 != 0) throw std::invalid_argument("lambda must be a positive even integer");
  if (policy.window < 1) throw std::invalid_argument("policy window must be positive");
  if (policy.cooldown < 0) throw std::invalid_argument("cooldown must be non-negative");
  if (possessions_per_quarter < 1) throw std::invalid_argument("possessions_per_quarter must be positive");
  if (timeouts_per_half < 0) throw std::invalid_argument("timeouts_per_half must be non-negative");
  for (std::size_t i = 0; i < official_marks.size(); ++i) {
    const double m = official_marks[i];
    if (!(m > 0.0 && m < kRegulationPeriodSeconds)) throw std::invalid_argument("official marks must lie in (0, 720)");
    if (i > 0 && !(m < official_marks[i - 1])) throw std::invalid_argument("official marks must be decreasing");
  }
}

double true_te(const SimConfig& config) {
  config.validate();
  return config.delta;
}

namespace {

constexpr int kQuarters = 4;

int draw_points(Rng& rng, const std::array<double, 4>& dist) {
  double u = rng.uniform();
  for (int k = 0; k < 3; ++k) {
    if (u < dist[k]) return k;
    u -= dist[k];
  }
  return 3;
}

// Extra point from an active timeout effect: +1 for the caller when delta > 0,
// +1 for the opponent when delta < 0. The uniform is always consumed.
Team effect_point(Rng& rng, double delta, Team caller, bool active) {
  const double u = rng.uniform();
  if (!active || u >= std::abs(delta)) return Team::neutral;
  return delta > 0 ? caller : opposite(caller);
}

class GameSim {
 public:
  GameSim(const SimConfig& cfg, std::size_t index)
      : cfg_(cfg), rng_(cfg.seed, index), id_(fmt::format("SIM{:06d}", index + 1)) {
    game_.game_id = id_;
    seg_.game_id = id_;
  }

  void run() {
    Team offense = rng_.bernoulli(0.5) ? Team::home : Team::away;
    for (int q = 1; q <= kQuarters; ++q) {
      const auto clocks = possession_clocks();
      std::size_t mark = 0;
      bool segment_timeout = false;
      const int possessions = 2 * cfg_.possessions_per_quarter;
      for (int i = 0; i < possessions; ++i) {
        const double clock = clocks[i];
        possession(q, clock, offense);
        offense = opposite(offense);
        if (i + 1 == possessions) break;
        const bool called = team_timeouts(q, clock);
        segment_timeout = segment_timeout || called;
        if (mark < cfg_.official_marks.size() && clock <= cfg_.official_marks[mark]) {
          if (!segment_timeout) official_timeout(q, clock);
          ++mark;
          segment_timeout = false;
        }
      }
      push_event(q, 0.0, EventKind::period_end, Team::neutral, "end of period");
      push_instant(InstantKind::period_end, Team::neutral, false, q, 0.0);
    }
  }

  Game game_;
  SegmentedGame seg_;
  std::vector<TimeoutRecord> timeouts_;

 private:
  std::vector<double> possession_clocks() {
    const auto n = static_cast<std::size_t>(2 * cfg_.possessions_per_quarter);
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) {
      x = 0.5 + rng_.uniform();
      total += x;
    }
    std::vector<double> clock(n);
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cum += w[i];
      clock[i] = std::max(0.0, std::round((1.0 - cum / total) * kRegulationPeriodSeconds * 10.0) / 10.0);
    }
    clock[n - 1] = 0.0;
    return clock;
  }

  PlayEvent& push_event(int q, double clock, EventKind kind, Team team, std::string text) {
    PlayEvent ev;
    ev.game_id = id_;
    ev.period = q;
    ev.clock_remaining = clock;
    ev.kind = kind;
    ev.team = team;
    ev.raw_text = std::move(text);
    game_.events.push_back(std::move(ev));
    return game_.events.back();
  }

  void free_throw(int q, double clock, Team team, bool made, bool last) {
    auto& ev = push_event(q, clock, EventKind::free_throw, team, made ? "free throw made" : "free throw missed");
    ev.made = made;
    ev.points = made ? 1 : 0;
    ev.last_in_trip = last;
  }

  void field_goal(int q, double clock, Team team, int points) {
    push_event(q, clock, EventKind::shot_made, team, fmt::format("{}pt shot made", points)).points = points;
  }

  void possession(int q, double clock, Team offense) {
    const Team defense = opposite(offense);
    const Team bonus = effect_point(rng_, cfg_.delta, effect_caller_, effect_left_ > 0);
    if (effect_left_ > 0) --effect_left_;
    if (bonus != Team::neutral) {
      // a technical free throw, announced by a dead-ball event so it never
      // attaches to the previous possession's made shot
      push_event(q, clock, EventKind::other, offense, "inbound");
      free_throw(q, clock, bonus, true, false);
      score(bonus, 1);
    }
    const int points = draw_points(rng_, cfg_.score_dist);
    const double style = rng_.uniform();
    switch (points) {
      case 0:
        if (style < 0.25) {
          push_event(q, clock, EventKind::turnover, offense, "turnover");
        } else {
          push_event(q, clock, EventKind::shot_missed, offense, "shot missed");
          if (style > 0.85) {
            push_event(q, clock, EventKind::rebound, offense, "offensive rebound").offensive = true;
            push_event(q, clock, EventKind::shot_missed, offense, "shot missed");
          }
          push_event(q, clock, EventKind::rebound, defense, "defensive rebound");
        }
        break;
      case 1:
        push_event(q, clock, EventKind::foul, defense, "shooting foul");
        free_throw(q, clock, offense, false, false);
        free_throw(q, clock, offense, true, true);
        break;
      case 2:
        if (style < 0.15) {
          push_event(q, clock, EventKind::foul, defense, "shooting foul");
          free_throw(q, clock, offense, true, false);
          free_throw(q, clock, offense, true, true);
        } else {
          if (style > 0.85) {
            push_event(q, clock, EventKind::shot_missed, offense, "shot missed");
            push_event(q, clock, EventKind::rebound, offense, "offensive rebound").offensive = true;
          }
          field_goal(q, clock, offense, 2);
        }
        break;
      default:
        if (style < 0.2) {
          field_goal(q, clock, offense, 2);
          push_event(q, clock, EventKind::foul, defense, "shooting foul");
          free_throw(q, clock, offense, true, true);
        } else {
          field_goal(q, clock, offense, 3);
        }
        break;
    }
    score(offense, points);
    push_instant(InstantKind::possession, offense, false, q, clock);
  }

  void score(Team team, int points) { (team == Team::home ? home_ : away_) += points; }

  void push_instant(InstantKind kind, Team side, bool official, int q, double clock) {
    GameInstant inst;
    inst.game_id = id_;
    inst.t = static_cast<int>(seg_.instants.size());
    inst.kind = kind;
    inst.side = side;
    inst.official = official;
    inst.quarter = q;
    inst.seconds_elapsed = elapsed_seconds(q, clock);
    inst.margin_home = home_ - away_;
    seg_.instants.push_back(std::move(inst));
  }

  void record_timeout(int q, double clock, Team team, bool official) {
    auto& ev = push_event(q, clock, EventKind::timeout, team, official ? "official timeout" : "timeout");
    ev.official = official;
    quiet_ = cfg_.policy.cooldown;
    push_instant(InstantKind::timeout, team, official, q, clock);
    timeouts_.push_back({id_, seg_.instants.back().t, team, official, q, elapsed_seconds(q, clock)});
  }

  double call_probability(Team side, int q, double clock) const {
    const auto& pol = cfg_.policy;
    const auto& inst = seg_.instants;
    const int sign = side == Team::home ? 1 : -1;
    const auto n = static_cast<int>(inst.size());
    int worst = 0;
    for (int j = 1; j <= pol.window && n - 1 - j >= 0; ++j) {
      worst = std::min(worst, sign * (inst[n - 1].margin_home - inst[n - 1 - j].margin_home));
    }
    double p = worst <= pol.theta ? pol.pi1 : pol.pi0;
    if (pol.skew_quarter != 0.0 || pol.skew_seconds != 0.0 || pol.skew_margin != 0.0) {
      const double s = kRegulationPeriodSeconds - clock;
      const double margin = sign * (home_ - away_);
      p *= std::exp(pol.skew_quarter * (q - 2.5) + pol.skew_seconds * (s / kRegulationPeriodSeconds - 0.5) -
                    pol.skew_margin * margin / 10.0);
    }
    return std::clamp(p, 0.0, 1.0);
  }

  // At most one team timeout per boundary, home deciding first.
  bool team_timeouts(int q, double clock) {
    const int half = q <= 2 ? 0 : 1;
    const double u_home = rng_.uniform();
    const double u_away = rng_.uniform();
    if (quiet_ > 0) {
      --quiet_;
      return false;
    }
    for (Team side : {Team::home, Team::away}) {
      int& left = budget_[side == Team::home ? 0 : 1][half];
      const double u = side == Team::home ? u_home : u_away;
      if (left > 0 && u < call_probability(side, q, clock)) {
        --left;
        record_timeout(q, clock, side, false);
        effect_caller_ = side;
        effect_left_ = cfg_.lambda;
        return true;
      }
    }
    return false;
  }

  void official_timeout(int q, double clock) {
    record_timeout(q, clock, official_charge_, true);
    official_charge_ = opposite(official_charge_);
  }

  const SimConfig& cfg_;
  Rng rng_;
  std::string id_;
  int home_ = 0;
  int away_ = 0;
  int budget_[2][2] = {{cfg_.timeouts_per_half, cfg_.timeouts_per_half},
                       {cfg_.timeouts_per_half, cfg_.timeouts_per_half}};
  Team effect_caller_ = Team::neutral;
  int effect_left_ = 0;
  int quiet_ = 0;
  Team official_charge_ = Team::home;
};

}  // namespace

SimOutput generate(const SimConfig& config) {
  config.validate();
  std::vector<std::unique_ptr<GameSim>> sims(config.n_games);
  parallel_for(config.n_games, config.threads, [&](std::size_t i) {
    sims[i] = std::make_unique<GameSim>(config, i);
    sims[i]->run();
  });
  SimOutput out;
  out.truth.delta = config.delta;
  out.games.reserve(config.n_games);
  out.instants.reserve(config.n_games);
  for (auto& s : sims) {
    out.games.push_back(std::move(s->game_));
    out.instants.push_back(std::move(s->seg_));
    for (auto& rec : s->timeouts_) out.truth.timeouts.push_back(std::move(rec));
  }
  return out;
}

void write_sim_pbp(std::ostream& out, const SimOutput& sim) {
  write_pbp_header(out);
  for (const auto& g : sim.games) {
    for (const auto& ev : g.events) write_pbp_event(out, ev);
  }
}

void write_truth_json(std::ostream& out, const SimConfig& config) {
  nlohmann::ordered_json j;
  j["delta"] = config.delta;
  j["theta"] = config.policy.theta;
  j["pi0"] = config.policy.pi0;
  j["pi1"] = config.policy.pi1;
  j["n_games"] = config.n_games;
  j["seed"] = config.seed;
  j["window"] = config.policy.window;
  j["lambda"] = config.lambda;
  out << j.dump(2) << '\n';
}

RolloutGap paired_rollout_gap(const SimConfig& config, std::size_t n_rollouts, std::uint64_t seed) {
  config.validate();
  if (n_rollouts == 0) throw std::invalid_argument("n_rollouts must be positive");
  double sum = 0.0, sum_sq = 0.0;
  const int lambda = config.lambda;
  for (std::size_t r = 0; r < n_rollouts; ++r) {
    Rng rng(seed, r);
    const Team caller = rng.bernoulli(0.5) ? Team::home : Team::away;
    // warm-up history shared by both branches
    const int warmup = lambda + 1 + static_cast<int>(rng.below(40));
    int margin = 0;
    Team offense = rng.bernoulli(0.5) ? Team::home : Team::away;
    for (int i = 0; i < warmup; ++i) {
      const int pts = draw_points(rng, config.score_dist);
      margin += offense == caller ? pts : -pts;
      offense = opposite(offense);
    }
    // post window replayed with identical draws under both treatments
    int with = margin, without = margin;
    for (int j = 0; j < lambda; ++j) {
      const Team bonus = effect_point(rng, config.delta, caller, true);
      const int pts = draw_points(rng, config.score_dist);
      const int step = offense == caller ? pts : -pts;
      with += step + (bonus == Team::neutral ? 0 : bonus == caller ? 1 : -1);
      without += step;
      offense = opposite(offense);
    }
    const double gap = static_cast<double>(with - without) / lambda;
    sum += gap;
    sum_sq += gap * gap;
  }
  RolloutGap g;
  g.n = n_rollouts;
  g.mean = sum / static_cast<double>(n_rollouts);
  const double var = n_rollouts > 1 ? (sum_sq - sum * g.mean) / static_cast<double>(n_rollouts - 1) : 0.0;
  g.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(n_rollouts));
  return g;
}

}  // namespace stopclock
