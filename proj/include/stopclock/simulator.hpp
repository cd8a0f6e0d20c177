#pragma once

// Synthetic seasons from an alternating-possession model with a
// momentum-triggered timeout policy and an injectable timeout effect.

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "stopclock/pbp.hpp"

namespace stopclock {

struct TimeoutPolicy {
  // Momentum trigger: the caller's margin fell by at least -theta over some
  // look-back of 1..window instants, i.e. dpre_num <= theta at some window.
  int theta = -4;
  int window = 3;
  int cooldown = 6;   // boundaries after any timeout with no team timeout
  double pi0 = 0.01;  // call probability otherwise
  double pi1 = 0.3;   // call probability when dpre_num <= theta
  // Optional log-linear tilt of the call probability by game context:
  // exp(quarter * (Q - 2.5) + seconds * (S / 720 - 0.5) - margin * P / 10).
  double skew_quarter = 0.0;
  double skew_seconds = 0.0;
  double skew_margin = 0.0;
};

struct SimConfig {
  std::size_t n_games = 1500;
  int possessions_per_quarter = 24;  // per team; possessions alternate
  std::array<double, 4> score_dist{0.52, 0.06, 0.34, 0.08};  // P(0..3 points)
  TimeoutPolicy policy;
  std::vector<double> official_marks{419.0, 179.0};  // clock remaining, per quarter
  int timeouts_per_half = 7;
  double delta = 0.0;  // extra expected points per possession for the caller
  int lambda = 4;      // possessions the effect lasts after a timeout
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;  // throws std::invalid_argument
};

struct TimeoutRecord {
  std::string game_id;
  int t = 0;
  Team caller = Team::neutral;
  bool official = false;
  int quarter = 1;
  double seconds_elapsed = 0.0;
};

struct SimTruth {
  double delta = 0.0;
  std::vector<TimeoutRecord> timeouts;
};

struct SimOutput {
  std::vector<Game> games;
  std::vector<SegmentedGame> instants;  // what segmentation must recover
  SimTruth truth;
};

SimOutput generate(const SimConfig& config);

/// Effect in outcome units (points per possession over the post window).
double true_te(const SimConfig& config);

void write_sim_pbp(std::ostream& out, const SimOutput& sim);
/// {delta, theta, pi0, pi1, n_games, seed, lambda}
void write_truth_json(std::ostream& out, const SimConfig& config);

struct RolloutGap {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Evaluates both potential outcomes at shared decision points: after a random
/// warm-up, the same scoring draws are replayed once with a forced timeout and
/// once with none, and the outcome gap is averaged.
RolloutGap paired_rollout_gap(const SimConfig& config, std::size_t n_rollouts, std::uint64_t seed);

}  // namespace stopclock
