#pragma once

// Short-term Momentum Change around a game instant.

#include <span>
#include <vector>

#include "stopclock/pbp.hpp"

namespace stopclock {

/// Pre/post margin windows around instant t. Numerators are kept as integers;
/// y is only populated when the window is valid.
struct WindowStats {
  int t = 0;
  int lambda = 0;
  int dpre_num = 0;   // P[t-1] - P[t-lambda-1]
  int dpost_num = 0;  // P[t+lambda] - P[t]
  bool valid = false;
  double y = 0.0;     // (dpost_num - dpre_num) / lambda
};

/// Throws std::invalid_argument unless lambda is even and positive.
void require_lambda(int lambda);

/// `margins` is the side-perspective series for `instants`. A window is valid
/// when P[t-lambda-1] and P[t+lambda] exist and no interruption other than t
/// itself lies in [t-lambda, t+lambda].
WindowStats window_stats(std::span<const int> margins, std::span<const GameInstant> instants, int t, int lambda);

/// One entry per instant of the game, in instant order.
std::vector<WindowStats> batch_stmc(std::span<const GameInstant> instants, int lambda, Side side);

}  // namespace stopclock
