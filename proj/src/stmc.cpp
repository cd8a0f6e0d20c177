#include "stopclock/stmc.hpp"

#include <stdexcept>
#include <string>

namespace stopclock {

void require_lambda(int lambda) {
  if (lambda <= 0 || lambda % 2 != 0) {
    throw std::invalid_argument("lambda must be an even positive integer, got " + std::to_string(lambda));
  }
}

namespace {

// Interruption counts as a prefix sum so each window check is O(1).
std::vector<int> interruption_prefix(std::span<const GameInstant> instants) {
  std::vector<int> prefix(instants.size() + 1, 0);
  for (std::size_t i = 0; i < instants.size(); ++i) {
    prefix[i + 1] = prefix[i] + (instants[i].is_interruption() ? 1 : 0);
  }
  return prefix;
}

WindowStats evaluate(std::span<const int> p, std::span<const GameInstant> instants, std::span<const int> prefix,
                     int t, int lambda) {
  WindowStats w;
  w.t = t;
  w.lambda = lambda;
  const int n = static_cast<int>(p.size()) - 1;  // last valid index
  if (t - lambda - 1 < 0 || t + lambda > n) return w;

  w.dpre_num = p[t - 1] - p[t - lambda - 1];
  w.dpost_num = p[t + lambda] - p[t];
  const int inside = prefix[t + lambda + 1] - prefix[t - lambda];
  const int self = instants[t].is_interruption() ? 1 : 0;
  w.valid = inside - self == 0;
  if (w.valid) w.y = static_cast<double>(w.dpost_num - w.dpre_num) / lambda;
  return w;
}

}  // namespace

WindowStats window_stats(std::span<const int> margins, std::span<const GameInstant> instants, int t, int lambda) {
  require_lambda(lambda);
  if (margins.size() != instants.size()) throw std::invalid_argument("margin series and instants differ in length");
  if (t < 0 || t >= static_cast<int>(margins.size())) throw std::invalid_argument("instant index out of range");
  const auto prefix = interruption_prefix(instants);
  return evaluate(margins, instants, prefix, t, lambda);
}

std::vector<WindowStats> batch_stmc(std::span<const GameInstant> instants, int lambda, Side side) {
  require_lambda(lambda);
  const auto p = margin_series(instants, side);
  const auto prefix = interruption_prefix(instants);
  std::vector<WindowStats> out;
  out.reserve(instants.size());
  for (int t = 0; t < static_cast<int>(instants.size()); ++t) out.push_back(evaluate(p, instants, prefix, t, lambda));
  return out;
}

}  // namespace stopclock
