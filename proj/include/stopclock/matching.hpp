#pragma once

// 1:1 treated/control matching within games.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "stopclock/cohort.hpp"
#include "stopclock/propensity.hpp"

namespace stopclock {

enum class MatchMethod : unsigned char { no_balance, mahalanobis, propensity };
enum class MatchAlgorithm : unsigned char { optimal, greedy };

MatchMethod parse_method(std::string_view name);  // nb | no_balance | mahalanobis | propensity
MatchAlgorithm parse_algorithm(std::string_view name);
std::string_view to_string(MatchMethod m) noexcept;
std::string_view to_string(MatchAlgorithm a) noexcept;

struct MatchConfig {
  MatchMethod method = MatchMethod::propensity;
  int lambda = 2;
  Side side = Side::home;
  MatchAlgorithm algorithm = MatchAlgorithm::optimal;
  std::uint64_t seed = 0;  // greedy visiting order
  unsigned threads = 1;
};

struct MatchedPair {
  Unit treated;
  Unit control;
  double distance = 0.0;
};

struct MatchedSample {
  std::vector<MatchedPair> pairs;
  MatchMethod method = MatchMethod::propensity;
  int lambda = 2;
  Side side = Side::home;

  double total_distance() const noexcept;
};

/// Same game, equal pre-window numerator, and disjoint [t - lambda, t + lambda] windows.
bool feasible(const Unit& treated, const Unit& control, int lambda) noexcept;

struct Covariance {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d inverse = Eigen::Matrix3d::Zero();  // pseudo-inverse when singular
  bool singular = false;
};

/// Sample covariance (n - 1) of (q, p, s). Needs at least 4 rows.
Covariance mahalanobis_cov(std::span<const FeatureRow> rows);
Covariance mahalanobis_cov(std::span<const Unit> units);

double mahalanobis_distance(const FeatureRow& a, const FeatureRow& b, const Eigen::Matrix3d& inverse) noexcept;

/// nullopt marks an infeasible pair.
using DistanceFn = std::function<std::optional<double>(const Unit& treated, const Unit& control)>;

/// Pair distance under `config.method`; throws std::invalid_argument when the
/// method's model or covariance is missing.
std::optional<double> distance(const MatchConfig& config, const GbmModel* model, const Unit& treated,
                               const Unit& control, const Covariance* cov);

/// Binds the model/covariance into a reusable distance function. The pointees
/// must outlive the returned function.
DistanceFn make_distance(const MatchConfig& config, const GbmModel* model, const Covariance* cov);

/// Distances are scaled by this factor and rounded inside the solver.
constexpr double kCostScale = 1e6;

std::int64_t scaled_cost(double distance) noexcept;

struct AssignmentEdge {
  int left = 0;
  int right = 0;
  std::int64_t cost = 0;
};

/// Maximum-cardinality matching of minimum total cost on a sparse bipartite
/// graph, by successive shortest augmenting paths with Johnson potentials.
/// Returns the matched right vertex per left vertex, or -1.
std::vector<int> min_cost_max_matching(int n_left, int n_right, std::span<const AssignmentEdge> edges);

/// Solves each game independently; pairs are ordered by (game_id, treated t).
MatchedSample optimal_match(std::span<const Unit> treated, std::span<const Unit> controls,
                            const MatchConfig& config, const DistanceFn& dist);

/// Treated units visit in seeded-shuffled order and take their nearest
/// available control; ties go to the lowest control t.
MatchedSample greedy_match(std::span<const Unit> treated, std::span<const Unit> controls,
                           const MatchConfig& config, const DistanceFn& dist);

MatchedSample run_matching(std::span<const Unit> treated, std::span<const Unit> controls,
                           const MatchConfig& config, const DistanceFn& dist);

}  // namespace stopclock
