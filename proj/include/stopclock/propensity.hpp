#pragma once

// Gradient-boosted regression trees for P(A = 1 | quarter, margin, clock).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "stopclock/cohort.hpp"

namespace stopclock {

/// Covariates in the order (quarter, margin, seconds).
using FeatureRow = std::array<double, 3>;

inline FeatureRow features(const Unit& u) noexcept {
  return {static_cast<double>(u.q), static_cast<double>(u.p), u.s};
}

struct GbmConfig {
  int n_trees = 500;
  int max_depth = 2;
  double shrinkage = 0.05;
  double bag_fraction = 0.5;  // 1.0 disables subsampling
  int min_leaf = 10;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf log-odds increment before shrinkage
};

class RegressionTree {
 public:
  std::vector<TreeNode> nodes;

  double evaluate(const FeatureRow& x) const noexcept;
  int depth() const noexcept;
};

class GbmModel {
 public:
  GbmModel() = default;
  GbmModel(double base_rate, double shrinkage, std::vector<RegressionTree> trees);

  /// Propensity in (0, 1); clamped away from the endpoints.
  double predict(const FeatureRow& x) const noexcept;
  double predict(int q, int p, double s) const noexcept { return predict({double(q), double(p), s}); }
  double raw_score(const FeatureRow& x) const noexcept;

  double base_rate() const noexcept { return base_rate_; }
  double base_score() const noexcept { return base_score_; }
  double shrinkage() const noexcept { return shrinkage_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  nlohmann::json to_json() const;

 private:
  double base_rate_ = 0.5;
  double base_score_ = 0.0;
  double shrinkage_ = 1.0;
  std::vector<RegressionTree> trees_;
};

/// Stagewise Bernoulli-deviance boosting. Each tree is grown on the residuals
/// y - p by squared-error gain; leaves take a Newton step, backtracked so that
/// the in-bag log-loss of every leaf never increases. `loss_trace`, when given,
/// receives the mean training log-loss before the first tree and after each one.
GbmModel fit_gbm(std::span<const FeatureRow> x, std::span<const int> labels, const GbmConfig& config,
                 std::vector<double>* loss_trace = nullptr);

/// Fits on the units' covariates against their treatment labels.
GbmModel fit_propensity(std::span<const Unit> units, const GbmConfig& config);

double mean_log_loss(const GbmModel& model, std::span<const FeatureRow> x, std::span<const int> labels);

}  // namespace stopclock
