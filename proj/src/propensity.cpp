#include "stopclock/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include "stopclock/errors.hpp"
#include "stopclock/rng.hpp"

namespace stopclock {

namespace {

constexpr int kFeatures = 3;
constexpr double kMaxLogit = 30.0;

double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow
double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double unit_loss(double f, int y) noexcept { return softplus(f) - (y ? f : 0.0); }

int depth_of(const std::vector<TreeNode>& nodes, int i) noexcept {
  if (nodes[i].feature < 0) return 0;
  return 1 + std::max(depth_of(nodes, nodes[i].left), depth_of(nodes, nodes[i].right));
}

// Each feature is reduced to the rank of its value among the distinct values
// of the training set, so a node's best split comes from per-rank sums.
struct BinnedFeatures {
  std::array<std::vector<double>, kFeatures> values;       // distinct values, ascending
  std::array<std::vector<std::uint32_t>, kFeatures> rank;  // per row

  explicit BinnedFeatures(std::span<const FeatureRow> x) {
    for (int k = 0; k < kFeatures; ++k) {
      auto& v = values[k];
      v.reserve(x.size());
      for (const auto& row : x) v.push_back(row[k]);
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      rank[k].resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        rank[k][i] = static_cast<std::uint32_t>(std::lower_bound(v.begin(), v.end(), x[i][k]) - v.begin());
      }
    }
  }
};

class TreeGrower {
 public:
  TreeGrower(const BinnedFeatures& bins, std::span<const int> y, std::span<const double> f, const GbmConfig& cfg)
      : bins_(bins), y_(y), f_(f), cfg_(cfg), residual_(y.size()), hessian_(y.size()) {
    for (int k = 0; k < kFeatures; ++k) {
      sum_[k].resize(bins.values[k].size());
      count_[k].resize(bins.values[k].size());
    }
  }

  RegressionTree grow(std::vector<int> rows) {
    for (int r : rows) {
      const double p = sigmoid(f_[r]);
      residual_[r] = y_[r] - p;
      hessian_[r] = p * (1.0 - p);
    }
    RegressionTree tree;
    tree.nodes.emplace_back();
    split(tree, 0, std::move(rows), 0);
    return tree;
  }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    std::uint32_t last_left = 0;  // highest rank sent left
    double threshold = 0.0;
  };

  Split best_split(const std::vector<int>& rows) {
    Split best;
    const std::size_t n = rows.size();
    double total = 0.0;
    for (int r : rows) total += residual_[r];
    const double parent = total * total / static_cast<double>(n);
    const auto min_leaf = static_cast<std::size_t>(std::max(1, cfg_.min_leaf));

    for (int k = 0; k < kFeatures; ++k) {
      auto& sum = sum_[k];
      auto& count = count_[k];
      const auto& rank = bins_.rank[k];
      std::uint32_t lo = static_cast<std::uint32_t>(sum.size()), hi = 0;
      for (int r : rows) {
        const auto b = rank[r];
        sum[b] += residual_[r];
        ++count[b];
        lo = std::min(lo, b);
        hi = std::max(hi, b);
      }
      double left = 0.0;
      std::size_t nl = 0;
      std::uint32_t prev = lo;
      for (std::uint32_t b = lo; b < hi; ++b) {
        if (count[b] == 0) continue;
        left += sum[b];
        nl += count[b];
        prev = b;
        const std::size_t nr = n - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - parent;
        if (gain > best.gain * (1.0 + 1e-12) + 1e-12) {
          // next occupied rank gives the midpoint threshold
          std::uint32_t next = b + 1;
          while (count[next] == 0) ++next;
          best.gain = gain;
          best.feature = k;
          best.last_left = prev;
          best.threshold = 0.5 * (bins_.values[k][prev] + bins_.values[k][next]);
        }
      }
      for (std::uint32_t b = lo; b <= hi; ++b) {
        sum[b] = 0.0;
        count[b] = 0;
      }
    }
    return best;
  }

  void split(RegressionTree& tree, int node, std::vector<int> rows, int depth) {
    const std::size_t n = rows.size();
    if (depth < cfg_.max_depth && n >= 2 * static_cast<std::size_t>(std::max(1, cfg_.min_leaf))) {
      const Split s = best_split(rows);
      if (s.feature >= 0) {
        const auto& rank = bins_.rank[s.feature];
        std::vector<int> left_rows, right_rows;
        for (int r : rows) (rank[r] <= s.last_left ? left_rows : right_rows).push_back(r);
        rows = {};
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        tree.nodes[node].feature = s.feature;
        tree.nodes[node].threshold = s.threshold;
        tree.nodes[node].left = l;
        tree.nodes[node].right = l + 1;
        split(tree, l, std::move(left_rows), depth + 1);
        split(tree, l + 1, std::move(right_rows), depth + 1);
        return;
      }
    }
    tree.nodes[node].value = leaf_value(rows);
  }

  // Newton step, halved until the leaf's shrunk update does not raise its loss.
  // The leaf loss is convex in the step, so it cannot have risen while its
  // derivative keeps the sign it had at zero; the loss itself is only
  // evaluated once the step overshoots the minimum.
  double leaf_value(const std::vector<int>& rows) const {
    double g = 0.0;
    double h = 0.0;
    for (int r : rows) {
      g += residual_[r];
      h += hessian_[r];
    }
    if (h <= 0.0 || g == 0.0) return 0.0;
    const double nu = cfg_.shrinkage;
    double step = nu * g / h;
    double slope = 0.0;  // -dL/dstep
    for (int r : rows) slope += y_[r] - sigmoid(f_[r] + step);
    if ((slope > 0.0) == (g > 0.0) || slope == 0.0) return step / nu;
    double before = 0.0;
    for (int r : rows) before += unit_loss(f_[r], y_[r]);
    for (int attempt = 0; attempt < 60; ++attempt) {
      double after = 0.0;
      for (int r : rows) after += unit_loss(f_[r] + step, y_[r]);
      if (after <= before) return step / nu;
      step *= 0.5;
    }
    return 0.0;
  }

  const BinnedFeatures& bins_;
  std::span<const int> y_;
  std::span<const double> f_;
  const GbmConfig& cfg_;
  std::vector<double> residual_;
  std::vector<double> hessian_;
  std::array<std::vector<double>, kFeatures> sum_;
  std::array<std::vector<std::uint32_t>, kFeatures> count_;
};

}  // namespace

double RegressionTree::evaluate(const FeatureRow& x) const noexcept {
  int i = 0;
  while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

int RegressionTree::depth() const noexcept { return nodes.empty() ? 0 : depth_of(nodes, 0); }

GbmModel::GbmModel(double base_rate, double shrinkage, std::vector<RegressionTree> trees)
    : base_rate_(base_rate),
      base_score_(std::log(base_rate / (1.0 - base_rate))),
      shrinkage_(shrinkage),
      trees_(std::move(trees)) {}

double GbmModel::raw_score(const FeatureRow& x) const noexcept {
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.evaluate(x);
  return base_score_ + shrinkage_ * sum;
}

double GbmModel::predict(const FeatureRow& x) const noexcept {
  if (trees_.empty()) return base_rate_;
  return sigmoid(std::clamp(raw_score(x), -kMaxLogit, kMaxLogit));
}

nlohmann::json GbmModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"features", {"quarter", "p_margin", "seconds"}},
          {"base_rate", base_rate_},
          {"base_score", base_score_},
          {"shrinkage", shrinkage_},
          {"trees", std::move(trees)}};
}

GbmModel fit_gbm(std::span<const FeatureRow> x, std::span<const int> labels, const GbmConfig& config,
                 std::vector<double>* loss_trace) {
  if (x.empty()) throw std::invalid_argument("cannot fit a propensity model on zero units");
  if (x.size() != labels.size()) throw std::invalid_argument("feature and label counts differ");
  if (config.n_trees < 0 || config.max_depth < 0 || config.min_leaf < 1) {
    throw std::invalid_argument("invalid boosting configuration");
  }
  if (!(config.shrinkage > 0.0 && config.shrinkage <= 1.0)) throw std::invalid_argument("shrinkage must be in (0, 1]");
  if (!(config.bag_fraction > 0.0 && config.bag_fraction <= 1.0)) {
    throw std::invalid_argument("bag fraction must be in (0, 1]");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (double v : x[i]) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite covariate");
    }
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 or 1");
    positives += static_cast<std::size_t>(labels[i]);
  }
  if (positives == 0 || positives == x.size()) throw FitError("propensity fit needs both treated and control units");

  const std::size_t n = x.size();
  const double base_rate = static_cast<double>(positives) / static_cast<double>(n);
  const double base_score = std::log(base_rate / (1.0 - base_rate));
  std::vector<double> f(n, base_score);

  const BinnedFeatures bins(x);

  auto record_loss = [&] {
    if (!loss_trace) return;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += unit_loss(f[i], labels[i]);
    loss_trace->push_back(total / static_cast<double>(n));
  };
  if (loss_trace) loss_trace->clear();
  record_loss();

  const bool bagging = config.bag_fraction < 1.0;
  const std::size_t bag_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(config.bag_fraction * static_cast<double>(n))));
  Rng rng(config.seed, 0x6762);
  std::vector<int> perm(n);
  std::vector<char> in_bag(n, 0);

  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(config.n_trees));
  TreeGrower grower(bins, labels, f, config);
  for (int iter = 0; iter < config.n_trees; ++iter) {
    std::vector<int> rows;
    if (bagging) {
      std::iota(perm.begin(), perm.end(), 0);
      // partial Fisher-Yates: first bag_size entries form the sample
      for (std::size_t i = 0; i < bag_size; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(perm[i], perm[j]);
      }
      std::fill(in_bag.begin(), in_bag.end(), 0);
      for (std::size_t i = 0; i < bag_size; ++i) in_bag[perm[i]] = 1;
      rows.reserve(bag_size);
      for (std::size_t i = 0; i < n; ++i) {
        if (in_bag[i]) rows.push_back(static_cast<int>(i));
      }
    } else {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0);
    }
    RegressionTree tree = grower.grow(std::move(rows));
    for (std::size_t i = 0; i < n; ++i) f[i] += config.shrinkage * tree.evaluate(x[i]);
    trees.push_back(std::move(tree));
    record_loss();
  }
  return GbmModel(base_rate, config.shrinkage, std::move(trees));
}

GbmModel fit_propensity(std::span<const Unit> units, const GbmConfig& config) {
  std::vector<FeatureRow> x;
  std::vector<int> y;
  x.reserve(units.size());
  y.reserve(units.size());
  for (const auto& u : units) {
    x.push_back(features(u));
    y.push_back(u.a);
  }
  return fit_gbm(x, y, config);
}

double mean_log_loss(const GbmModel& model, std::span<const FeatureRow> x, std::span<const int> labels) {
  if (x.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = model.predict(x[i]);
    total -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(x.size());
}

}  // namespace stopclock
