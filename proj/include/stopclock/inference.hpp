#pragma once

// Effect estimation, paired permutation inference and the naive-analysis tests.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stopclock/cohort.hpp"
#include "stopclock/matching.hpp"

namespace stopclock {

/// Mean of treated minus control outcomes. Throws on an empty sample.
double estimate_te(const MatchedSample& sample);

/// Within-pair differences y_treated - y_control.
std::vector<double> pair_differences(const MatchedSample& sample);

/// Sign-flip draws for paired differences d. For permutation k, A_k = sum s_i d_i
/// and B_k = sum s_i with s_i uniform in {-1, +1}. Permutations are generated in
/// fixed-size batches, each from its own substream of `seed`, so the draws do
/// not depend on the worker count.
class SignFlipDistribution {
 public:
  SignFlipDistribution(std::span<const double> differences, std::size_t n_perm, std::uint64_t seed,
                       unsigned threads = 1);

  /// Two-sided p-value for the shifted null "treated effect equals tau":
  /// (1 + #{k : |A_k - tau B_k| >= |S - n tau|}) / (n_perm + 1).
  double p_value(double tau) const;

  std::size_t n_perm() const noexcept { return a_.size(); }
  std::size_t n_pairs() const noexcept { return n_; }
  double sum() const noexcept { return sum_; }
  double abs_sum() const noexcept { return abs_sum_; }

  static constexpr std::size_t kBatch = 256;

 private:
  std::size_t n_ = 0;
  double sum_ = 0.0;
  double abs_sum_ = 0.0;
  std::vector<double> a_;
  std::vector<double> b_;
};

double permutation_test(const MatchedSample& sample, std::size_t n_perm, std::uint64_t seed, unsigned threads = 1);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.0;
  bool degenerate = false;  // all differences equal: collapsed to the estimate
  bool truncated = false;   // an endpoint hit the search bracket
};

constexpr double kCiResolution = 1e-3;

/// Test inversion over tau with one shared permutation stream, bisecting on
/// [te - 10 sd_diff, te] and [te, te + 10 sd_diff]. Endpoints are the innermost
/// bisection points with p >= alpha, so lo <= te <= hi. sd_diff = 0 collapses
/// the interval to te.
ConfidenceInterval invert_ci(const SignFlipDistribution& dist, double te, double sd_diff, double alpha);
ConfidenceInterval invert_ci(const MatchedSample& sample, double alpha, std::size_t n_perm, std::uint64_t seed,
                             unsigned threads = 1);

struct TestResult {
  double p_value = 1.0;
  double statistic = 0.0;
  std::size_t n_used = 0;
  bool degenerate = false;
  bool exact = false;
};

/// Two-sided signed-rank test of median 0. Zeros are dropped; exact null
/// distribution (with mid-ranks) for n <= 25, tie-corrected normal
/// approximation above. W+ is reported as the statistic.
TestResult wilcoxon_one_sample(std::span<const double> values);

constexpr std::size_t kWilcoxonExactMax = 25;

/// Centered bootstrap test of mean 0:
/// p = (1 + #{|m_b - mean| >= |mean|}) / (n_boot + 1).
TestResult bootstrap_mean_test(std::span<const double> values, std::size_t n_boot, std::uint64_t seed);

struct NaiveSummary {
  double mean = 0.0;
  std::size_t n = 0;
};

NaiveSummary naive_stmc_summary(std::span<const Unit> treated);

struct EffectReport {
  MatchMethod method = MatchMethod::propensity;
  int lambda = 2;
  Side side = Side::home;
  Subgroup subgroup = Subgroup::all;
  std::size_t n_pairs = 0;
  std::optional<double> te;  // empty when nothing was matched
  double p_value = 1.0;
  ConfidenceInterval ci;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

struct InferenceConfig {
  std::size_t n_perm = 10000;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

EffectReport analyze_sample(const MatchedSample& sample, Subgroup subgroup, const InferenceConfig& config);

}  // namespace stopclock
