#pragma once

// Covariate balance, histogram export and the back-door check.

#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stopclock/cohort.hpp"
#include "stopclock/matching.hpp"

namespace stopclock {

/// Conventional imbalance threshold for SMD.
constexpr double kSmdThreshold = 0.1;

/// |mean_t - mean_c| / sqrt((sd_t^2 + sd_c^2) / 2). Zero pooled sd gives 0 for
/// equal means and +infinity otherwise.
double smd_from_moments(double mean_t, double sd_t, double mean_c, double sd_c) noexcept;

/// Same, from raw samples (sample sd with n - 1). Both samples must be non-empty.
double smd(std::span<const double> treated, std::span<const double> control);

struct BalanceRow {
  std::string covariate;
  std::string stage;  // "before" or "after"
  double mean_c = 0.0;
  double sd_c = 0.0;
  double mean_t = 0.0;
  double sd_t = 0.0;
  double smd = 0.0;

  bool above_threshold() const noexcept { return smd > kSmdThreshold; }
};

/// Names of the balance covariates, in table order.
inline constexpr std::string_view kBalanceCovariates[] = {"seconds", "quarter", "p_margin", "dpre_num"};

double covariate_value(const Unit& u, std::string_view covariate);

/// Rows for the unmatched groups ("before") and for the matched sample ("after").
std::vector<BalanceRow> balance_table(std::span<const Unit> treated, std::span<const Unit> controls,
                                      const MatchedSample& matched);

/// Balance CSV: lambda,method,stage,covariate,mean_c,sd_c,mean_t,sd_t,smd
void write_balance_header(std::ostream& out);
void write_balance_rows(std::ostream& out, int lambda, MatchMethod method, std::span<const BalanceRow> rows);

class CausalDag {
 public:
  int add_node(std::string name, bool latent = false);
  void add_edge(int from, int to);
  void add_edge(std::string_view from, std::string_view to);

  int size() const noexcept { return static_cast<int>(names_.size()); }
  int index(std::string_view name) const;  // throws std::invalid_argument
  const std::string& name(int v) const { return names_.at(v); }
  bool latent(int v) const { return latent_.at(v) != 0; }
  bool has_edge(int from, int to) const;
  const std::vector<int>& children(int v) const { return children_.at(v); }
  const std::vector<int>& parents(int v) const { return parents_.at(v); }

  bool is_acyclic() const;
  /// Strict descendants of v.
  std::vector<char> descendants(int v) const;

  /// Treatment, pre/post margin changes, intra-game covariates and latent
  /// inter-game factors. The deterministic outcome node is left out.
  static CausalDag timeout_model();

 private:
  std::vector<std::string> names_;
  std::vector<char> latent_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> parents_;
};

/// True when no member of `adjustment` descends from `treatment` and every
/// path that starts with an edge into `treatment` is blocked by the set.
/// Throws std::invalid_argument for cyclic graphs or a set containing the
/// treatment or outcome.
bool backdoor_check(const CausalDag& dag, int treatment, int outcome, std::span<const int> adjustment);
bool backdoor_check(const CausalDag& dag, std::string_view treatment, std::string_view outcome,
                    std::span<const std::string> adjustment);

struct Histogram {
  std::vector<double> edges;  // size bins + 1
  std::vector<std::string> groups;
  std::vector<std::vector<std::size_t>> counts;  // [group][bin]

  std::size_t bins() const noexcept { return edges.empty() ? 0 : edges.size() - 1; }
  /// Count-weighted mean of bin midpoints for one group.
  double mean(std::size_t group) const;
};

/// Freedman-Diaconis bins on the pooled values, shared across groups. A
/// constant sample yields one bin.
Histogram build_histogram(std::span<const std::string> names, std::span<const std::vector<double>> values);

/// Control and treated histograms of one covariate over a matched sample.
Histogram distribution_export(const MatchedSample& sample, std::string_view covariate);

/// covariate,group,bin_lo,bin_hi,count,density
void write_histogram_header(std::ostream& out);
void write_histogram(std::ostream& out, std::string_view covariate, const Histogram& h);

}  // namespace stopclock
