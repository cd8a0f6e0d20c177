#include "stopclock/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stopclock/csv.hpp"

namespace stopclock {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(std::span<const double> v) {
  Moments m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace

double smd_from_moments(double mean_t, double sd_t, double mean_c, double sd_c) noexcept {
  const double pooled = std::sqrt((sd_t * sd_t + sd_c * sd_c) / 2.0);
  const double diff = std::abs(mean_t - mean_c);
  if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / pooled;
}

double smd(std::span<const double> treated, std::span<const double> control) {
  if (treated.empty() || control.empty()) throw std::invalid_argument("smd needs two non-empty samples");
  const auto t = moments(treated);
  const auto c = moments(control);
  return smd_from_moments(t.mean, t.sd, c.mean, c.sd);
}

double covariate_value(const Unit& u, std::string_view covariate) {
  if (covariate == "seconds") return u.s;
  if (covariate == "quarter") return u.q;
  if (covariate == "p_margin") return u.p;
  if (covariate == "dpre_num") return u.dpre_num;
  if (covariate == "y") return u.y;
  throw std::invalid_argument("unknown covariate '" + std::string(covariate) + "'");
}

namespace {

BalanceRow make_row(std::string_view covariate, std::string stage, std::span<const double> t,
                    std::span<const double> c) {
  BalanceRow row;
  row.covariate = std::string(covariate);
  row.stage = std::move(stage);
  const auto mt = moments(t);
  const auto mc = moments(c);
  row.mean_t = mt.mean;
  row.sd_t = mt.sd;
  row.mean_c = mc.mean;
  row.sd_c = mc.sd;
  row.smd = (t.empty() || c.empty()) ? 0.0 : smd_from_moments(mt.mean, mt.sd, mc.mean, mc.sd);
  return row;
}

}  // namespace

std::vector<BalanceRow> balance_table(std::span<const Unit> treated, std::span<const Unit> controls,
                                      const MatchedSample& matched) {
  std::vector<BalanceRow> rows;
  for (auto cov : kBalanceCovariates) {
    std::vector<double> t, c;
    for (const auto& u : treated) t.push_back(covariate_value(u, cov));
    for (const auto& u : controls) c.push_back(covariate_value(u, cov));
    rows.push_back(make_row(cov, "before", t, c));
  }
  for (auto cov : kBalanceCovariates) {
    std::vector<double> t, c;
    for (const auto& p : matched.pairs) {
      t.push_back(covariate_value(p.treated, cov));
      c.push_back(covariate_value(p.control, cov));
    }
    rows.push_back(make_row(cov, "after", t, c));
  }
  return rows;
}

void write_balance_header(std::ostream& out) {
  csv::write_row(out, {"lambda", "method", "stage", "covariate", "mean_c", "sd_c", "mean_t", "sd_t", "smd"});
}

void write_balance_rows(std::ostream& out, int lambda, MatchMethod method, std::span<const BalanceRow> rows) {
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(lambda), std::string(to_string(method)), r.stage, r.covariate,
                         csv::format_double(r.mean_c), csv::format_double(r.sd_c), csv::format_double(r.mean_t),
                         csv::format_double(r.sd_t), std::isinf(r.smd) ? "inf" : csv::format_double(r.smd)});
  }
}

// ---------------------------------------------------------------------------

int CausalDag::add_node(std::string name, bool latent) {
  for (const auto& n : names_) {
    if (n == name) throw std::invalid_argument("duplicate node '" + name + "'");
  }
  names_.push_back(std::move(name));
  latent_.push_back(latent ? 1 : 0);
  children_.emplace_back();
  parents_.emplace_back();
  return size() - 1;
}

void CausalDag::add_edge(int from, int to) {
  if (from < 0 || to < 0 || from >= size() || to >= size()) throw std::invalid_argument("edge endpoint out of range");
  if (from == to) throw std::invalid_argument("self loop");
  if (has_edge(from, to)) return;
  children_[from].push_back(to);
  parents_[to].push_back(from);
}

void CausalDag::add_edge(std::string_view from, std::string_view to) { add_edge(index(from), index(to)); }

int CausalDag::index(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::invalid_argument("unknown node '" + std::string(name) + "'");
}

bool CausalDag::has_edge(int from, int to) const {
  const auto& c = children_.at(from);
  return std::find(c.begin(), c.end(), to) != c.end();
}

bool CausalDag::is_acyclic() const {
  std::vector<int> indegree(size(), 0);
  for (int v = 0; v < size(); ++v) indegree[v] = static_cast<int>(parents_[v].size());
  std::vector<int> ready;
  for (int v = 0; v < size(); ++v) {
    if (indegree[v] == 0) ready.push_back(v);
  }
  int seen = 0;
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    ++seen;
    for (int c : children_[v]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  return seen == size();
}

std::vector<char> CausalDag::descendants(int v) const {
  std::vector<char> mark(size(), 0);
  std::vector<int> stack(children_.at(v));
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (mark[u]) continue;
    mark[u] = 1;
    for (int c : children_[u]) stack.push_back(c);
  }
  return mark;
}

CausalDag CausalDag::timeout_model() {
  CausalDag g;
  g.add_node("A_t");
  g.add_node("dP_post");
  g.add_node("dP_pre");
  g.add_node("X_t");
  g.add_node("U", true);
  g.add_edge("A_t", "dP_post");
  g.add_edge("dP_pre", "A_t");
  g.add_edge("dP_pre", "dP_post");
  g.add_edge("X_t", "A_t");
  g.add_edge("X_t", "dP_post");
  g.add_edge("U", "A_t");
  g.add_edge("U", "dP_pre");
  g.add_edge("U", "dP_post");
  return g;
}

namespace {

class BackdoorSearch {
 public:
  BackdoorSearch(const CausalDag& dag, int outcome, std::span<const int> z)
      : dag_(dag), outcome_(outcome), in_z_(dag.size(), 0), z_or_ancestor_(dag.size(), 0), on_path_(dag.size(), 0) {
    for (int v : z) in_z_[v] = 1;
    // a collider is open iff it is in Z or has a descendant in Z, i.e. it is an ancestor-or-self of Z
    for (int v = 0; v < dag.size(); ++v) {
      if (in_z_[v]) {
        z_or_ancestor_[v] = 1;
        continue;
      }
      const auto desc = dag.descendants(v);
      for (int w : z) {
        if (desc[w]) z_or_ancestor_[v] = 1;
      }
    }
  }

  // True if some back-door path from `treatment` to the outcome is open.
  bool open_path_from(int treatment) {
    on_path_[treatment] = 1;
    for (int p : dag_.parents(treatment)) {
      if (extend(p, /*arrived_forward=*/false)) return true;
    }
    return false;
  }

 private:
  // `arrived_forward` is true when the edge used to reach v points into v.
  bool extend(int v, bool arrived_forward) {
    if (v == outcome_) return true;
    if (on_path_[v]) return false;
    on_path_[v] = 1;
    bool open = false;
    // leaving v along an outgoing edge: v is a non-collider
    if (!in_z_[v]) {
      for (int c : dag_.children(v)) {
        if (extend(c, true)) {
          open = true;
          break;
        }
      }
    }
    if (!open) {
      for (int p : dag_.parents(v)) {
        // v -> ... leaving against an incoming edge; v is a collider iff we also arrived forward
        const bool collider = arrived_forward;
        const bool passes = collider ? z_or_ancestor_[v] != 0 : in_z_[v] == 0;
        if (passes && extend(p, false)) {
          open = true;
          break;
        }
      }
    }
    on_path_[v] = 0;
    return open;
  }

  const CausalDag& dag_;
  int outcome_;
  std::vector<char> in_z_;
  std::vector<char> z_or_ancestor_;
  std::vector<char> on_path_;
};

}  // namespace

bool backdoor_check(const CausalDag& dag, int treatment, int outcome, std::span<const int> adjustment) {
  if (!dag.is_acyclic()) throw std::invalid_argument("causal graph has a cycle");
  if (treatment < 0 || treatment >= dag.size() || outcome < 0 || outcome >= dag.size() || treatment == outcome) {
    throw std::invalid_argument("invalid treatment/outcome nodes");
  }
  for (int v : adjustment) {
    if (v < 0 || v >= dag.size()) throw std::invalid_argument("adjustment node out of range");
    if (v == treatment || v == outcome) throw std::invalid_argument("adjustment set contains treatment or outcome");
  }
  const auto desc = dag.descendants(treatment);
  for (int v : adjustment) {
    if (desc[v]) return false;
  }
  BackdoorSearch search(dag, outcome, adjustment);
  return !search.open_path_from(treatment);
}

bool backdoor_check(const CausalDag& dag, std::string_view treatment, std::string_view outcome,
                    std::span<const std::string> adjustment) {
  std::vector<int> z;
  for (const auto& name : adjustment) z.push_back(dag.index(name));
  return backdoor_check(dag, dag.index(treatment), dag.index(outcome), z);
}

// ---------------------------------------------------------------------------

double Histogram::mean(std::size_t group) const {
  double sum = 0.0;
  double n = 0.0;
  for (std::size_t b = 0; b < bins(); ++b) {
    const double mid = 0.5 * (edges[b] + edges[b + 1]);
    sum += mid * static_cast<double>(counts[group][b]);
    n += static_cast<double>(counts[group][b]);
  }
  return n > 0 ? sum / n : 0.0;
}

namespace {

// type-7 quantile of sorted data
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

constexpr std::size_t kMaxBins = 1000;

}  // namespace

Histogram build_histogram(std::span<const std::string> names, std::span<const std::vector<double>> values) {
  if (names.size() != values.size()) throw std::invalid_argument("group names and values differ in length");
  std::vector<double> pooled;
  for (const auto& v : values) pooled.insert(pooled.end(), v.begin(), v.end());
  if (pooled.empty()) throw std::invalid_argument("histogram of an empty sample");
  std::sort(pooled.begin(), pooled.end());

  Histogram h;
  h.groups.assign(names.begin(), names.end());
  const double lo = pooled.front();
  const double hi = pooled.back();
  std::size_t bins = 1;
  if (hi > lo) {
    const double iqr = quantile(pooled, 0.75) - quantile(pooled, 0.25);
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
    if (width > 0.0) {
      bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    } else {
      // Sturges when the interquartile range collapses
      bins = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(pooled.size())))) + 1;
    }
    bins = std::clamp<std::size_t>(bins, 1, kMaxBins);
  }
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = hi > lo ? lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins) : lo;
  }
  h.counts.assign(values.size(), std::vector<std::size_t>(bins, 0));
  for (std::size_t g = 0; g < values.size(); ++g) {
    for (double x : values[g]) {
      std::size_t b = 0;
      if (hi > lo) {
        b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::min(b, bins - 1);
      }
      ++h.counts[g][b];
    }
  }
  return h;
}

Histogram distribution_export(const MatchedSample& sample, std::string_view covariate) {
  std::vector<double> c, t;
  for (const auto& p : sample.pairs) {
    c.push_back(covariate_value(p.control, covariate));
    t.push_back(covariate_value(p.treated, covariate));
  }
  const std::vector<std::string> names{"control", "treated"};
  const std::vector<std::vector<double>> values{std::move(c), std::move(t)};
  return build_histogram(names, values);
}

void write_histogram_header(std::ostream& out) {
  csv::write_row(out, {"covariate", "group", "bin_lo", "bin_hi", "count", "density"});
}

void write_histogram(std::ostream& out, std::string_view covariate, const Histogram& h) {
  for (std::size_t g = 0; g < h.groups.size(); ++g) {
    std::size_t total = 0;
    for (auto c : h.counts[g]) total += c;
    for (std::size_t b = 0; b < h.bins(); ++b) {
      const double width = h.edges[b + 1] - h.edges[b];
      const double share = total ? static_cast<double>(h.counts[g][b]) / static_cast<double>(total) : 0.0;
      csv::write_row(out, {std::string(covariate), h.groups[g], csv::format_double(h.edges[b]),
                           csv::format_double(h.edges[b + 1]), std::to_string(h.counts[g][b]),
                           csv::format_double(width > 0 ? share / width : share)});
    }
  }
}

}  // namespace stopclock
