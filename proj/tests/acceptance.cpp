// End-to-end acceptance gate. Prints one PASS/FAIL/SKIP line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "stopclock/commands.hpp"

using namespace stopclock;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void skip(int id, const std::string& detail) {
  std::printf("criterion %2d SKIP  %s\n", id, detail.c_str());
  std::fflush(stdout);
}

// Simulated season pushed through the CSV writer and the ingest path.
std::vector<SegmentedGame> simulate_and_ingest(const SimConfig& config) {
  const auto sim = generate(config);
  std::stringstream csv;
  write_sim_pbp(csv, sim);
  return ingest_pbp(csv).games;
}

SimConfig null_config(std::uint64_t seed) {
  SimConfig c;
  c.n_games = 1500;
  c.delta = 0.0;
  c.policy.theta = -4;
  c.policy.pi1 = 0.3;
  c.policy.pi0 = 0.01;
  c.seed = seed;
  return c;
}

void criterion_regression_to_mean() {
  const auto start = Clock::now();
  const auto games = simulate_and_ingest(null_config(20170101));
  const auto naive = run_naive(games, {2, 4, 6}, 10000, 7);
  const double elapsed = seconds_since(start);
  bool pass = elapsed < 60.0;
  std::string detail;
  for (std::size_t i = 0; i < naive.size(); ++i) {
    const auto& r = naive[i];
    pass = pass && r.summary.mean > 0.0 && r.wilcoxon.p_value < 0.01 && r.bootstrap.p_value < 0.01;
    if (i > 0) pass = pass && r.summary.mean < naive[i - 1].summary.mean;
    detail += fmt::format("lambda={} mean={:.3f} n={} wilcoxon_p={:.2g} bootstrap_p={:.2g}; ", r.lambda,
                          r.summary.mean, r.summary.n, r.wilcoxon.p_value, r.bootstrap.p_value);
  }
  verdict(1, pass, detail + fmt::format("{:.1f} s", elapsed));
}

struct PreWindowBalance {
  bool exact = true;
  std::size_t samples = 0;
};

// The null runs also feed the exact pre-window balance half of criterion 4.
PreWindowBalance criterion_null_recovery() {
  constexpr int kReps = 20;
  constexpr int kNeeded = 17;
  const auto start = Clock::now();
  std::map<std::pair<int, std::string>, int> hits;
  std::map<std::pair<int, std::string>, double> te_sum;
  PreWindowBalance pre;
  for (int rep = 0; rep < kReps; ++rep) {
    const auto sim = generate(null_config(5000 + rep));
    AnalyzeOptions opts;
    opts.lambdas = {2, 4, 6};
    opts.methods = {MatchMethod::no_balance, MatchMethod::mahalanobis, MatchMethod::propensity};
    opts.side = Side::home;
    opts.permutations = 10000;
    opts.alpha = 0.01;
    opts.seed = 900 + rep;
    for (const auto& r : run_analysis(sim.instants, opts)) {
      const auto key = std::make_pair(r.report.lambda, std::string(to_string(r.report.method)));
      const double te = r.report.te.value_or(NAN);
      const bool ok = std::abs(te) <= 0.05 && r.report.ci.lo <= 0.0 && 0.0 <= r.report.ci.hi;
      hits[key] += ok ? 1 : 0;
      te_sum[key] += te;
      ++pre.samples;
      for (const auto& p : r.sample.pairs) pre.exact = pre.exact && p.treated.dpre_num == p.control.dpre_num;
      for (const auto& row : r.balance) {
        if (row.stage == "after" && row.covariate == "dpre_num") pre.exact = pre.exact && row.smd == 0.0;
      }
    }
  }
  const double elapsed = seconds_since(start);
  bool pass = elapsed < 600.0;
  std::string detail;
  for (const auto& [key, count] : hits) {
    pass = pass && count >= kNeeded;
    detail += fmt::format("{}/l{}: {}/{} (mean te {:+.3f}); ", key.second, key.first, count, kReps,
                          te_sum[key] / kReps);
  }
  verdict(2, pass, detail + fmt::format("{:.1f} s", elapsed));
  return pre;
}

void criterion_injected_effect() {
  SimConfig config = null_config(424242);
  config.delta = 0.5;
  config.lambda = 4;
  const auto games = simulate_and_ingest(config);
  AnalyzeOptions opts;
  opts.lambdas = {4};
  opts.methods = {MatchMethod::propensity};
  opts.seed = 3;
  const auto results = run_analysis(games, opts);
  const auto& r = results.at(0).report;
  const double te = r.te.value_or(NAN);
  const bool matched_ok = te >= 0.4 && te <= 0.6 && r.n_pairs >= 3000;

  const auto gap = paired_rollout_gap(config, 1'000'000, 99);
  const bool oracle_ok = std::abs(gap.mean - true_te(config)) <= 0.02;
  verdict(3, matched_ok && oracle_ok,
          fmt::format("propensity lambda=4 te={:.3f} n_pairs={}; paired rollout gap {:.4f} (se {:.4f}) vs true {}",
                      te, r.n_pairs, gap.mean, gap.std_error, true_te(config)));
}

void criterion_balance(const PreWindowBalance& pre) {
  SimConfig config = null_config(11);
  config.policy.skew_quarter = 0.3;
  config.policy.skew_seconds = 1.0;
  config.policy.skew_margin = 0.3;
  const auto sim = generate(config);
  AnalyzeOptions opts;
  opts.lambdas = {2};
  opts.methods = {MatchMethod::no_balance, MatchMethod::propensity};
  opts.permutations = 100;
  const auto results = run_analysis(sim.instants, opts);
  std::map<std::string, double> nb, ps;
  for (const auto& r : results) {
    auto& dst = r.report.method == MatchMethod::no_balance ? nb : ps;
    for (const auto& row : r.balance) {
      if (row.stage == "after") dst[row.covariate] = row.smd;
    }
  }
  bool pass = pre.exact;
  std::string detail = fmt::format("pre-window SMD exactly 0 in {} null samples: {}; skewed lambda=2:", pre.samples,
                                   pre.exact);
  for (const char* cov : {"quarter", "p_margin", "seconds"}) {
    pass = pass && ps.at(cov) < kSmdThreshold && ps.at(cov) < nb.at(cov);
    detail += fmt::format(" {} propensity={:.3f} nb={:.3f};", cov, ps.at(cov), nb.at(cov));
  }
  verdict(4, pass, detail);
}

void criterion_smd_units() {
  const double v = smd_from_moments(363.42, 198.77, 410.03, 168.47);
  verdict(5, std::abs(v - 0.253) <= 0.001, fmt::format("smd={:.5f}", v));
}

void criterion_matching_optimality() {
  Rng rng(2024, 6);
  int exact = 0, greedy_ok = 0;
  constexpr int kInstances = 500;
  for (int inst = 0; inst < kInstances; ++inst) {
    const int n_games = 1 + static_cast<int>(rng.below(2));
    std::vector<Unit> treated, controls;
    for (int g = 0; g < n_games; ++g) {
      const int nt = 1 + static_cast<int>(rng.below(n_games == 1 ? 8 : 4));
      const int nc = 1 + static_cast<int>(rng.below(n_games == 1 ? 8 : 4));
      std::vector<int> slots(60);
      for (int i = 0; i < 60; ++i) slots[i] = i;
      rng.shuffle(std::span<int>(slots));
      for (int i = 0; i < nt + nc; ++i) {
        Unit u;
        u.game_id = fmt::format("G{}", g);
        u.t = slots[i];
        u.dpre_num = static_cast<int>(rng.below(2));
        u.a = i < nt ? 1 : 0;
        (i < nt ? treated : controls).push_back(u);
      }
    }
    // dyadic distances keep every partial sum exact in double
    std::map<std::tuple<std::string, int, int>, double> table;
    for (const auto& t : treated) {
      for (const auto& c : controls) table[{t.game_id, t.t, c.t}] = static_cast<double>(rng.below(640)) / 64.0;
    }
    MatchConfig cfg;
    cfg.method = MatchMethod::no_balance;
    cfg.lambda = 2;
    cfg.seed = inst;
    const DistanceFn dist = [&](const Unit& t, const Unit& c) -> std::optional<double> {
      if (!feasible(t, c, cfg.lambda)) return std::nullopt;
      return table.at({t.game_id, t.t, c.t});
    };
    std::vector<std::vector<std::optional<double>>> cost(treated.size(),
                                                         std::vector<std::optional<double>>(controls.size()));
    for (std::size_t i = 0; i < treated.size(); ++i) {
      for (std::size_t j = 0; j < controls.size(); ++j) cost[i][j] = dist(treated[i], controls[j]);
    }
    const auto brute = oracle::brute_force_matching(cost);
    cfg.algorithm = MatchAlgorithm::optimal;
    const auto opt = run_matching(treated, controls, cfg, dist);
    cfg.algorithm = MatchAlgorithm::greedy;
    const auto greedy = run_matching(treated, controls, cfg, dist);
    const int opt_card = static_cast<int>(opt.pairs.size());
    const int greedy_card = static_cast<int>(greedy.pairs.size());
    if (opt_card == brute.cardinality && opt.total_distance() == brute.total) ++exact;
    if (greedy_card < opt_card || (greedy_card == opt_card && greedy.total_distance() >= opt.total_distance())) {
      ++greedy_ok;
    }
  }
  verdict(6, exact == kInstances && greedy_ok == kInstances,
          fmt::format("optimal == brute force in {}/{}; greedy >= optimal at equal cardinality in {}/{}", exact,
                      kInstances, greedy_ok, kInstances));
}

void criterion_permutation_calibration() {
  constexpr int kReps = 200;
  constexpr std::size_t kPairs = 200;
  constexpr std::size_t kPerm = 2000;
  Rng rng(77, 7);
  int rejections = 0;
  double min_p = 1.0;
  for (int rep = 0; rep < kReps; ++rep) {
    MatchedSample sample;
    for (std::size_t i = 0; i < kPairs; ++i) {
      MatchedPair p;
      p.treated.y = oracle::normal(rng);
      p.control.y = oracle::normal(rng);
      sample.pairs.push_back(p);
    }
    const double p = permutation_test(sample, kPerm, 1000 + rep);
    min_p = std::min(min_p, p);
    rejections += p < 0.05;
  }
  const double rate = static_cast<double>(rejections) / kReps;
  const double floor = 1.0 / (kPerm + 1);
  verdict(7, rate >= 0.025 && rate <= 0.10 && min_p >= floor,
          fmt::format("rejection rate {:.3f} at alpha 0.05; min p {:.5f} (floor {:.5f})", rate, min_p, floor));
}

void criterion_gbm() {
  Rng rng(8, 8);
  // noisy, non-separable labels for the monotone-loss check
  std::vector<FeatureRow> x;
  std::vector<int> y;
  for (int i = 0; i < 3000; ++i) {
    const FeatureRow row{1.0 + rng.below(4), static_cast<double>(static_cast<int>(rng.below(31)) - 15),
                         std::round(rng.uniform() * 7200.0) / 10.0};
    const double logit = -2.0 + 0.4 * row[0] - 0.1 * row[1] + (row[2] > 600.0 ? 1.0 : 0.0);
    x.push_back(row);
    y.push_back(rng.bernoulli(1.0 / (1.0 + std::exp(-logit))) ? 1 : 0);
  }
  GbmConfig full;
  full.n_trees = 500;
  full.bag_fraction = 1.0;
  std::vector<double> trace;
  fit_gbm(x, y, full, &trace);
  bool monotone = trace.size() == 501;
  std::size_t worst = 0;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace[k] > trace[k - 1]) {
      monotone = false;
      worst = k;
    }
  }

  std::vector<FeatureRow> tx;
  std::vector<int> ty;
  for (int i = 0; i < 2000; ++i) {
    const FeatureRow row{1.0 + rng.below(4), static_cast<double>(static_cast<int>(rng.below(31)) - 15),
                         std::round(rng.uniform() * 7200.0) / 10.0};
    tx.push_back(row);
    ty.push_back(row[2] > 360.0 ? 1 : 0);
  }
  GbmConfig toy;
  toy.n_trees = 200;
  const auto model = fit_gbm(tx, ty, toy);
  std::vector<double> scores;
  for (const auto& row : tx) scores.push_back(model.predict(row));
  const double auc = oracle::auc(scores, ty);

  GbmConfig none;
  none.n_trees = 0;
  const auto base = fit_gbm(x, y, none);
  const double rate = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
  bool base_exact = true;
  for (const auto& row : tx) base_exact = base_exact && base.predict(row) == rate;

  verdict(8, monotone && auc >= 0.99 && base_exact,
          fmt::format("loss {:.5f} -> {:.5f} non-increasing={}{}; separable AUC={:.4f}; zero-tree base rate exact={}",
                      trace.front(), trace.back(), monotone, monotone ? "" : fmt::format(" (first rise at {})", worst),
                      auc, base_exact));
}

void criterion_backdoor() {
  const auto dag = CausalDag::timeout_model();
  const std::vector<std::string> full{"U", "X_t", "dP_pre"};
  const std::vector<std::string> partial{"X_t", "dP_pre"};
  const bool fig_ok = backdoor_check(dag, "A_t", "dP_post", full) && !backdoor_check(dag, "A_t", "dP_post", partial);

  Rng rng(9, 9);
  int agree = 0;
  constexpr int kGraphs = 1000;
  for (int k = 0; k < kGraphs; ++k) {
    const auto g = oracle::random_dag(rng, 6, 0.4);
    CausalDag d;
    for (int v = 0; v < 6; ++v) d.add_node(fmt::format("v{}", v));
    for (int u = 0; u < 6; ++u) {
      for (int v = 0; v < 6; ++v) {
        if (g.adj[u][v]) d.add_edge(u, v);
      }
    }
    const int t = static_cast<int>(rng.below(6));
    int y = static_cast<int>(rng.below(5));
    if (y >= t) ++y;
    std::vector<char> z(6, 0);
    std::vector<int> members;
    for (int v = 0; v < 6; ++v) {
      if (v != t && v != y && rng.bernoulli(0.5)) {
        z[v] = 1;
        members.push_back(v);
      }
    }
    agree += backdoor_check(d, t, y, members) == oracle::backdoor(g, t, y, z);
  }
  verdict(9, fig_ok && agree == kGraphs,
          fmt::format("timeout DAG verdicts correct={}; random 6-node DAGs agreeing with moralization oracle {}/{}",
                      fig_ok, agree, kGraphs));
}

void criterion_dataset() {
  const char* path = std::getenv("STOPCLOCK_NBA_PBP");
  if (path == nullptr || *path == '\0') {
    skip(10, "STOPCLOCK_NBA_PBP not set; season dump unavailable");
    return;
  }
  std::ifstream in(path);
  if (!in) {
    verdict(10, false, fmt::format("cannot open {}", path));
    return;
  }
  const auto games = ingest_pbp(in).games;
  std::size_t instants = 0, timeouts = 0;
  for (const auto& g : games) {
    instants += g.instants.size();
    for (const auto& i : g.instants) timeouts += i.kind == InstantKind::timeout;
  }
  auto within = [](double v, double target, double rel) { return std::abs(v - target) <= rel * target; };
  bool pass = within(instants, 281373, 0.005) && within(timeouts, 17765, 0.005);
  std::string detail = fmt::format("instants={} timeouts={};", instants, timeouts);
  const double expected[] = {0.629, 0.421, 0.302};
  const auto naive = run_naive(games, {2, 4, 6}, 10000, 7);
  for (std::size_t i = 0; i < naive.size(); ++i) {
    pass = pass && std::abs(naive[i].summary.mean - expected[i]) <= 0.05;
    detail += fmt::format(" naive l{}={:.3f};", naive[i].lambda, naive[i].summary.mean);
  }
  int negative = 0, total = 0;
  for (Side side : {Side::home, Side::away}) {
    AnalyzeOptions opts;
    opts.lambdas = {2, 4, 6};
    opts.methods = {MatchMethod::no_balance, MatchMethod::mahalanobis, MatchMethod::propensity};
    opts.side = side;
    for (const auto& r : run_analysis(games, opts)) {
      const double te = r.report.te.value_or(NAN);
      pass = pass && std::abs(te) <= 0.1;
      negative += te < 0.0;
      ++total;
    }
  }
  pass = pass && 2 * negative > total;
  verdict(10, pass, detail + fmt::format(" grid |te|<=0.1, negative in {}/{}", negative, total));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  criterion_regression_to_mean();
  const auto pre = criterion_null_recovery();
  criterion_injected_effect();
  criterion_balance(pre);
  criterion_smd_units();
  criterion_matching_optimality();
  criterion_permutation_calibration();
  criterion_gbm();
  criterion_backdoor();
  criterion_dataset();
  std::printf("acceptance: %d failing check(s), %.1f s\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
