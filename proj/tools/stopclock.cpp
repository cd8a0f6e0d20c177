// stopclock: play-by-play ingestion, simulation and timeout-effect analysis.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stopclock/commands.hpp"
#include "stopclock/errors.hpp"
#include "stopclock/parallel.hpp"

namespace {

using namespace stopclock;
using ojson = nlohmann::ordered_json;

template <typename T>
std::vector<std::string> names(const std::vector<T>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) out.emplace_back(to_string(v));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timeout-effect analysis for basketball play-by-play data"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: STOPCLOCK_THREADS or 1)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Segment a play-by-play CSV into game instants");
  std::string ingest_input, ingest_out = ".";
  bool skip_bad = false;
  ingest->add_option("--input", ingest_input, "Play-by-play CSV")->required();
  ingest->add_option("--out-dir", ingest_out, "Output directory");
  ingest->add_flag("--skip-bad-games", skip_bad, "Drop games that fail integrity checks instead of aborting");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic season");
  SimConfig sim;
  std::string sim_out = ".";
  simulate->add_option("--games", sim.n_games, "Number of games")->capture_default_str();
  simulate->add_option("--delta", sim.delta, "Injected per-possession effect for the caller")->capture_default_str();
  simulate->add_option("--theta", sim.policy.theta, "Momentum trigger on dpre")->capture_default_str();
  simulate->add_option("--pi0", sim.policy.pi0, "Base call probability")->capture_default_str();
  simulate->add_option("--pi1", sim.policy.pi1, "Call probability under momentum")->capture_default_str();
  simulate->add_option("--lambda", sim.lambda, "Possessions the effect lasts")->capture_default_str();
  simulate->add_option("--window", sim.policy.window, "Momentum look-back of the timeout policy")
      ->capture_default_str();
  simulate->add_option("--cooldown", sim.policy.cooldown, "Boundaries after a timeout with no team timeout")
      ->capture_default_str();
  simulate->add_option("--possessions", sim.possessions_per_quarter, "Possessions per quarter")
      ->capture_default_str();
  simulate->add_option("--timeouts-per-half", sim.timeouts_per_half, "Team timeout budget per half")
      ->capture_default_str();
  simulate->add_option("--official-marks", sim.official_marks, "Clock marks for official timeouts")
      ->capture_default_str();
  simulate->add_option("--skew-quarter", sim.policy.skew_quarter, "Call-probability tilt by quarter");
  simulate->add_option("--skew-seconds", sim.policy.skew_seconds, "Call-probability tilt by clock");
  simulate->add_option("--skew-margin", sim.policy.skew_margin, "Call-probability tilt by margin");
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  simulate->add_option("--out-dir", sim_out, "Output directory");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Match timeouts to controls and estimate the effect");
  AnalyzeOptions opt;
  std::string an_input, an_out = ".", side = "home", algorithm = "optimal", subgroup = "all";
  std::vector<std::string> methods{"propensity"};
  bool dump_model = false, export_dist = false;
  analyze->add_option("--instants", an_input, "instants.csv from ingest")->required();
  analyze->add_option("--lambda", opt.lambdas, "Window half-length (repeatable)")->capture_default_str();
  analyze->add_flag("--allow-any-lambda", opt.allow_any_lambda, "Accept even lambdas outside {2, 4, 6}");
  analyze->add_option("--side", side, "home or away")->check(CLI::IsMember({"home", "away"}))->capture_default_str();
  analyze->add_option("--method", methods, "nb | mahalanobis | propensity (repeatable)")
      ->check(CLI::IsMember({"nb", "no_balance", "mahalanobis", "propensity"}))
      ->capture_default_str();
  analyze->add_option("--algorithm", algorithm, "optimal or greedy")
      ->check(CLI::IsMember({"optimal", "greedy"}))
      ->capture_default_str();
  analyze->add_option("--subgroup", subgroup, "all | minus-last5 | only-last5")
      ->check(CLI::IsMember({"all", "minus-last5", "only-last5"}))
      ->capture_default_str();
  analyze->add_option("--permutations", opt.permutations, "Monte Carlo permutations")->capture_default_str();
  analyze->add_option("--alpha", opt.alpha, "Test level for the interval")->capture_default_str();
  analyze->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  analyze->add_option("--trees", opt.gbm.n_trees, "Boosting iterations")->capture_default_str();
  analyze->add_flag("--dump-model", dump_model, "Write the fitted propensity model as JSON");
  analyze->add_flag("--export-distributions", export_dist, "Write matched covariate histograms");
  analyze->add_option("--out-dir", an_out, "Output directory");

  // naive
  auto* naive = app.add_subcommand("naive", "Treated-only STMC summary with Wilcoxon and bootstrap tests");
  std::string nv_input, nv_out = ".";
  std::vector<int> nv_lambdas{2, 4, 6};
  std::size_t n_boot = 10000;
  std::uint64_t nv_seed = 0;
  naive->add_option("--instants", nv_input, "instants.csv from ingest")->required();
  naive->add_option("--lambda", nv_lambdas, "Window half-length (repeatable)")->capture_default_str();
  naive->add_option("--bootstrap", n_boot, "Bootstrap resamples")->capture_default_str();
  naive->add_option("--seed", nv_seed, "Random seed")->capture_default_str();
  naive->add_option("--out-dir", nv_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const unsigned workers = resolve_threads(threads);
  auto context = [&](const std::string& dir, const CLI::App* sub) {
    CommandContext ctx;
    ctx.out_dir = dir;
    ctx.flags["threads"] = workers;
    for (const auto* o : sub->get_options()) {
      if (o->get_name().empty() || o->get_name() == "--help") continue;
      const auto results = o->results();
      ctx.flags[o->get_name()] = o->count() ? ojson(results) : ojson(nullptr);
    }
    return ctx;
  };

  try {
    if (*ingest) {
      cmd_ingest(ingest_input, context(ingest_out, ingest), skip_bad);
    } else if (*simulate) {
      sim.threads = workers;
      cmd_simulate(sim, context(sim_out, simulate));
    } else if (*analyze) {
      opt.side = parse_side(side);
      opt.methods.clear();
      for (const auto& m : methods) opt.methods.push_back(parse_method(m));
      opt.algorithm = parse_algorithm(algorithm);
      opt.subgroup = parse_subgroup(subgroup);
      opt.threads = workers;
      cmd_analyze(an_input, opt, context(an_out, analyze), dump_model, export_dist);
    } else if (*naive) {
      cmd_naive(nv_input, nv_lambdas, n_boot, nv_seed, context(nv_out, naive));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const RowError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
