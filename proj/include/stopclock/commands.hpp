#pragma once

// Pipeline orchestration behind the command-line subcommands.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stopclock/cohort.hpp"
#include "stopclock/diagnostics.hpp"
#include "stopclock/inference.hpp"
#include "stopclock/matching.hpp"
#include "stopclock/pbp.hpp"
#include "stopclock/propensity.hpp"
#include "stopclock/simulator.hpp"

namespace stopclock {

inline constexpr std::string_view kVersion = "0.3.0";

/// Invalid flag combinations; maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IngestResult {
  std::vector<SegmentedGame> games;
  std::vector<std::string> skipped;  // "game: reason" for games dropped by skip_bad_games
};

/// Parses and segments a play-by-play file. Integrity errors abort unless
/// `skip_bad_games` is set, in which case the offending games are dropped.
IngestResult ingest_pbp(std::istream& in, bool skip_bad_games = false);

struct AnalyzeOptions {
  std::vector<int> lambdas{2};
  Side side = Side::home;
  std::vector<MatchMethod> methods{MatchMethod::propensity};
  MatchAlgorithm algorithm = MatchAlgorithm::optimal;
  Subgroup subgroup = Subgroup::all;
  std::size_t permutations = 10000;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool allow_any_lambda = false;
  GbmConfig gbm;

  void validate() const;  // throws UsageError
};

struct AnalysisResult {
  EffectReport report;
  MatchedSample sample;
  std::vector<BalanceRow> balance;
  std::optional<GbmModel> model;  // propensity runs only
};

/// cohort -> subgroup -> control prefilter -> (propensity fit | covariance) ->
/// matching -> balance -> inference, for every lambda x method.
std::vector<AnalysisResult> run_analysis(const std::vector<SegmentedGame>& games, const AnalyzeOptions& options);

struct NaiveResult {
  int lambda = 0;
  NaiveSummary summary;
  TestResult wilcoxon;
  TestResult bootstrap;
  std::vector<double> outcomes;
};

/// Treated outcomes of both sides pooled, per lambda. Throws
/// std::runtime_error when there is no treated unit.
std::vector<NaiveResult> run_naive(const std::vector<SegmentedGame>& games, const std::vector<int>& lambdas,
                                   std::size_t n_boot, std::uint64_t seed);

nlohmann::ordered_json report_json(const EffectReport& r);

void write_pairs_header(std::ostream& out);
void write_pairs(std::ostream& out, const MatchedSample& sample);

/// Shared by the subcommands: `flags` are echoed into manifest.json in `out_dir`.
struct CommandContext {
  std::string out_dir;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
};

void cmd_ingest(const std::string& input, const CommandContext& ctx, bool skip_bad_games);
void cmd_simulate(const SimConfig& config, const CommandContext& ctx);
/// Returns true when any report carries a warning.
bool cmd_analyze(const std::string& instants, const AnalyzeOptions& options, const CommandContext& ctx,
                 bool dump_model, bool export_distributions);
void cmd_naive(const std::string& instants, const std::vector<int>& lambdas, std::size_t n_boot, std::uint64_t seed,
               const CommandContext& ctx);

}  // namespace stopclock
