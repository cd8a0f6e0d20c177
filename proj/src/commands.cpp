#include "stopclock/commands.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "stopclock/csv.hpp"
#include "stopclock/errors.hpp"
#include "stopclock/rng.hpp"
#include "stopclock/stmc.hpp"

namespace stopclock {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

IngestResult ingest_pbp(std::istream& in, bool skip_bad_games) {
  IngestResult result;
  for (const auto& game : parse_pbp(in)) {
    try {
      result.games.push_back({game.game_id, segment_instants(game)});
    } catch (const IntegrityError& e) {
      if (!skip_bad_games) throw;
      result.skipped.emplace_back(e.what());
    }
  }
  return result;
}

void AnalyzeOptions::validate() const {
  if (lambdas.empty()) throw UsageError("at least one --lambda is required");
  for (int l : lambdas) {
    if (l < 2 || l % 2 != 0) throw UsageError(fmt::format("lambda must be a positive even integer, got {}", l));
    if (!allow_any_lambda && l != 2 && l != 4 && l != 6) {
      throw UsageError(fmt::format("lambda {} outside {{2, 4, 6}}; pass --allow-any-lambda to use it", l));
    }
  }
  if (methods.empty()) throw UsageError("at least one --method is required");
  if (permutations == 0) throw UsageError("--permutations must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
}

namespace {

std::vector<Unit> concat(const std::vector<Unit>& a, const std::vector<Unit>& b) {
  std::vector<Unit> all(a);
  all.insert(all.end(), b.begin(), b.end());
  return all;
}

}  // namespace

std::vector<AnalysisResult> run_analysis(const std::vector<SegmentedGame>& games, const AnalyzeOptions& options) {
  options.validate();
  std::vector<AnalysisResult> results;
  for (int lambda : options.lambdas) {
    const Cohort cohort = build_units(games, lambda, options.side);
    const auto treated = subgroup_filter(cohort.treated, options.subgroup);
    const auto pool = subgroup_filter(cohort.control_pool, options.subgroup);
    const auto controls = prefilter_controls(treated, pool);
    const bool matchable = !treated.empty() && !controls.empty();

    std::optional<GbmModel> model;
    std::optional<Covariance> cov;
    for (MatchMethod method : options.methods) {
      AnalysisResult res;
      std::vector<std::string> notes;
      MatchConfig mc{method, lambda, options.side, options.algorithm, options.seed, options.threads};
      bool ready = matchable;
      if (!matchable) notes.emplace_back(treated.empty() ? "no treated units" : "no feasible controls");
      if (ready && method == MatchMethod::propensity) {
        if (!model) {
          GbmConfig gc = options.gbm;
          gc.seed = derive_seed(options.seed, static_cast<std::uint64_t>(lambda));
          model = fit_propensity(concat(treated, controls), gc);
        }
        res.model = model;
      }
      if (ready && method == MatchMethod::mahalanobis && !cov) {
        const auto pooled = concat(treated, controls);
        if (pooled.size() < 4) {
          ready = false;
          notes.emplace_back("too few units for a covariance estimate");
        } else {
          cov = mahalanobis_cov(pooled);
          if (cov->singular) notes.emplace_back("singular covariance; using the pseudo-inverse");
        }
      }
      if (ready) {
        const auto dist = make_distance(mc, model ? &*model : nullptr, cov ? &*cov : nullptr);
        res.sample = run_matching(treated, controls, mc, dist);
      } else {
        res.sample.method = method;
        res.sample.lambda = lambda;
        res.sample.side = options.side;
      }
      res.balance = balance_table(treated, pool, res.sample);
      res.report = analyze_sample(res.sample, options.subgroup,
                                  {options.permutations, options.alpha, options.seed, options.threads});
      res.report.warnings.insert(res.report.warnings.begin(), notes.begin(), notes.end());
      results.push_back(std::move(res));
    }
  }
  return results;
}

std::vector<NaiveResult> run_naive(const std::vector<SegmentedGame>& games, const std::vector<int>& lambdas,
                                   std::size_t n_boot, std::uint64_t seed) {
  std::vector<NaiveResult> out;
  for (int lambda : lambdas) {
    require_lambda(lambda);
    NaiveResult r;
    r.lambda = lambda;
    for (Side side : {Side::home, Side::away}) {
      for (const auto& u : build_units(games, lambda, side).treated) r.outcomes.push_back(u.y);
    }
    if (r.outcomes.empty()) throw std::runtime_error(fmt::format("empty treated set for lambda {}", lambda));
    r.summary.n = r.outcomes.size();
    double sum = 0.0;
    for (double y : r.outcomes) sum += y;
    r.summary.mean = sum / static_cast<double>(r.summary.n);
    r.wilcoxon = wilcoxon_one_sample(r.outcomes);
    r.bootstrap = bootstrap_mean_test(r.outcomes, n_boot, derive_seed(seed, static_cast<std::uint64_t>(lambda)));
    out.push_back(std::move(r));
  }
  return out;
}

ojson report_json(const EffectReport& r) {
  ojson j;
  j["method"] = std::string(to_string(r.method));
  j["lambda"] = r.lambda;
  j["side"] = std::string(to_string(r.side));
  j["subgroup"] = std::string(to_string(r.subgroup));
  j["n_pairs"] = r.n_pairs;
  j["te"] = r.te ? ojson(*r.te) : ojson(nullptr);
  j["p_value"] = r.p_value;
  ojson ci;
  ci["lo"] = r.te ? ojson(r.ci.lo) : ojson(nullptr);
  ci["hi"] = r.te ? ojson(r.ci.hi) : ojson(nullptr);
  ci["level"] = r.ci.level;
  j["ci"] = ci;
  j["n_permutations"] = r.n_permutations;
  j["seed"] = r.seed;
  j["warnings"] = r.warnings;
  return j;
}

void write_pairs_header(std::ostream& out) {
  csv::write_row(out, {"method", "lambda", "side", "game_id", "t_treated", "t_control", "distance", "y_treated",
                       "y_control"});
}

void write_pairs(std::ostream& out, const MatchedSample& sample) {
  for (const auto& p : sample.pairs) {
    csv::write_row(out, {std::string(to_string(sample.method)), std::to_string(sample.lambda),
                         std::string(to_string(sample.side)), p.treated.game_id, std::to_string(p.treated.t),
                         std::to_string(p.control.t), csv::format_double(p.distance),
                         csv::format_double(p.treated.y), csv::format_double(p.control.y)});
  }
}

namespace {

class Manifest {
 public:
  Manifest(std::string subcommand, const CommandContext& ctx)
      : ctx_(ctx), start_(std::chrono::steady_clock::now()), started_(std::time(nullptr)) {
    j_["subcommand"] = std::move(subcommand);
    j_["version"] = std::string(kVersion);
    j_["flags"] = ctx.flags;
    j_["inputs"] = ojson::array();
    j_["outputs"] = ojson::array();
    j_["warnings"] = ojson::array();
  }

  void input(const std::string& path) { j_["inputs"].push_back(path); }

  // Opens an output file in the run directory and records it.
  std::ofstream output(const std::string& name) {
    const auto path = fs::path(ctx_.out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    j_["outputs"].push_back(path.string());
    return out;
  }

  void warn(const std::string& w) { j_["warnings"].push_back(w); }

  void set(const std::string& key, ojson value) { j_[key] = std::move(value); }

  void write() {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["started_at"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(started_));
    j_["wall_clock_seconds"] = elapsed;
    std::ofstream out(fs::path(ctx_.out_dir) / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest.json");
    out << j_.dump(2) << '\n';
  }

 private:
  const CommandContext& ctx_;
  std::chrono::steady_clock::time_point start_;
  std::time_t started_;
  ojson j_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

std::vector<SegmentedGame> load_instants(const std::string& path) {
  auto in = open_input(path);
  return read_instants_csv(in);
}

}  // namespace

void cmd_ingest(const std::string& input, const CommandContext& ctx, bool skip_bad_games) {
  ensure_dir(ctx.out_dir);
  Manifest m("ingest", ctx);
  m.input(input);
  auto in = open_input(input);
  const auto result = ingest_pbp(in, skip_bad_games);
  for (const auto& s : result.skipped) {
    std::cerr << "warning: skipped " << s << '\n';
    m.warn("skipped " + s);
  }
  auto out = m.output("instants.csv");
  write_instants_csv(out, result.games);
  std::size_t instants = 0, timeouts = 0;
  for (const auto& g : result.games) {
    instants += g.instants.size();
    for (const auto& i : g.instants) timeouts += i.kind == InstantKind::timeout ? 1 : 0;
  }
  m.set("n_games", result.games.size());
  m.set("n_instants", instants);
  m.set("n_timeouts", timeouts);
  m.write();
}

void cmd_simulate(const SimConfig& config, const CommandContext& ctx) {
  ensure_dir(ctx.out_dir);
  Manifest m("simulate", ctx);
  m.set("seed", config.seed);
  const auto sim = generate(config);
  auto pbp = m.output("pbp.csv");
  write_sim_pbp(pbp, sim);
  auto truth = m.output("truth.json");
  write_truth_json(truth, config);
  m.write();
}

bool cmd_analyze(const std::string& instants, const AnalyzeOptions& options, const CommandContext& ctx,
                 bool dump_model, bool export_distributions) {
  options.validate();
  ensure_dir(ctx.out_dir);
  Manifest m("analyze", ctx);
  m.input(instants);
  m.set("seed", options.seed);
  const auto games = load_instants(instants);
  const auto results = run_analysis(games, options);

  ojson reports = ojson::array();
  bool warned = false;
  for (const auto& r : results) {
    reports.push_back(report_json(r.report));
    for (const auto& w : r.report.warnings) {
      warned = true;
      std::cerr << fmt::format("warning: {} lambda={}: {}\n", to_string(r.report.method), r.report.lambda, w);
    }
  }
  auto report = m.output("report.json");
  report << reports.dump(2) << '\n';

  auto balance = m.output("balance.csv");
  write_balance_header(balance);
  for (const auto& r : results) write_balance_rows(balance, r.report.lambda, r.report.method, r.balance);

  auto pairs = m.output("pairs.csv");
  write_pairs_header(pairs);
  for (const auto& r : results) write_pairs(pairs, r.sample);

  if (dump_model) {
    for (const auto& r : results) {
      if (!r.model) continue;
      auto out = m.output(fmt::format("propensity_lambda{}.json", r.report.lambda));
      out << r.model->to_json().dump(1) << '\n';
    }
  }
  if (export_distributions) {
    auto out = m.output("distributions.csv");
    out << "lambda,method,";
    write_histogram_header(out);
    for (const auto& r : results) {
      if (r.sample.pairs.empty()) continue;
      for (auto cov : kBalanceCovariates) {
        std::ostringstream rows;
        write_histogram(rows, cov, distribution_export(r.sample, cov));
        std::istringstream lines(rows.str());
        for (std::string line; std::getline(lines, line);) {
          out << r.report.lambda << ',' << to_string(r.report.method) << ',' << line << '\n';
        }
      }
    }
  }
  m.write();
  return warned;
}

void cmd_naive(const std::string& instants, const std::vector<int>& lambdas, std::size_t n_boot, std::uint64_t seed,
               const CommandContext& ctx) {
  for (int l : lambdas) {
    if (l < 2 || l % 2 != 0) throw UsageError(fmt::format("lambda must be a positive even integer, got {}", l));
  }
  ensure_dir(ctx.out_dir);
  Manifest m("naive", ctx);
  m.input(instants);
  m.set("seed", seed);
  const auto games = load_instants(instants);
  const auto results = run_naive(games, lambdas, n_boot, seed);

  ojson arr = ojson::array();
  for (const auto& r : results) {
    ojson j;
    j["lambda"] = r.lambda;
    j["mean"] = r.summary.mean;
    j["n"] = r.summary.n;
    j["wilcoxon_p"] = r.wilcoxon.p_value;
    j["wilcoxon_exact"] = r.wilcoxon.exact;
    j["bootstrap_p"] = r.bootstrap.p_value;
    j["n_boot"] = n_boot;
    j["seed"] = seed;
    arr.push_back(j);
  }
  auto out = m.output("naive.json");
  out << arr.dump(2) << '\n';

  auto density = m.output("naive_density.csv");
  write_histogram_header(density);
  for (const auto& r : results) {
    const std::vector<std::string> names{"treated"};
    const std::vector<std::vector<double>> values{r.outcomes};
    write_histogram(density, fmt::format("stmc_lambda{}", r.lambda), build_histogram(names, values));
  }
  m.write();
}

}  // namespace stopclock
