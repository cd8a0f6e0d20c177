#include "stopclock/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "stopclock/parallel.hpp"
#include "stopclock/rng.hpp"

namespace stopclock {

MatchMethod parse_method(std::string_view name) {
  if (name == "nb" || name == "no_balance" || name == "no-balance") return MatchMethod::no_balance;
  if (name == "mahalanobis" || name == "m") return MatchMethod::mahalanobis;
  if (name == "propensity" || name == "p") return MatchMethod::propensity;
  throw std::invalid_argument("unknown matching method '" + std::string(name) + "'");
}

MatchAlgorithm parse_algorithm(std::string_view name) {
  if (name == "optimal") return MatchAlgorithm::optimal;
  if (name == "greedy") return MatchAlgorithm::greedy;
  throw std::invalid_argument("unknown matching algorithm '" + std::string(name) + "'");
}

std::string_view to_string(MatchMethod m) noexcept {
  switch (m) {
    case MatchMethod::no_balance:
      return "no_balance";
    case MatchMethod::mahalanobis:
      return "mahalanobis";
    case MatchMethod::propensity:
      break;
  }
  return "propensity";
}

std::string_view to_string(MatchAlgorithm a) noexcept { return a == MatchAlgorithm::optimal ? "optimal" : "greedy"; }

double MatchedSample::total_distance() const noexcept {
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.distance;
  return sum;
}

bool feasible(const Unit& treated, const Unit& control, int lambda) noexcept {
  return treated.game_id == control.game_id && treated.dpre_num == control.dpre_num &&
         std::abs(treated.t - control.t) > 2 * lambda;
}

Covariance mahalanobis_cov(std::span<const FeatureRow> rows) {
  if (rows.size() < 4) throw std::invalid_argument("covariance needs at least 4 units");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& r : rows) mean += Eigen::Vector3d(r[0], r[1], r[2]);
  mean /= static_cast<double>(rows.size());
  Covariance out;
  for (const auto& r : rows) {
    const Eigen::Vector3d d = Eigen::Vector3d(r[0], r[1], r[2]) - mean;
    out.cov += d * d.transpose();
  }
  out.cov /= static_cast<double>(rows.size() - 1);

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(out.cov);
  const Eigen::Vector3d values = eig.eigenvalues();
  const double tol = std::max(values.cwiseAbs().maxCoeff(), 1e-300) * 1e-10;
  Eigen::Vector3d inv_values;
  for (int i = 0; i < 3; ++i) {
    if (values[i] > tol) {
      inv_values[i] = 1.0 / values[i];
    } else {
      inv_values[i] = 0.0;
      out.singular = true;
    }
  }
  out.inverse = eig.eigenvectors() * inv_values.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

Covariance mahalanobis_cov(std::span<const Unit> units) {
  std::vector<FeatureRow> rows;
  rows.reserve(units.size());
  for (const auto& u : units) rows.push_back(features(u));
  return mahalanobis_cov(rows);
}

double mahalanobis_distance(const FeatureRow& a, const FeatureRow& b, const Eigen::Matrix3d& inverse) noexcept {
  const Eigen::Vector3d d(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
  return std::sqrt(std::max(0.0, d.dot(inverse * d)));
}

std::optional<double> distance(const MatchConfig& config, const GbmModel* model, const Unit& treated,
                               const Unit& control, const Covariance* cov) {
  if (config.method == MatchMethod::propensity && !model) {
    throw std::invalid_argument("propensity matching requires a fitted model");
  }
  if (config.method == MatchMethod::mahalanobis && !cov) {
    throw std::invalid_argument("mahalanobis matching requires a covariance");
  }
  if (!feasible(treated, control, config.lambda)) return std::nullopt;
  switch (config.method) {
    case MatchMethod::no_balance:
      return 0.0;
    case MatchMethod::mahalanobis:
      return mahalanobis_distance(features(treated), features(control), cov->inverse);
    case MatchMethod::propensity:
      break;
  }
  return std::abs(model->predict(features(treated)) - model->predict(features(control)));
}

DistanceFn make_distance(const MatchConfig& config, const GbmModel* model, const Covariance* cov) {
  // validate eagerly so misuse fails before any matching work
  if (config.method == MatchMethod::propensity && !model) {
    throw std::invalid_argument("propensity matching requires a fitted model");
  }
  if (config.method == MatchMethod::mahalanobis && !cov) {
    throw std::invalid_argument("mahalanobis matching requires a covariance");
  }
  return [config, model, cov](const Unit& t, const Unit& c) { return distance(config, model, t, c, cov); };
}

std::int64_t scaled_cost(double distance) noexcept { return std::llround(distance * kCostScale); }

std::vector<int> min_cost_max_matching(int n_left, int n_right, std::span<const AssignmentEdge> edges) {
  // Node layout: source, left vertices, right vertices, sink.
  const int source = 0;
  const int sink = n_left + n_right + 1;
  const int n_nodes = sink + 1;
  struct Arc {
    int to;
    int cap;
    std::int64_t cost;
  };
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> adj(n_nodes);
  auto add_arc = [&](int from, int to, std::int64_t cost) {
    adj[from].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({to, 1, cost});
    adj[to].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({from, 0, -cost});
  };
  for (int l = 0; l < n_left; ++l) add_arc(source, 1 + l, 0);
  for (int r = 0; r < n_right; ++r) add_arc(1 + n_left + r, sink, 0);
  for (const auto& e : edges) {
    if (e.left < 0 || e.left >= n_left || e.right < 0 || e.right >= n_right) {
      throw std::invalid_argument("assignment edge out of range");
    }
    if (e.cost < 0) throw std::invalid_argument("assignment costs must be non-negative");
    add_arc(1 + e.left, 1 + n_left + e.right, e.cost);
  }

  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> potential(n_nodes, 0);
  std::vector<std::int64_t> dist(n_nodes);
  std::vector<int> via(n_nodes);
  std::vector<char> done(n_nodes);

  for (;;) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(via.begin(), via.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[source] = 0;
    // dense Dijkstra; per-game graphs are small
    for (;;) {
      int u = -1;
      for (int v = 0; v < n_nodes; ++v) {
        if (!done[v] && dist[v] < kInf && (u < 0 || dist[v] < dist[u])) u = v;
      }
      if (u < 0) break;
      done[u] = 1;
      for (int a : adj[u]) {
        const Arc& arc = arcs[a];
        if (arc.cap <= 0) continue;
        const std::int64_t nd = dist[u] + arc.cost + potential[u] - potential[arc.to];
        if (nd < dist[arc.to]) {
          dist[arc.to] = nd;
          via[arc.to] = a;
        }
      }
    }
    if (dist[sink] >= kInf) break;
    for (int v = 0; v < n_nodes; ++v) {
      if (dist[v] < kInf) potential[v] += dist[v];
    }
    for (int v = sink; v != source;) {
      const int a = via[v];
      arcs[a].cap -= 1;
      arcs[a ^ 1].cap += 1;
      v = arcs[a ^ 1].to;
    }
  }

  std::vector<int> match(n_left, -1);
  for (int l = 0; l < n_left; ++l) {
    for (int a : adj[1 + l]) {
      const Arc& arc = arcs[a];
      if ((a & 1) == 0 && arc.to > n_left && arc.to < sink && arc.cap == 0) match[l] = arc.to - 1 - n_left;
    }
  }
  return match;
}

namespace {

struct GameBlock {
  std::vector<int> treated;
  std::vector<int> controls;
};

std::vector<GameBlock> group_by_game(std::span<const Unit> treated, std::span<const Unit> controls) {
  std::map<std::string_view, GameBlock> blocks;
  for (int i = 0; i < static_cast<int>(treated.size()); ++i) blocks[treated[i].game_id].treated.push_back(i);
  for (int j = 0; j < static_cast<int>(controls.size()); ++j) {
    auto it = blocks.find(controls[j].game_id);
    if (it != blocks.end()) it->second.controls.push_back(j);
  }
  std::vector<GameBlock> out;
  out.reserve(blocks.size());
  for (auto& [id, block] : blocks) {
    if (!block.controls.empty()) out.push_back(std::move(block));
  }
  return out;
}

void sort_pairs(std::vector<MatchedPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const MatchedPair& a, const MatchedPair& b) {
    if (a.treated.game_id != b.treated.game_id) return a.treated.game_id < b.treated.game_id;
    return a.treated.t < b.treated.t;
  });
}

}  // namespace

MatchedSample optimal_match(std::span<const Unit> treated, std::span<const Unit> controls, const MatchConfig& config,
                            const DistanceFn& dist) {
  MatchedSample sample{{}, config.method, config.lambda, config.side};
  const auto blocks = group_by_game(treated, controls);
  std::vector<std::vector<MatchedPair>> per_game(blocks.size());

  parallel_for(blocks.size(), config.threads, [&](std::size_t b) {
    const GameBlock& block = blocks[b];
    std::vector<AssignmentEdge> edges;
    std::vector<double> real_cost;
    for (int i = 0; i < static_cast<int>(block.treated.size()); ++i) {
      for (int j = 0; j < static_cast<int>(block.controls.size()); ++j) {
        const auto d = dist(treated[block.treated[i]], controls[block.controls[j]]);
        if (!d) continue;
        edges.push_back({i, j, scaled_cost(*d)});
        real_cost.push_back(*d);
      }
    }
    if (edges.empty()) return;
    const auto match = min_cost_max_matching(static_cast<int>(block.treated.size()),
                                             static_cast<int>(block.controls.size()), edges);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (match[edges[e].left] != edges[e].right) continue;
      per_game[b].push_back(
          {treated[block.treated[edges[e].left]], controls[block.controls[edges[e].right]], real_cost[e]});
    }
  });

  for (auto& pairs : per_game) {
    for (auto& p : pairs) sample.pairs.push_back(std::move(p));
  }
  sort_pairs(sample.pairs);
  return sample;
}

MatchedSample greedy_match(std::span<const Unit> treated, std::span<const Unit> controls, const MatchConfig& config,
                           const DistanceFn& dist) {
  MatchedSample sample{{}, config.method, config.lambda, config.side};
  std::map<std::string_view, std::vector<int>> controls_by_game;
  for (int j = 0; j < static_cast<int>(controls.size()); ++j) controls_by_game[controls[j].game_id].push_back(j);

  std::vector<int> order(treated.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(config.seed, 0x67726565);
  rng.shuffle(std::span<int>(order));

  std::vector<char> used(controls.size(), 0);
  for (int i : order) {
    auto it = controls_by_game.find(treated[i].game_id);
    if (it == controls_by_game.end()) continue;
    int best = -1;
    double best_d = 0.0;
    for (int j : it->second) {
      if (used[j]) continue;
      const auto d = dist(treated[i], controls[j]);
      if (!d) continue;
      if (best < 0 || *d < best_d || (*d == best_d && controls[j].t < controls[best].t)) {
        best = j;
        best_d = *d;
      }
    }
    if (best < 0) continue;
    used[best] = 1;
    sample.pairs.push_back({treated[i], controls[best], best_d});
  }
  sort_pairs(sample.pairs);
  return sample;
}

MatchedSample run_matching(std::span<const Unit> treated, std::span<const Unit> controls, const MatchConfig& config,
                           const DistanceFn& dist) {
  return config.algorithm == MatchAlgorithm::optimal ? optimal_match(treated, controls, config, dist)
                                                     : greedy_match(treated, controls, config, dist);
}

}  // namespace stopclock
