#include "stopclock/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "stopclock/parallel.hpp"
#include "stopclock/rng.hpp"

namespace stopclock {

std::vector<double> pair_differences(const MatchedSample& sample) {
  std::vector<double> d;
  d.reserve(sample.pairs.size());
  for (const auto& p : sample.pairs) d.push_back(p.treated.y - p.control.y);
  return d;
}

double estimate_te(const MatchedSample& sample) {
  if (sample.pairs.empty()) throw std::invalid_argument("estimate_te on an empty matched sample");
  double t = 0.0, c = 0.0;
  for (const auto& p : sample.pairs) {
    t += p.treated.y;
    c += p.control.y;
  }
  const auto n = static_cast<double>(sample.pairs.size());
  return t / n - c / n;
}

SignFlipDistribution::SignFlipDistribution(std::span<const double> differences, std::size_t n_perm,
                                           std::uint64_t seed, unsigned threads)
    : n_(differences.size()), a_(n_perm, 0.0), b_(n_perm, 0.0) {
  if (n_perm == 0) throw std::invalid_argument("n_perm must be positive");
  if (differences.empty()) throw std::invalid_argument("permutation test on an empty sample");
  for (double d : differences) {
    sum_ += d;
    abs_sum_ += std::abs(d);
  }
  const std::size_t batches = (n_perm + kBatch - 1) / kBatch;
  parallel_for(batches, threads, [&](std::size_t batch) {
    Rng rng(seed, batch);
    const std::size_t end = std::min(n_perm, (batch + 1) * kBatch);
    for (std::size_t k = batch * kBatch; k < end; ++k) {
      double a = 0.0;
      long long b = 0;
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < n_; ++i) {
        if (i % 64 == 0) word = rng.bits();
        if (word & 1u) {
          a += differences[i];
          ++b;
        } else {
          a -= differences[i];
          --b;
        }
        word >>= 1;
      }
      a_[k] = a;
      b_[k] = static_cast<double>(b);
    }
  });
}

double SignFlipDistribution::p_value(double tau) const {
  const double n = static_cast<double>(n_);
  const double observed = std::abs(sum_ - n * tau);
  // permutation statistics that tie the observed one up to rounding count as extreme
  const double tol = 1e-9 * (abs_sum_ + n * std::abs(tau));
  std::size_t extreme = 0;
  for (std::size_t k = 0; k < a_.size(); ++k) {
    if (std::abs(a_[k] - tau * b_[k]) >= observed - tol) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(a_.size() + 1);
}

double permutation_test(const MatchedSample& sample, std::size_t n_perm, std::uint64_t seed, unsigned threads) {
  const auto d = pair_differences(sample);
  return SignFlipDistribution(d, n_perm, seed, threads).p_value(0.0);
}

ConfidenceInterval invert_ci(const SignFlipDistribution& dist, double te, double sd_diff, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  ConfidenceInterval ci;
  ci.level = 1.0 - alpha;
  ci.lo = ci.hi = te;
  if (!(sd_diff > 0.0)) {
    ci.degenerate = true;
    return ci;
  }
  const double reach = 10.0 * sd_diff;
  // p is non-increasing as tau moves away from te on either side
  auto search = [&](double outer) {
    if (dist.p_value(outer) >= alpha) {
      ci.truncated = true;
      return outer;
    }
    double accepted = te;
    double rejected = outer;
    while (std::abs(accepted - rejected) > kCiResolution) {
      const double mid = 0.5 * (accepted + rejected);
      if (dist.p_value(mid) >= alpha) {
        accepted = mid;
      } else {
        rejected = mid;
      }
    }
    return accepted;
  };
  ci.lo = search(te - reach);
  ci.hi = search(te + reach);
  return ci;
}

namespace {

double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool all_equal(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace

ConfidenceInterval invert_ci(const MatchedSample& sample, double alpha, std::size_t n_perm, std::uint64_t seed,
                             unsigned threads) {
  const auto d = pair_differences(sample);
  SignFlipDistribution dist(d, n_perm, seed, threads);
  const double te = estimate_te(sample);
  return invert_ci(dist, te, all_equal(d) ? 0.0 : sample_sd(d, te), alpha);
}

TestResult wilcoxon_one_sample(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("wilcoxon test on an empty sample");
  std::vector<double> nz;
  for (double v : values) {
    if (v != 0.0) nz.push_back(v);
  }
  TestResult r;
  r.n_used = nz.size();
  if (nz.empty()) {
    r.degenerate = true;
    return r;
  }
  const std::size_t n = nz.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(nz[i]) < std::abs(nz[j]); });

  // doubled mid-ranks keep everything integral
  std::vector<long long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
    const auto shared = static_cast<long long>(i + 1 + j + 1);  // 2 * mean rank
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = shared;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (nz[i] > 0) w2 += rank2[i];
  }
  r.statistic = static_cast<double>(w2) / 2.0;

  const double dn = static_cast<double>(n);
  if (n <= kWilcoxonExactMax) {
    r.exact = true;
    const long long total = std::accumulate(rank2.begin(), rank2.end(), 0LL);
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    for (long long rk : rank2) {
      for (long long s = total; s >= rk; --s) ways[s] += ways[s - rk];
    }
    double below = 0.0, above = 0.0, all = 0.0;
    for (long long s = 0; s <= total; ++s) {
      all += ways[s];
      if (s <= w2) below += ways[s];
      if (s >= w2) above += ways[s];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(below, above) / all);
  } else {
    const double mean = dn * (dn + 1.0) / 4.0;
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      r.degenerate = true;
      return r;
    }
    const double z = (r.statistic - mean) / std::sqrt(var);
    r.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  return r;
}

TestResult bootstrap_mean_test(std::span<const double> values, std::size_t n_boot, std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap test on an empty sample");
  if (n_boot == 0) throw std::invalid_argument("n_boot must be positive");
  const std::size_t n = values.size();
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  const double observed = std::abs(mean);
  const double tol = 1e-12 * (std::abs(mean) + 1.0);
  Rng rng(seed, 0x626f6f74);
  std::size_t extreme = 0;
  for (std::size_t b = 0; b < n_boot; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
    if (std::abs(s / static_cast<double>(n) - mean) >= observed - tol) ++extreme;
  }
  TestResult r;
  r.n_used = n;
  r.statistic = mean;
  r.degenerate = observed == 0.0;
  r.p_value = static_cast<double>(1 + extreme) / static_cast<double>(n_boot + 1);
  return r;
}

NaiveSummary naive_stmc_summary(std::span<const Unit> treated) {
  if (treated.empty()) throw std::invalid_argument("empty treated set");
  NaiveSummary s;
  s.n = treated.size();
  double sum = 0.0;
  for (const auto& u : treated) sum += u.y;
  s.mean = sum / static_cast<double>(s.n);
  return s;
}

EffectReport analyze_sample(const MatchedSample& sample, Subgroup subgroup, const InferenceConfig& config) {
  EffectReport r;
  r.method = sample.method;
  r.lambda = sample.lambda;
  r.side = sample.side;
  r.subgroup = subgroup;
  r.n_pairs = sample.pairs.size();
  r.n_permutations = config.n_perm;
  r.seed = config.seed;
  r.ci.level = 1.0 - config.alpha;
  if (sample.pairs.empty()) {
    r.warnings.emplace_back("empty matched sample");
    return r;
  }
  const auto d = pair_differences(sample);
  const double te = estimate_te(sample);
  r.te = te;
  SignFlipDistribution dist(d, config.n_perm, config.seed, config.threads);
  r.p_value = dist.p_value(0.0);
  r.ci = invert_ci(dist, te, all_equal(d) ? 0.0 : sample_sd(d, te), config.alpha);
  if (r.ci.degenerate) r.warnings.emplace_back("all pair differences are equal; interval collapsed to the estimate");
  if (r.ci.truncated) r.warnings.emplace_back("interval endpoint reached the search bracket");
  return r;
}

}  // namespace stopclock
