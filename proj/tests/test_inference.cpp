#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stopclock/inference.hpp"

using namespace stopclock;

namespace {

MatchedSample from_differences(const std::vector<double>& d) {
  MatchedSample s;
  for (double x : d) {
    MatchedPair p;
    p.treated.y = x;
    p.control.y = 0.0;
    s.pairs.push_back(p);
  }
  return s;
}

// Exact two-sided sign-flip p-value over all 2^n patterns.
double exact_sign_flip(const std::vector<double>& d) {
  const std::size_t n = d.size();
  double obs = 0.0;
  for (double x : d) obs += x;
  std::size_t extreme = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? -d[i] : d[i];
    if (std::abs(s) >= std::abs(obs) - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(std::uint64_t{1} << n);
}

}  // namespace

TEST_CASE("effect estimate") {
  CHECK(estimate_te(from_differences({1, -1, 2})) == doctest::Approx(2.0 / 3.0));
  MatchedSample same;
  for (int i = 0; i < 5; ++i) {
    MatchedPair p;
    p.treated.y = p.control.y = 0.5 * i;
    same.pairs.push_back(p);
  }
  CHECK(estimate_te(same) == 0.0);
  CHECK_THROWS_AS(estimate_te(MatchedSample{}), std::invalid_argument);

  Rng rng(1);
  MatchedSample s;
  for (int i = 0; i < 30; ++i) {
    MatchedPair p;
    p.treated.y = oracle::normal(rng);
    p.control.y = oracle::normal(rng);
    s.pairs.push_back(p);
  }
  MatchedSample swapped = s;
  for (auto& p : swapped.pairs) std::swap(p.treated, p.control);
  CHECK(estimate_te(swapped) == doctest::Approx(-estimate_te(s)));
  double mean_diff = 0.0;
  for (double d : pair_differences(s)) mean_diff += d / 30.0;
  CHECK(estimate_te(s) == doctest::Approx(mean_diff));
}

TEST_CASE("permutation p-values") {
  SUBCASE("all differences zero") { CHECK(permutation_test(from_differences(std::vector<double>(20, 0.0)), 999, 1) == 1.0); }
  SUBCASE("fifty identical positive differences") {
    const double p = permutation_test(from_differences(std::vector<double>(50, 5.0)), 10000, 2);
    CHECK(p <= 0.001);
    CHECK(p >= 1.0 / 10001.0);
  }
  SUBCASE("agrees with full enumeration on small samples") {
    Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> d(12);
      for (auto& x : d) x = oracle::normal(rng) + 0.4;
      const double mc = permutation_test(from_differences(d), 200000, 10 + rep);
      CHECK(std::abs(mc - exact_sign_flip(d)) < 0.006);
    }
  }
  SUBCASE("deterministic for any worker count") {
    Rng rng(4);
    std::vector<double> d(300);
    for (auto& x : d) x = oracle::normal(rng);
    const auto s = from_differences(d);
    const double one = permutation_test(s, 5000, 9, 1);
    CHECK(permutation_test(s, 5000, 9, 3) == one);
    CHECK(permutation_test(s, 5000, 9, 8) == one);
    CHECK(permutation_test(s, 5000, 10, 1) != one);
  }
}

TEST_CASE("sign-flip distribution shifted nulls") {
  Rng rng(5);
  std::vector<double> d(80);
  for (auto& x : d) x = oracle::normal(rng) + 1.0;
  const SignFlipDistribution dist(d, 4000, 11);
  CHECK(dist.n_pairs() == 80);
  CHECK(dist.n_perm() == 4000);
  double sum = 0.0;
  for (double x : d) sum += x;
  CHECK(dist.sum() == doctest::Approx(sum));
  // testing tau equal to the mean itself can never reject
  CHECK(dist.p_value(sum / 80.0) == 1.0);
  // shifting every difference by -tau matches the unshifted test on shifted data
  const double tau = 0.7;
  std::vector<double> shifted(d);
  for (auto& x : shifted) x -= tau;
  const SignFlipDistribution moved(shifted, 4000, 11);
  CHECK(dist.p_value(tau) == doctest::Approx(moved.p_value(0.0)).epsilon(1e-12));
}

TEST_CASE("confidence intervals") {
  Rng rng(6);
  std::vector<double> d(150);
  for (auto& x : d) x = oracle::normal(rng);
  const auto s = from_differences(d);
  const auto ci99 = invert_ci(s, 0.01, 5000, 3);
  const auto ci95 = invert_ci(s, 0.05, 5000, 3);
  const double te = estimate_te(s);
  CHECK(ci99.level == doctest::Approx(0.99));
  CHECK(ci99.lo <= te);
  CHECK(te <= ci99.hi);
  CHECK(ci99.lo <= 0.0);
  CHECK(ci99.hi >= 0.0);
  CHECK(ci99.lo <= ci95.lo);
  CHECK(ci95.hi <= ci99.hi);
  CHECK_FALSE(ci99.degenerate);
  CHECK_FALSE(ci99.truncated);

  // endpoints are accepted, points one resolution step outside are rejected
  const SignFlipDistribution dist(d, 5000, 3);
  CHECK(dist.p_value(ci95.lo) >= 0.05);
  CHECK(dist.p_value(ci95.hi) >= 0.05);
  CHECK(dist.p_value(ci95.lo - 2 * kCiResolution) < 0.05);
  CHECK(dist.p_value(ci95.hi + 2 * kCiResolution) < 0.05);

  // rough agreement with the t interval for normal data
  double sd = 0.0;
  for (double x : d) sd += (x - te) * (x - te);
  sd = std::sqrt(sd / 149.0);
  const double half = 1.96 * sd / std::sqrt(150.0);
  CHECK(ci95.hi - ci95.lo == doctest::Approx(2 * half).epsilon(0.15));
}

TEST_CASE("nesting holds across many samples") {
  Rng rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> d(40 + rep);
    for (auto& x : d) x = oracle::normal(rng) * (1 + rep % 3) + 0.2;
    const auto s = from_differences(d);
    const auto wide = invert_ci(s, 0.01, 2000, rep);
    const auto mid = invert_ci(s, 0.05, 2000, rep);
    const auto narrow = invert_ci(s, 0.2, 2000, rep);
    CHECK(wide.lo <= mid.lo);
    CHECK(mid.lo <= narrow.lo);
    CHECK(narrow.hi <= mid.hi);
    CHECK(mid.hi <= wide.hi);
  }
}

TEST_CASE("degenerate interval") {
  const auto ci = invert_ci(from_differences(std::vector<double>(10, 0.25)), 0.01, 1000, 1);
  CHECK(ci.degenerate);
  CHECK(ci.lo == 0.25);
  CHECK(ci.hi == 0.25);
}

TEST_CASE("Wilcoxon signed-rank") {
  SUBCASE("symmetric values") {
    const auto r = wilcoxon_one_sample(std::vector<double>{-2, -1, 1, 2});
    CHECK(r.exact);
    CHECK(r.p_value == 1.0);
    // tied ranks 1.5 and 3.5 on the positive side
    CHECK(r.statistic == 5.0);
  }
  SUBCASE("twenty positives") {
    std::vector<double> v;
    for (int i = 1; i <= 20; ++i) v.push_back(i * 0.3);
    const auto r = wilcoxon_one_sample(v);
    CHECK(r.p_value < 0.001);
    CHECK(r.p_value == doctest::Approx(2.0 / std::pow(2.0, 20)));
  }
  SUBCASE("single zero") {
    const auto r = wilcoxon_one_sample(std::vector<double>{0.0});
    CHECK(r.degenerate);
    CHECK(r.p_value == 1.0);
    CHECK(r.n_used == 0);
  }
  SUBCASE("exact p matches enumeration, with ties and zeros") {
    Rng rng(8);
    for (int rep = 0; rep < 40; ++rep) {
      const int n = 3 + static_cast<int>(rng.below(12));
      std::vector<double> v(n);
      for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(9)) - 3);
      const auto r = wilcoxon_one_sample(v);
      std::vector<double> nz;
      for (double x : v) {
        if (x != 0.0) nz.push_back(x);
      }
      CHECK(r.n_used == nz.size());
      if (nz.empty()) continue;
      // doubled mid-ranks by counting
      std::vector<int> ranks;
      int w2 = 0;
      for (double x : nz) {
        int less = 0, equal = 0;
        for (double y : nz) {
          less += std::abs(y) < std::abs(x);
          equal += std::abs(y) == std::abs(x);
        }
        const int r2 = 2 * less + equal + 1;
        ranks.push_back(r2);
        if (x > 0) w2 += r2;
      }
      CHECK(r.statistic == doctest::Approx(w2 / 2.0));
      CHECK(r.p_value == doctest::Approx(std::min(1.0, oracle::wilcoxon_enumerated(ranks, w2))).epsilon(1e-9));
    }
  }
  SUBCASE("normal approximation above the exact limit") {
    std::vector<double> v;
    for (int i = 1; i <= 40; ++i) v.push_back(i % 2 ? i : -i);
    const auto r = wilcoxon_one_sample(v);
    CHECK_FALSE(r.exact);
    // W+ = 400 against mean 410 and sd sqrt(40*41*81/24)
    const double z = (400.0 - 410.0) / std::sqrt(40.0 * 41.0 * 81.0 / 24.0);
    CHECK(r.p_value == doctest::Approx(std::erfc(std::abs(z) / std::sqrt(2.0))));
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(wilcoxon_one_sample(std::vector<double>{}), std::invalid_argument); }
}

TEST_CASE("bootstrap mean test") {
  SUBCASE("zeros") {
    const auto r = bootstrap_mean_test(std::vector<double>(30, 0.0), 500, 1);
    CHECK(r.p_value == 1.0);
    CHECK(r.degenerate);
  }
  SUBCASE("mean far beyond the noise hits the floor") {
    Rng rng(9);
    std::vector<double> v(100);
    for (auto& x : v) x = 3.0 + oracle::normal(rng);
    const auto r = bootstrap_mean_test(v, 2000, 2);
    CHECK(r.p_value == 1.0 / 2001.0);
  }
  SUBCASE("calibration under the null") {
    Rng rng(10);
    int rejections = 0;
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> v(40);
      for (auto& x : v) x = oracle::normal(rng);
      rejections += bootstrap_mean_test(v, 1000, 100 + rep).p_value < 0.05;
    }
    const double rate = rejections / 200.0;
    CHECK(rate >= 0.025);
    CHECK(rate <= 0.10);
  }
  SUBCASE("argument errors") {
    CHECK_THROWS_AS(bootstrap_mean_test(std::vector<double>{}, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(bootstrap_mean_test(std::vector<double>{1.0}, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("naive summary") {
  Unit u;
  u.y = 0.5;
  const auto s = naive_stmc_summary(std::vector<Unit>{u});
  CHECK(s.mean == 0.5);
  CHECK(s.n == 1);
  CHECK_THROWS_AS(naive_stmc_summary(std::vector<Unit>{}), std::invalid_argument);
}

TEST_CASE("analysis report") {
  Rng rng(11);
  std::vector<double> d(100);
  for (auto& x : d) x = oracle::normal(rng);
  auto s = from_differences(d);
  s.method = MatchMethod::mahalanobis;
  s.lambda = 4;
  s.side = Side::away;
  InferenceConfig cfg;
  cfg.n_perm = 2000;
  cfg.seed = 5;
  const auto r = analyze_sample(s, Subgroup::minus_last5, cfg);
  CHECK(r.n_pairs == 100);
  REQUIRE(r.te);
  CHECK(*r.te == doctest::Approx(estimate_te(s)));
  CHECK(r.p_value == permutation_test(s, 2000, 5));
  CHECK(r.p_value >= 1.0 / 2001.0);
  CHECK(r.ci.lo <= *r.te);
  CHECK(*r.te <= r.ci.hi);
  CHECK(r.ci.level == doctest::Approx(0.99));
  CHECK(r.lambda == 4);
  CHECK(r.side == Side::away);
  CHECK(r.warnings.empty());

  const auto empty = analyze_sample(MatchedSample{}, Subgroup::all, cfg);
  CHECK_FALSE(empty.te);
  CHECK(empty.n_pairs == 0);
  CHECK(empty.warnings.size() == 1);
}
