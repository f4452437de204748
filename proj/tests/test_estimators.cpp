#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "evopo/estimators.hpp"
#include "evopo/estimators_bruteforce.hpp"

namespace est = evopo::estimators;

namespace {

std::vector<double> random_rewards(std::mt19937_64& rng, std::size_t n, bool with_ties = false) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> r(n);
  for (auto& x : r) x = with_ties ? std::round(u(rng)) : u(rng);
  return r;
}

// Closed-form KL for a two-point reward vector {0, 1}, independent of the library path.
double two_point_kl(double beta) {
  const double q = 1.0 / (1.0 + std::exp(beta));
  return std::log(2.0) + q * std::log(q) + (1 - q) * std::log(1 - q);
}

double two_point_root(double gamma) {
  double lo = 0, hi = 50;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (two_point_kl(mid) < gamma ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(GrpoAdvantage, ConstantRewardsCenterToZero) {
  auto a = est::grpo_advantage(std::vector<double>{1, 1, 1, 1}, 1e-8);
  for (double x : a) EXPECT_EQ(x, 0.0);
}

TEST(GrpoAdvantage, TwoPoint) {
  auto a = est::grpo_advantage(std::vector<double>{0, 1}, 0.0);
  EXPECT_DOUBLE_EQ(a[0], -1.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
}

TEST(GrpoAdvantage, FourPoint) {
  auto a = est::grpo_advantage(std::vector<double>{0, 1, 2, 3}, 0.0);
  const double sigma = std::sqrt(1.25);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], (i - 1.5) / sigma, 1e-15);
  EXPECT_NEAR(a[0], -1.3416, 1e-4);
  EXPECT_NEAR(a[1], -0.4472, 1e-4);
}

TEST(GrpoAdvantage, RejectsSingleton) {
  EXPECT_THROW(est::grpo_advantage(std::vector<double>{1.0}, 1e-8), evopo::InvalidGroup);
}

TEST(GroupRelativeRaw, Examples) {
  EXPECT_EQ(est::group_relative_raw(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(est::group_relative_raw(std::vector<double>{0, 1, 2, 3}), (std::vector<double>{-1.5, -0.5, 0.5, 1.5}));
  EXPECT_THROW(est::group_relative_raw(std::vector<double>{}), evopo::InvalidGroup);
}

TEST(GroupRelativeRaw, AffineIdentityAndZeroSum) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uc(-100, 100), ud(1e-3, 1e3);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_rewards(rng, 2 + trial % 9);
    const double c = uc(rng), d = ud(rng);
    std::vector<double> g(r.size());
    std::transform(r.begin(), r.end(), g.begin(), [&](double x) { return c + d * x; });
    auto ag = est::group_relative_raw(g);
    auto ar = est::group_relative_raw(r);
    const double sum = std::accumulate(ag.begin(), ag.end(), 0.0);
    EXPECT_NEAR(sum, 0.0, 1e-9 * static_cast<double>(g.size()) * std::max(1.0, std::abs(c)));
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(ag[i], d * ar[i], 1e-10 * std::max(1.0, std::abs(c)));
  }
}

TEST(EntropicBeta, ZeroBudgetGivesZero) {
  auto b = est::entropic_beta(std::vector<double>{0.3, 1.2, -4.0}, 0.0, 50.0, 1e-6);
  EXPECT_EQ(b.beta, 0.0);
  EXPECT_FALSE(b.saturated);
}

TEST(EntropicBeta, TwoPointMatchesClosedFormRoot) {
  const double gamma = 0.13081;
  const double oracle = two_point_root(gamma);
  EXPECT_NEAR(oracle, std::log(3.0), 1e-4);
  auto b = est::entropic_beta(std::vector<double>{0, 1}, gamma, 50.0, 1e-6);
  EXPECT_NEAR(b.beta, oracle, 1e-9);
  EXPECT_NEAR(b.beta, std::log(3.0), 1e-4);
  EXPECT_NEAR(b.kl, gamma, 1e-6);
}

TEST(EntropicBeta, ConstantRewardsUnreachable) {
  EXPECT_THROW(est::entropic_beta(std::vector<double>{2, 2, 2}, 0.1, 50.0, 1e-6), evopo::UnreachableBudget);
}

TEST(EntropicBeta, SaturatesWhenBudgetExceedsMaximum) {
  // KL is bounded by ln(N / #argmax) = ln 2 here.
  auto b = est::entropic_beta(std::vector<double>{0, 1}, 0.9, 50.0, 1e-6);
  EXPECT_TRUE(b.saturated);
  EXPECT_EQ(b.beta, 50.0);
}

TEST(EntropicBeta, KlIsMonotoneAndRootIsAccurate) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ug(0.01, 0.5);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_rewards(rng, 2 + trial % 9);
    double prev = -1;
    for (double beta = 0; beta <= 20; beta += 0.25) {
      const double kl = est::entropic_kl(std::span<const double>(r), beta);
      EXPECT_GE(kl, prev - 1e-12);
      prev = kl;
    }
    const double gamma = ug(rng);
    auto b = est::entropic_beta(r, gamma, 50.0, 1e-6);
    if (!b.saturated) {
      EXPECT_NEAR(est::entropic_kl(std::span<const double>(r), b.beta), gamma, 1e-6);
    }
  }
}

TEST(EntropicAdvantage, Examples) {
  for (double x : est::entropic_advantage(std::vector<double>{0.5, -2, 9}, 0.0, 0.0)) EXPECT_EQ(x, 0.0);
  auto a = est::entropic_advantage(std::vector<double>{0, 1}, std::log(3.0), 0.0);
  EXPECT_NEAR(a[0], -2.0 / 3.0, 1e-10);
  EXPECT_NEAR(a[1], 2.0, 1e-10);
  for (double x : est::entropic_advantage(std::vector<double>{1, 1, 1}, 5.0, 0.0)) EXPECT_EQ(x, 0.0);
}

TEST(PkpoWeights, Examples) {
  auto w = est::pkpo_weights(std::vector<double>{3, 2, 1}, 2);
  EXPECT_NEAR(w[0], 2.0, 1e-12);
  EXPECT_NEAR(w[1], 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[2], 5.0 / 3.0, 1e-12);

  std::vector<double> r{0.7, -1.2, 4.4, 2.0};
  auto w1 = est::pkpo_weights(r, 1);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(w1[i], r[i] / 4.0, 1e-12);
  auto wn = est::pkpo_weights(r, 4);
  for (double x : wn) EXPECT_NEAR(x, 4.4, 1e-12);
  EXPECT_THROW(est::pkpo_weights(r, 0), evopo::InvalidK);
  EXPECT_THROW(est::pkpo_weights(r, 5), evopo::InvalidK);
}

TEST(PkpoWeights, MatchesEnumerationAndExpectedBestOfK) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 1; n <= 10; ++n)
    for (int k = 1; k <= static_cast<int>(n); ++k)
      for (int trial = 0; trial < 20; ++trial) {
        auto r = random_rewards(rng, n, trial % 2 == 0);
        auto w = est::pkpo_weights(r, k);
        auto oracle = est::pkpo_weights_bruteforce(std::span<const double>(r), k);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(w[i], oracle[i], 1e-12);
        const double avg = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
        EXPECT_NEAR(avg * static_cast<double>(n) / k, est::expected_best_of_k_bruteforce(std::span<const double>(r), k),
                    1e-12);
      }
}

TEST(SlooWeights, Examples) {
  auto w = est::sloo_weights(std::vector<double>{3, 2, 1}, 2);
  EXPECT_NEAR(w[0], 1.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_THROW(est::sloo_weights(std::vector<double>{3, 2, 1}, 1), evopo::InvalidK);
  EXPECT_THROW(est::sloo_weights(std::vector<double>{3, 2, 1}, 4), evopo::InvalidK);
}

TEST(SlooBruteforce, Examples) {
  auto w2 = est::sloo_weights_bruteforce(std::vector<double>{3, 2, 1}, 2);
  EXPECT_NEAR(w2[0], 1.0, 1e-15);
  EXPECT_NEAR(w2[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(w2[2], 0.0);
  auto w3 = est::sloo_weights_bruteforce(std::vector<double>{3, 2, 1}, 3);
  EXPECT_EQ(w3, (std::vector<double>{1, 0, 0}));
  EXPECT_THROW(est::sloo_weights_bruteforce(std::vector<double>(21, 1.0), 2), evopo::EnumerationGuard);
}

TEST(SlooWeights, OracleEquivalenceIncludingTies) {
  std::mt19937_64 rng(5);
  for (std::size_t n = 2; n <= 10; ++n)
    for (int k = 2; k <= static_cast<int>(n); ++k)
      for (int trial = 0; trial < 40; ++trial) {
        auto r = random_rewards(rng, n, trial % 3 == 0);
        auto fast = est::sloo_weights(r, k);
        auto slow = est::sloo_weights_bruteforce(r, k);
        for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(fast[i], slow[i], 1e-12) << "n=" << n << " k=" << k;
      }
}

TEST(SlooWeights, ZeroTailNonNegativeAndRankMonotone) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const int k = 2 + trial % static_cast<int>(n - 1);
    auto r = random_rewards(rng, n);
    auto w = est::sloo_weights(r, k);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return r[a] > r[b]; });
    for (std::size_t p = 0; p < n; ++p) {
      EXPECT_GE(w[order[p]], 0.0);
      if (p + 1 < n) {
        EXPECT_GE(w[order[p]], w[order[p + 1]]);
      }
      if (p >= n - static_cast<std::size_t>(k - 1)) {
        EXPECT_EQ(w[order[p]], 0.0);
      }
    }
  }
}

TEST(SlooWeights, AffineEquivariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uc(-100, 100);
  std::uniform_real_distribution<double> ulogd(-6, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const int k = 2 + trial % static_cast<int>(n - 1);
    auto r = random_rewards(rng, n);
    const double c = uc(rng), d = std::pow(10.0, ulogd(rng));
    std::vector<double> g(n);
    std::transform(r.begin(), r.end(), g.begin(), [&](double x) { return c + d * x; });
    auto wg = est::sloo_weights(g, k);
    auto wr = est::sloo_weights(r, k);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(wg[i], d * wr[i], 1e-10);
  }
}

TEST(Standardize, Examples) {
  EXPECT_TRUE(est::standardize(std::vector<double>{1, 1, 1}, 1e-8, 1e-6).skipped());
  auto b = est::standardize(std::vector<double>{0, 1, 2, 3}, 0.0, 1e-6);
  ASSERT_FALSE(b.skipped());
  auto g = est::grpo_advantage(std::vector<double>{0, 1, 2, 3}, 0.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(b.values[i], g[i], 1e-15);
  EXPECT_THROW(est::standardize(std::vector<double>{1.0}, 0.0, 1e-6), evopo::InvalidGroup);
}

TEST(Standardize, NonFiniteBranchIsSkipped) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(est::standardize(std::vector<double>{0, inf, 1}, 1e-8, 1e-6).skipped());
  EXPECT_TRUE(est::standardize(std::vector<double>{0, std::nan(""), 1}, 1e-8, 1e-6).skipped());
}

TEST(Standardize, AffineInvarianceNormBoundArgmax) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ua(-50, 50), ub(0.01, 100), ueps(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 12;
    auto x = random_rewards(rng, n);
    const double a = ua(rng), b = ub(rng);
    std::vector<double> y(n);
    std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return a + b * v; });
    auto sx = est::standardize(x, 0.0, 1e-9);
    auto sy = est::standardize(y, 0.0, 1e-9);
    ASSERT_FALSE(sx.skipped());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(sx.values[i], sy.values[i], 1e-9);

    auto se = est::standardize(x, ueps(rng), 1e-9);
    double sq = 0;
    for (double v : se.values) sq += v * v;
    EXPECT_LE(sq, static_cast<double>(n) + 1e-9);
    EXPECT_NEAR(std::accumulate(se.values.begin(), se.values.end(), 0.0), 0.0, 1e-9);
    const auto ax = std::max_element(x.begin(), x.end()) - x.begin();
    const auto as = std::max_element(se.values.begin(), se.values.end()) - se.values.begin();
    EXPECT_EQ(ax, as);
  }
}

TEST(Standardize, SkipRuleOnCompressedBatches) {
  std::mt19937_64 rng(19);
  const double eps_skip = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_rewards(rng, 8);
    const double sigma = evopo::population_std(std::span<const double>(r));
    // place delta on either side of the threshold, away from the rounding band
    const double ratio = trial % 2 == 0 ? 0.5 : 2.0;
    const double delta = ratio * eps_skip / sigma;
    std::vector<double> g(r.size());
    std::transform(r.begin(), r.end(), g.begin(), [&](double x) { return 0.25 + delta * x; });
    EXPECT_EQ(est::standardize(g, 1e-8, eps_skip).skipped(), ratio < 1.0);
  }
}

TEST(MixAdvantages, EndpointsAndMidpoint) {
  auto g = est::standardize(std::vector<double>{0, 1, 5}, 0.0, 1e-6);
  auto k = est::standardize(std::vector<double>{2, 0, 1}, 0.0, 1e-6);
  EXPECT_EQ(*est::mix_advantages(g, k, 0.0), g.values);
  EXPECT_EQ(*est::mix_advantages(g, k, 1.0), k.values);

  est::BranchOutcome<double> a{est::BranchKind::Standardized, {-1, 1}, 0, 1};
  est::BranchOutcome<double> b{est::BranchKind::Standardized, {1, -1}, 0, 1};
  EXPECT_EQ(*est::mix_advantages(a, b, 0.5), (std::vector<double>{0, 0}));
}

TEST(MixAdvantages, SkippedBranches) {
  est::BranchOutcome<double> live{est::BranchKind::Standardized, {-1, 1}, 0, 1};
  est::BranchOutcome<double> dead{};
  EXPECT_EQ(*est::mix_advantages(live, dead, 0.25), (std::vector<double>{-0.75, 0.75}));
  EXPECT_FALSE(est::mix_advantages(live, dead, 1.0).has_value());
  EXPECT_EQ(*est::mix_advantages(dead, live, 0.25), (std::vector<double>{-0.25, 0.25}));
  EXPECT_FALSE(est::mix_advantages(dead, live, 0.0).has_value());
  EXPECT_FALSE(est::mix_advantages(dead, dead, 0.5).has_value());
}

TEST(MixAdvantages, RejectsBadInput) {
  est::BranchOutcome<double> a{est::BranchKind::Standardized, {-1, 1}, 0, 1};
  est::BranchOutcome<double> b{est::BranchKind::Standardized, {-1, 0, 1}, 0, 1};
  EXPECT_THROW(est::mix_advantages(a, b, 0.5), evopo::InvalidInput);
  EXPECT_THROW(est::mix_advantages(a, a, 1.5), evopo::InvalidInput);
}

TEST(PhaseAlpha, Schedule) {
  EXPECT_EQ(est::phase_alpha(0, 1000), 0.0);
  EXPECT_EQ(est::phase_alpha(1000, 1000), 1.0);
  EXPECT_EQ(est::phase_alpha(500, 1000), 0.5);
  double prev = -1;
  for (int t = 0; t <= 37; ++t) {
    const double a = est::phase_alpha(t, 37);
    EXPECT_GE(a, prev);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    prev = a;
  }
  EXPECT_THROW(est::phase_alpha(1001, 1000), evopo::InvalidIteration);
  EXPECT_THROW(est::phase_alpha(-1, 1000), evopo::InvalidIteration);
  EXPECT_THROW(est::phase_alpha(0, 0), evopo::InvalidIteration);
}
