#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "leca/stats.hpp"

namespace leca::stats {
namespace {

// Exhaustive oracle: every way of assigning n of the n + m ranks to the first
// sample, counted by U, two-sided p = 2 min(P(U <= u), P(U >= u)).
double enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  int u_obs = 0;
  for (double x : a)
    for (double y : b) u_obs += x > y;
  std::vector<int> mask(static_cast<std::size_t>(n + m), 0);
  std::fill(mask.begin(), mask.begin() + n, 1);
  std::sort(mask.begin(), mask.end());
  long lower = 0, upper = 0, total = 0;
  do {
    // Positions are ranks 0..n+m-1; count pairs where a first-sample rank exceeds a second-sample rank.
    int u = 0, seen_b = 0;
    for (int v : mask) {
      if (v) u += seen_b;
      else ++seen_b;
    }
    ++total;
    lower += u <= u_obs;
    upper += u >= u_obs;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return std::min(1.0, 2.0 * static_cast<double>(std::min(lower, upper)) / static_cast<double>(total));
}

std::vector<double> draw(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(0.0, 100.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Summary, MeanStdevMedian) {
  const std::vector<double> v{1, 2, 4};
  EXPECT_NEAR(mean(v), 7.0 / 3.0, 1e-15);
  EXPECT_NEAR(stdev(v), std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) + (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2), 1e-15);
  EXPECT_EQ(median(v), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_TRUE(std::isnan(stdev(std::vector<double>{1.0})));
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(RankSum, SmallSeparatedSamples) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto r = rank_sum_test(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.u, 0.0);
  EXPECT_NEAR(r.p, 0.1, 1e-15);
}

TEST(RankSum, IdenticalSamples) {
  const std::vector<double> a{1.5, 2.5, 7, 9, 11};
  EXPECT_GE(rank_sum_test(a, a).p, 0.99);
  const std::vector<double> c(12, 3.0);
  EXPECT_GE(rank_sum_test(c, c).p, 0.99);
}

TEST(RankSum, LargeSeparatedSamplesUseNormalApproximation) {
  std::vector<double> a(10), b(10);
  std::iota(a.begin(), a.end(), 1.0);
  std::iota(b.begin(), b.end(), 11.0);
  const auto r = rank_sum_test(a, b);
  EXPECT_FALSE(r.exact);
  // Independent evaluation: U = 0, mu = 50, var = 100 * 21 / 12.
  const double z = (50.0 - 0.5) / std::sqrt(100.0 * 21.0 / 12.0);
  EXPECT_NEAR(r.p, std::erfc(z / std::sqrt(2.0)), 1e-14);
  EXPECT_LT(r.p, 0.001);
}

TEST(RankSum, ExactBranchMatchesEnumeration) {
  std::mt19937_64 rng(2024);
  for (int n = 1; n <= 8; ++n)
    for (int m = 1; m <= 8; ++m)
      for (int rep = 0; rep < 3; ++rep) {
        const auto a = draw(rng, n), b = draw(rng, m);
        EXPECT_NEAR(rank_sum_test(a, b, RankSumMethod::exact).p, enumerated_p(a, b), 1e-12) << n << "x" << m;
      }
}

TEST(RankSum, Symmetric) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = draw(rng, 3 + rep % 9), b = draw(rng, 2 + rep % 13);
    EXPECT_NEAR(rank_sum_test(a, b).p, rank_sum_test(b, a).p, 1e-12);
  }
  std::vector<double> tied_a{1, 1, 2, 3, 3, 3, 4, 5, 9, 9}, tied_b{2, 2, 3, 6, 7, 7, 8, 9, 10, 11, 12};
  EXPECT_NEAR(rank_sum_test(tied_a, tied_b).p, rank_sum_test(tied_b, tied_a).p, 1e-12);
}

TEST(RankSum, ExactAndNormalBranchesAgreeAtEightByEight) {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = draw(rng, 8), b = draw(rng, 8);
    EXPECT_NEAR(rank_sum_test(a, b, RankSumMethod::exact).p, rank_sum_test(a, b, RankSumMethod::normal).p, 0.02);
  }
}

TEST(RankSum, TiesForceNormalBranch) {
  const std::vector<double> a{1, 2, 2}, b{2, 3, 4};
  EXPECT_FALSE(rank_sum_test(a, b).exact);
  EXPECT_THROW(rank_sum_test(a, b, RankSumMethod::exact), std::invalid_argument);
  EXPECT_THROW(rank_sum_test(std::vector<double>{}, b), std::invalid_argument);
}

TEST(IncompleteBeta, MatchesBoost) {
  for (double a : {0.5, 1.0, 2.5, 10.0, 19.5, 100.0})
    for (double b : {0.5, 1.0, 3.0, 30.0})
      for (double x : {1e-6, 0.01, 0.2, 0.5, 0.77, 0.99, 0.999999})
        EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-10) << a << " " << b << " " << x;
}

TEST(StudentT, TwoSidedTailMatchesBoost) {
  for (double df : {1.0, 2.0, 5.0, 39.0, 200.0})
    for (double t : {0.0, 0.3, 1.0, 2.2, 5.0, 20.0}) {
      const boost::math::students_t dist(df);
      EXPECT_NEAR(student_t_two_sided(t, df), 2.0 * boost::math::cdf(boost::math::complement(dist, t)), 1e-10);
    }
}

TEST(PairedT, TextbookExample) {
  const std::vector<double> a{1, 2, 3}, zero{0, 0, 0};
  const auto r = paired_t_test(a, zero);
  EXPECT_NEAR(r.t, 3.4641, 1e-4);
  EXPECT_EQ(r.df, 2.0);
  EXPECT_NEAR(r.p, 1.0 - 2.0 * std::sqrt(3.0) / std::sqrt(14.0), 1e-12);
  EXPECT_NEAR(r.p, 0.0742, 1e-3);
}

TEST(PairedT, ZeroVarianceConventions) {
  const std::vector<double> a{5, 6, 7}, b{4, 5, 6};
  EXPECT_EQ(paired_t_test(a, a).p, 1.0);
  EXPECT_EQ(paired_t_test(a, b).p, 0.0);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), std::invalid_argument);
}

}  // namespace
}  // namespace leca::stats
