#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace leca::stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); NaN for fewer than two values.
inline double stdev(std::span<const double> v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Continued fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double f = 1.0, c = 1.0, d = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const int m = i / 2;
    double num;
    if (i == 0) {
      num = 1.0;
    } else if (i % 2 == 0) {
      num = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    } else {
      num = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    }
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    const double cd = c * d;
    f *= cd;
    if (std::abs(1.0 - cd) < eps) break;
  }
  return std::exp(log_front) * (f - 1.0) / a;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t;
  double df;
  double p;
};

/// Two-sided paired t-test on a - b. Zero-variance differences give p = 1
/// when their mean is zero and p = 0 otherwise.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test needs equal-length samples");
  if (a.size() < 2) throw std::invalid_argument("paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double m = mean(d);
  const double s = stdev(d);
  const double df = static_cast<double>(d.size() - 1);
  if (s == 0.0) {
    if (m == 0.0) return {0.0, df, 1.0};
    return {m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), df, 0.0};
  }
  const double t = m / (s / std::sqrt(static_cast<double>(d.size())));
  return {t, df, student_t_two_sided(t, df)};
}

enum class RankSumMethod { automatic, exact, normal };

struct RankSumResult {
  double u;       ///< Mann-Whitney U of the first sample
  double p;       ///< two-sided
  bool exact;
};

namespace detail {

/// Midranks of the pooled sample; also returns sum over tie groups of t^3 - t.
inline std::pair<std::vector<double>, double> midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(n);
  double ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  return {std::move(rank), ties};
}

/// Null distribution of U for sample sizes (n, m): counts[u] = number of
/// rank arrangements giving U = u, built with the standard recursion.
inline std::vector<double> u_distribution(std::size_t n, std::size_t m) {
  // f[j][u] for the current n; iterate n from 0.
  const std::size_t umax = n * m;
  std::vector<std::vector<double>> prev(m + 1, std::vector<double>(umax + 1, 0.0)), cur = prev;
  for (std::size_t j = 0; j <= m; ++j) prev[j][0] = 1.0;  // n = 0
  for (std::size_t i = 1; i <= n; ++i) {
    for (auto& row : cur) std::fill(row.begin(), row.end(), 0.0);
    cur[0][0] = 1.0;
    for (std::size_t j = 1; j <= m; ++j) {
      for (std::size_t u = 0; u <= i * j; ++u) {
        // Largest pooled value belongs to the first sample (adds j) or the second.
        double v = cur[j - 1][u];
        if (u >= j) v += prev[j][u - j];
        cur[j][u] = v;
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace detail

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test. `automatic` uses the exact
/// null distribution when min(n, m) <= 8 and there are no ties, otherwise the
/// normal approximation with tie and continuity corrections.
inline RankSumResult rank_sum_test(std::span<const double> a, std::span<const double> b,
                                   RankSumMethod method = RankSumMethod::automatic) {
  if (a.empty() || b.empty()) throw std::invalid_argument("rank-sum test needs two non-empty samples");
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto [rank, ties] = detail::midranks(pooled);
  double r_a = 0.0;
  for (std::size_t i = 0; i < n; ++i) r_a += rank[i];
  const double u = r_a - static_cast<double>(n * (n + 1)) / 2.0;

  bool exact = method == RankSumMethod::exact;
  if (method == RankSumMethod::automatic) exact = std::min(n, m) <= 8 && ties == 0.0;
  if (exact && ties != 0.0) throw std::invalid_argument("exact rank-sum test requires untied data");

  if (exact) {
    const auto counts = detail::u_distribution(n, m);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto u_obs = static_cast<std::size_t>(std::llround(u));
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k <= u_obs; ++k) lower += counts[k];
    for (std::size_t k = u_obs; k < counts.size(); ++k) upper += counts[k];
    return {u, std::min(1.0, 2.0 * std::min(lower, upper) / total), true};
  }

  const double nn = static_cast<double>(n), mm = static_cast<double>(m), big_n = nn + mm;
  const double mu = nn * mm / 2.0;
  const double var = nn * mm / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
  if (!(var > 0.0)) return {u, 1.0, false};
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
  return {u, std::min(1.0, std::erfc(z / std::sqrt(2.0))), false};
}

}  // namespace leca::stats
