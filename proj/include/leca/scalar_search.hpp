#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

namespace leca::search {

struct Extremum {
  double x;
  double value;
};

/// Golden-section maximization of a unimodal function on [lo, hi].
/// The better endpoint wins if it beats the interior estimate, so maxima that
/// sit on a bound are returned exactly.
template <class F>
Extremum golden_section_maximize(F&& f, double lo, double hi, double tol = 1e-10,
                                 int max_iter = 200) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  Extremum best{0.5 * (a + b), f(0.5 * (a + b))};
  for (double x : {lo, hi}) {
    const double v = f(x);
    if (v > best.value) best = {x, v};
  }
  return best;
}

/// Evenly spaced grid over [lo, hi] with the requested step; both endpoints
/// are always present and the last point is exactly `hi`.
inline std::vector<double> grid(double lo, double hi, double step) {
  const auto cells = static_cast<std::size_t>(std::llround(std::ceil((hi - lo) / step - 1e-9)));
  std::vector<double> pts;
  pts.reserve(cells + 1);
  for (std::size_t i = 0; i < cells; ++i) pts.push_back(lo + static_cast<double>(i) * step);
  pts.push_back(hi);
  return pts;
}

/// Grid scan followed by golden-section polish around the best grid cell.
template <class F>
Extremum maximize_on_interval(F&& f, double lo, double hi, double step, double tol = 1e-10) {
  const auto pts = grid(lo, hi, step);
  std::size_t best_i = 0;
  double best_v = f(pts[0]);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double v = f(pts[i]);
    if (v > best_v) {
      best_v = v;
      best_i = i;
    }
  }
  const double a = pts[best_i == 0 ? 0 : best_i - 1];
  const double b = pts[std::min(best_i + 1, pts.size() - 1)];
  Extremum polished = golden_section_maximize(f, a, b, tol);
  if (polished.value > best_v) return polished;
  return {pts[best_i], best_v};
}

/// Bracketed root of f on [lo, hi]; f(lo) and f(hi) must differ in sign
/// (or one of them be exactly zero).
template <class F>
std::optional<double> bracketed_root(F&& f, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (std::signbit(flo) == std::signbit(fhi)) return std::nullopt;
  std::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                  boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (a + b);
}

/// All roots of f on [lo, hi], ascending. Sign changes on a uniform grid are
/// refined directly. Grid points where |f| has a local minimum without a sign
/// change are probed for a hidden pair of roots (or a tangent root) by
/// locating the extremum inside the neighbouring cells.
template <class F>
std::vector<double> all_roots(F&& f, double lo, double hi, std::size_t cells = 512,
                              double tangent_tol = 1e-10) {
  std::vector<double> xs(cells + 1), fs(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) {
    xs[i] = i == cells ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cells);
    fs[i] = f(xs[i]);
  }
  std::vector<double> roots;
  auto push = [&](std::optional<double> r) {
    if (r) roots.push_back(*r);
  };
  for (std::size_t i = 0; i < cells; ++i) {
    if (fs[i] == 0.0) {
      roots.push_back(xs[i]);
    } else if (fs[i + 1] != 0.0 && std::signbit(fs[i]) != std::signbit(fs[i + 1])) {
      push(bracketed_root(f, xs[i], xs[i + 1]));
    }
  }
  if (fs[cells] == 0.0) roots.push_back(xs[cells]);

  for (std::size_t i = 1; i < cells; ++i) {
    const double m = std::abs(fs[i]);
    if (fs[i] == 0.0 || m > std::abs(fs[i - 1]) || m > std::abs(fs[i + 1])) continue;
    if (std::signbit(fs[i - 1]) != std::signbit(fs[i]) || std::signbit(fs[i + 1]) != std::signbit(fs[i]))
      continue;
    const double sign = std::signbit(fs[i]) ? -1.0 : 1.0;
    // Extremum of f towards zero.
    auto toward_zero = [&](double x) { return -sign * f(x); };
    const Extremum e = golden_section_maximize(toward_zero, xs[i - 1], xs[i + 1], 1e-13);
    const double fe = f(e.x);
    if (fe != 0.0 && std::signbit(fe) != std::signbit(fs[i])) {
      push(bracketed_root(f, xs[i - 1], e.x));
      push(bracketed_root(f, e.x, xs[i + 1]));
    } else if (std::abs(fe) <= tangent_tol) {
      // Tangent root: refine the extremum as a root of the central-difference slope.
      const double h = 1e-6;
      auto slope = [&](double x) { return (f(x + h) - f(x - h)) / (2 * h); };
      const double w = std::min(1e-3, 0.5 * (xs[i + 1] - xs[i - 1]));
      const auto r = bracketed_root(slope, std::max(lo, e.x - w), std::min(hi, e.x + w));
      roots.push_back(r && std::abs(f(*r)) <= tangent_tol ? *r : e.x);
    }
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              roots.end());
  return roots;
}

}  // namespace leca::search
