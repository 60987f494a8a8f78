#pragma once

// Linear extortion response and its calibration.
//
// The algorithm Y answers the rival's previous quantity x with the y that pins
//   S^Y(x, y) - S_n = k (S^X(x, y) - S_n).
// For the hyperbolic price P(z) = D / z this is a quadratic in y whose smaller
// root reproduces the collusive pairs; any other price function goes through a
// bracketing root search on the same residual.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include "leca/errors.hpp"
#include "leca/market.hpp"
#include "leca/scalar_search.hpp"

namespace leca {

enum class RootChoice { minus, plus };
enum class ClampPolicy { clamp_to_bounds, error_on_out_of_bounds, unclamped };

struct LecaConfig {
  double k = 1.296;
  double s_n = 40.0;  ///< Nash reference profit
  RootChoice root = RootChoice::minus;
  ClampPolicy clamp = ClampPolicy::clamp_to_bounds;

  void validate() const {
    if (!(k >= 1.0) || !std::isfinite(k)) throw ValidationError("extortion parameter k must be >= 1");
    if (!std::isfinite(s_n)) throw ValidationError("reference profit s_n must be finite");
  }

  LecaConfig with_k(double new_k) const {
    LecaConfig c = *this;
    c.k = new_k;
    return c;
  }
  LecaConfig with_clamp(ClampPolicy policy) const {
    LecaConfig c = *this;
    c.clamp = policy;
    return c;
  }
};

/// Residual of the extortion identity at (x, y); zero on the response curve.
inline double extortion_residual(double x, double y, const LecaConfig& cfg, const MarketParams& p) {
  const auto s = profit_pair(x, y, p, Domain::relaxed);
  return (s.y - cfg.s_n) - cfg.k * (s.x - cfg.s_n);
}

namespace detail {

inline double apply_clamp(double y, const LecaConfig& cfg, const MarketParams& p) {
  switch (cfg.clamp) {
    case ClampPolicy::clamp_to_bounds:
      return p.y_bounds.clamp(y);
    case ClampPolicy::error_on_out_of_bounds:
      if (!p.y_bounds.contains(y, 1e-12)) {
        std::ostringstream os;
        os << "response " << y << " outside algorithm bounds [" << p.y_bounds.low << ", " << p.y_bounds.high << "]";
        throw OutOfBounds(os.str(), y);
      }
      return y;
    case ClampPolicy::unclamped:
      break;
  }
  return y;
}

inline void check_rival(double x, const MarketParams& p, Domain domain) {
  if (!(x > 0.0)) throw DomainError("rival quantity must be positive");
  if (domain == Domain::strict && !p.x_bounds.contains(x)) throw DomainError("rival quantity outside its bounds");
}

}  // namespace detail

/// Closed-form root of the extortion quadratic for P(z) = D / z, before
/// clamping. With beta = (S_n - a)(k - 1):
///   y^2 - B y - C = 0,  B = (k - 1) x + (beta + D) / c,  C = k x^2 + (beta - D k) x / c.
/// For a = c = 10, D = 120, S_n = 40 this is
///   y = (k x + 3k - x + 9 -/+ Z) / 2,
///   Z^2 = (k + 1)^2 x^2 + 9 (k + 3)^2 + 6 x (k - 5)(k + 1).
inline double closed_form_response(double x, const LecaConfig& cfg, const MarketParams& p) {
  if (!p.hyperbolic() || !(p.c > 0.0)) throw Unsupported("closed-form response needs P(z) = D / z with c > 0");
  const double k = cfg.k;
  const double beta = (cfg.s_n - p.a) * (k - 1.0);
  const double b = (k - 1.0) * x + (beta + p.demand_scale) / p.c;
  const double c0 = k * x * x + (beta - p.demand_scale * k) * x / p.c;
  double disc = b * b + 4.0 * c0;
  if (disc < 0.0) {
    if (disc > -1e-12 * b * b) {
      disc = 0.0;
    } else {
      throw NoRealResponse("no real extortion response at x = " + std::to_string(x));
    }
  }
  const double z = std::sqrt(disc);
  return 0.5 * (cfg.root == RootChoice::minus ? b - z : b + z);
}

/// Numeric root of the extortion identity via bracketing search, before clamping.
/// Searches (0, 4 (x_high + y_high)] so unclamped roots outside the algorithm
/// interval are still found.
inline double numeric_response(double x, const LecaConfig& cfg, const MarketParams& p) {
  auto f = [&](double y) { return extortion_residual(x, y, cfg, p); };
  const double hi = 4.0 * (p.x_bounds.high + p.y_bounds.high);
  const auto roots = search::all_roots(f, 1e-6, hi, 1024);
  if (roots.empty()) throw NoRealResponse("no bracketing extortion root at x = " + std::to_string(x));
  const double y = cfg.root == RootChoice::minus ? roots.front() : roots.back();
  if (std::abs(f(y)) > 1e-10) throw NoRealResponse("extortion root residual above tolerance at x = " + std::to_string(x));
  return y;
}

/// y_t answering the rival's previous quantity under the configured root and
/// clamping policy.
inline double solve_response(double x_prev, const LecaConfig& cfg, const MarketParams& p,
                             Domain domain = Domain::strict) {
  detail::check_rival(x_prev, p, domain);
  const bool closed = p.hyperbolic() && p.c > 0.0;
  const double raw = closed ? closed_form_response(x_prev, cfg, p) : numeric_response(x_prev, cfg, p);
  return detail::apply_clamp(raw, cfg, p);
}

struct StationaryPoint {
  double x;    ///< rival's stationary optimum x_c
  double y;    ///< algorithm's answer to x_c
  double s_x;  ///< rival payoff at the stationary pair
  double s_y;
};

namespace detail {

/// The algorithm's answer to x, or nothing where no positive real root exists.
inline std::optional<double> feasible_response(double x, const LecaConfig& cfg, const MarketParams& p) {
  try {
    const double y = solve_response(x, cfg, p, Domain::relaxed);
    if (y > 0.0 && std::isfinite(y)) return y;
  } catch (const NoRealResponse&) {
  }
  return std::nullopt;
}

constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

}  // namespace detail

/// Rival payoff when it holds x forever: S^X(x, y(x)). Minus infinity where
/// the algorithm has no positive answer.
inline double stationary_payoff(double x, const LecaConfig& cfg, const MarketParams& p) {
  const auto y = detail::feasible_response(x, cfg, p);
  return y ? profit_pair(x, *y, p, Domain::relaxed).x : detail::kInfeasible;
}

/// Rival's best constant quantity against the extortioner. Grid scan at 1e-3
/// with golden-section refinement to 1e-7.
inline StationaryPoint stationary_best_response(const LecaConfig& cfg, const MarketParams& p) {
  cfg.validate();
  auto payoff = [&](double x) { return stationary_payoff(x, cfg, p); };
  const auto best = search::maximize_on_interval(payoff, p.x_bounds.low, p.x_bounds.high, 1e-3, 1e-7);
  if (!std::isfinite(best.value)) throw CalibrationError("no rival quantity has a positive extortion response");
  const double y = solve_response(best.x, cfg, p, Domain::relaxed);
  const auto s = profit_pair(best.x, y, p, Domain::relaxed);
  return {best.x, y, s.x, s.y};
}

struct CycleEvaluation {
  std::vector<double> xs;  ///< rival's periodic quantities
  std::vector<double> ys;  ///< ys[t] answers xs[t - 1 mod N]
  double mean_payoff = 0.0;
};

/// Mean rival payoff over one period of the loop xs, where round t meets the
/// algorithm's answer to xs[t - 1] and round 1 wraps around to xs[N - 1].
inline CycleEvaluation evaluate_cycle(std::vector<double> xs, const LecaConfig& cfg, const MarketParams& p) {
  if (xs.empty()) throw std::invalid_argument("cycle must contain at least one quantity");
  const std::size_t n = xs.size();
  std::vector<double> answers(n);
  bool feasible = true;
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = detail::feasible_response(xs[t], cfg, p);
    feasible = feasible && y.has_value();
    answers[t] = y.value_or(std::numeric_limits<double>::quiet_NaN());
  }
  CycleEvaluation ev;
  ev.ys.resize(n);
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ev.ys[t] = answers[(t + n - 1) % n];
    if (feasible) sum += profit_pair(xs[t], ev.ys[t], p, Domain::relaxed).x;
  }
  ev.mean_payoff = feasible ? sum / static_cast<double>(n) : detail::kInfeasible;
  ev.xs = std::move(xs);
  return ev;
}

inline double cycle_payoff(const std::vector<double>& xs, const LecaConfig& cfg, const MarketParams& p) {
  return evaluate_cycle(xs, cfg, p).mean_payoff;
}

/// Grid step used by find_best_cycle for a given period length.
inline double cycle_grid_step(int n) {
  if (n <= 2) return 0.01;
  if (n == 3) return 0.05;
  return 0.1;
}

/// Heuristic global search for the rival's most profitable N-period loop:
/// exhaustive grid over [x_bounds]^n, then coordinate-wise golden-section
/// polish of the best few grid candidates. Not a certified optimum.
inline CycleEvaluation find_best_cycle(int n, const LecaConfig& cfg, const MarketParams& p) {
  if (n < 1) throw std::invalid_argument("cycle length must be >= 1");
  if (n > 4) throw Unsupported("cycle search beyond N = 4 is not supported");
  cfg.validate();

  const double step = cycle_grid_step(n);
  const auto pts = search::grid(p.x_bounds.low, p.x_bounds.high, step);
  const std::size_t g = pts.size();
  std::vector<std::optional<double>> answer(g);
  for (std::size_t i = 0; i < g; ++i) answer[i] = detail::feasible_response(pts[i], cfg, p);
  // gain[i * g + j]: rival profit playing pts[i] against the answer to pts[j].
  std::vector<double> gain(g * g);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      gain[i * g + j] = answer[j] ? profit_pair(pts[i], *answer[j], p, Domain::relaxed).x : detail::kInfeasible;

  constexpr std::size_t kCandidates = 8;
  struct Candidate {
    double value;
    std::array<std::size_t, 4> idx;
  };
  std::vector<Candidate> top;
  auto offer = [&](double value, const std::array<std::size_t, 4>& idx) {
    if (top.size() == kCandidates && value <= top.back().value) return;
    auto pos = std::find_if(top.begin(), top.end(), [&](const Candidate& c) { return value > c.value; });
    top.insert(pos, {value, idx});
    if (top.size() > kCandidates) top.pop_back();
  };

  std::array<std::size_t, 4> idx{};
  const auto un = static_cast<std::size_t>(n);
  // Odometer over all n-tuples; deterministic visiting order.
  for (;;) {
    double sum = 0.0;
    for (std::size_t t = 0; t < un; ++t) sum += gain[idx[t] * g + idx[(t + un - 1) % un]];
    offer(sum / static_cast<double>(n), idx);
    std::size_t d = 0;
    while (d < un && ++idx[d] == g) idx[d++] = 0;
    if (d == un) break;
  }

  CycleEvaluation best;
  best.mean_payoff = -std::numeric_limits<double>::infinity();
  for (const auto& cand : top) {
    std::vector<double> xs(un);
    for (std::size_t t = 0; t < un; ++t) xs[t] = pts[cand.idx[t]];
    double value = cycle_payoff(xs, cfg, p);
    for (int sweep = 0; sweep < 50; ++sweep) {
      const double before = value;
      for (std::size_t t = 0; t < un; ++t) {
        auto along = [&](double v) {
          auto trial = xs;
          trial[t] = v;
          return cycle_payoff(trial, cfg, p);
        };
        const double lo = std::max(p.x_bounds.low, xs[t] - step);
        const double hi = std::min(p.x_bounds.high, xs[t] + step);
        const auto e = search::golden_section_maximize(along, lo, hi, 1e-9);
        if (e.value > value) {
          xs[t] = e.x;
          value = e.value;
        }
      }
      if (value - before < 1e-13) break;
    }
    if (value > best.mean_payoff) best = evaluate_cycle(xs, cfg, p);
  }
  if (!std::isfinite(best.mean_payoff)) throw CalibrationError("no feasible rival cycle");
  return best;
}

struct ValidityCheck {
  bool valid;
  double stationary_payoff;
  CycleEvaluation best_cycle;  ///< witness when invalid
};

/// k is valid at order n when no n-period loop beats holding the stationary
/// optimum by more than `tol`. Uses unclamped responses.
inline ValidityCheck check_k(double k, const MarketParams& p, int n = 2, LecaConfig base = {}, double tol = 1e-9) {
  const LecaConfig cfg = base.with_k(k).with_clamp(ClampPolicy::unclamped);
  const auto stationary = stationary_best_response(cfg, p);
  auto cycle = find_best_cycle(n, cfg, p);
  const bool valid = cycle.mean_payoff <= stationary.s_x + tol;
  return {valid, stationary.s_x, std::move(cycle)};
}

/// Largest extortion parameter in [1, 4] that the rival cannot exploit with an
/// n-period loop, located by bisection to a bracket width of 1e-4.
inline double max_valid_k(const MarketParams& p, int n = 2, LecaConfig base = {}) {
  double lo = 1.0, hi = 4.0;
  if (!check_k(lo, p, n, base).valid) return lo;
  if (check_k(hi, p, n, base).valid) return hi;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (check_k(mid, p, n, base).valid ? lo : hi) = mid;
  }
  return lo;
}

struct SurfaceRow {
  double x;
  std::optional<double> y;  ///< empty where no real response exists
};

/// Unclamped response y(x) tabulated over the rival interval.
inline std::vector<SurfaceRow> response_surface(double k, double grid_step, const MarketParams& p,
                                                LecaConfig base = {}) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid_step must be positive");
  const LecaConfig cfg = base.with_k(k).with_clamp(ClampPolicy::unclamped);
  std::vector<SurfaceRow> rows;
  for (double x : search::grid(p.x_bounds.low, p.x_bounds.high, grid_step)) {
    try {
      rows.push_back({x, solve_response(x, cfg, p, Domain::relaxed)});
    } catch (const NoRealResponse&) {
      rows.push_back({x, std::nullopt});
    }
  }
  return rows;
}

struct DeviationRow {
  double k;
  double x2;          ///< best second quantity of the loop [x1, x2]
  double payoff;      ///< its mean payoff
  double stationary;  ///< payoff of holding x1
};

/// Best x2 for the 2-period loop [x1, x2] as k sweeps [k_lo, k_hi].
inline std::vector<DeviationRow> deviation_curve(double k_lo, double k_hi, double k_step, double x1,
                                                 const MarketParams& p, LecaConfig base = {}) {
  if (!p.x_bounds.contains(x1)) throw DomainError("x1 outside rival bounds");
  if (!(k_step > 0.0) || !(k_lo <= k_hi)) throw std::invalid_argument("invalid k range");
  std::vector<DeviationRow> rows;
  for (double k : search::grid(k_lo, k_hi, k_step)) {
    const LecaConfig cfg = base.with_k(k).with_clamp(ClampPolicy::unclamped);
    auto loop = [&](double x2) { return cycle_payoff({x1, x2}, cfg, p); };
    const auto e = search::maximize_on_interval(loop, p.x_bounds.low, p.x_bounds.high, 0.01, 1e-9);
    rows.push_back({k, e.x, e.value, cycle_payoff({x1, x1}, cfg, p)});
  }
  return rows;
}

}  // namespace leca
