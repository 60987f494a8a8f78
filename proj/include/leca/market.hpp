#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "leca/errors.hpp"
#include "leca/scalar_search.hpp"

namespace leca {

/// Closed quantity interval [low, high].
struct Interval {
  double low = 0.0;
  double high = 0.0;

  bool contains(double q, double tol = 1e-12) const { return q >= low - tol && q <= high + tol; }
  double clamp(double q) const { return std::clamp(q, low, high); }
  double mid() const { return 0.5 * (low + high); }
  double width() const { return high - low; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Whether quantities must respect their player's interval or only be positive.
enum class Domain { strict, relaxed };

/// Cournot duopoly environment. Player X is the rival (human), player Y the
/// algorithm. The inverse demand is demand_scale / z unless `custom_price`
/// is set, in which case it must be positive and strictly decreasing in z.
struct MarketParams {
  double a = 10.0;
  double c = 10.0;
  double demand_scale = 120.0;
  Interval x_bounds{0.1, 6.0};
  Interval y_bounds{0.1, 3.0};
  std::function<double(double)> custom_price;

  bool hyperbolic() const { return !custom_price; }

  /// Throws ValidationError when an invariant is violated.
  void validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("market params: " + m); };
    if (!std::isfinite(a)) fail("a must be finite");
    if (!(c >= 0.0) || !std::isfinite(c)) fail("marginal cost c must be >= 0");
    if (hyperbolic() && !(demand_scale > 0.0)) fail("demand_scale must be > 0");
    if (!(x_bounds.low > 0.0) || !(x_bounds.low < x_bounds.high)) fail("x_bounds must satisfy 0 < low < high");
    if (!(y_bounds.low > 0.0) || !(y_bounds.low < y_bounds.high)) fail("y_bounds must satisfy 0 < low < high");
  }
};

struct ProfitPair {
  double x;  ///< rival profit S^X
  double y;  ///< algorithm profit S^Y
};

inline double price(double z, const MarketParams& p) {
  if (!(z > 0.0)) throw DomainError("price: total quantity must be positive, got " + std::to_string(z));
  return p.hyperbolic() ? p.demand_scale / z : p.custom_price(z);
}

/// S^i = a + (P(x + y) - c) q_i for both players.
inline ProfitPair profit_pair(double x, double y, const MarketParams& p, Domain domain = Domain::strict) {
  if (!(x > 0.0) || !(y > 0.0)) throw DomainError("profit_pair: quantities must be positive");
  if (domain == Domain::strict && (!p.x_bounds.contains(x) || !p.y_bounds.contains(y)))
    throw DomainError("profit_pair: quantity outside its bounds");
  const double margin = price(x + y, p) - p.c;
  return {p.a + margin * x, p.a + margin * y};
}

/// Own profit-maximizing quantity on `own` given the opponent's quantity.
inline double best_response(double opponent_q, const MarketParams& p, const Interval& own) {
  if (!(opponent_q > 0.0)) throw DomainError("best_response: opponent quantity must be positive");
  if (p.hyperbolic()) {
    if (p.c == 0.0) return own.high;  // margin never turns negative
    return own.clamp(std::sqrt(p.demand_scale * opponent_q / p.c) - opponent_q);
  }
  auto own_profit = [&](double q) { return p.a + (price(q + opponent_q, p) - p.c) * q; };
  return search::maximize_on_interval(own_profit, own.low, own.high, own.width() / 400.0, 1e-12).x;
}

inline double best_response(double opponent_q, const MarketParams& p) {
  return best_response(opponent_q, p, p.x_bounds);
}

struct QuantityPoint {
  double q;       ///< per-player quantity
  double price;
  double profit;  ///< per-player profit
};

struct WalrasianPoint {
  double q_total;       ///< total quantity where price equals marginal cost
  double price;
  double profit;        ///< per-player profit at that point (= a)
  bool reachable;       ///< q_total fits within x_bounds.high + y_bounds.high
  double reachable_total;  ///< q_total clamped to the joint capacity
};

struct ReferencePoints {
  QuantityPoint nash;
  QuantityPoint jpm;
  WalrasianPoint walrasian;
};

namespace detail {

inline Interval common_bounds(const MarketParams& p) {
  const Interval both{std::max(p.x_bounds.low, p.y_bounds.low), std::min(p.x_bounds.high, p.y_bounds.high)};
  if (!(both.low < both.high)) throw CalibrationError("player quantity intervals do not overlap");
  return both;
}

inline QuantityPoint symmetric_point(double q, const MarketParams& p) {
  return {q, price(2 * q, p), profit_pair(q, q, p, Domain::relaxed).x};
}

}  // namespace detail

inline ReferencePoints reference_points(const MarketParams& p) {
  p.validate();
  const Interval both = detail::common_bounds(p);

  // Nash: symmetric fixed point of the best response.
  double q = both.mid();
  bool converged = false;
  for (int i = 0; i < 10000; ++i) {
    const double next = best_response(q, p, both);
    if (std::abs(next - q) < 1e-13) {
      q = next;
      converged = true;
      break;
    }
    q = 0.5 * (q + next);
  }
  if (!converged) {
    auto gap = [&](double s) { return best_response(s, p, both) - s; };
    const auto r = search::bracketed_root(gap, both.low, both.high);
    if (!r) throw CalibrationError("no symmetric best-response fixed point within bounds");
    q = *r;
  }
  if (p.hyperbolic() && p.c > 0.0) {
    const double analytic = p.demand_scale / (4.0 * p.c);
    if (both.contains(analytic) && std::abs(analytic - q) > 1e-6)
      throw CalibrationError("numeric Nash quantity disagrees with the analytic fixed point");
  }

  // Joint-profit maximum over symmetric quantities.
  auto joint = [&](double s) { return 2 * p.a + (price(2 * s, p) - p.c) * 2 * s; };
  const double q_jpm = search::maximize_on_interval(joint, both.low, both.high, both.width() / 1000.0, 1e-12).x;

  // Walrasian: total quantity where price falls to marginal cost.
  WalrasianPoint w{};
  const double capacity = p.x_bounds.high + p.y_bounds.high;
  if (p.hyperbolic()) {
    w.q_total = p.c > 0.0 ? p.demand_scale / p.c : std::numeric_limits<double>::infinity();
  } else {
    double hi = capacity;
    while (price(hi, p) > p.c && hi < 1e12) hi *= 2;
    if (price(hi, p) > p.c) {
      w.q_total = std::numeric_limits<double>::infinity();
    } else {
      auto excess = [&](double z) { return price(z, p) - p.c; };
      w.q_total = search::bracketed_root(excess, 1e-9, hi).value_or(hi);
    }
  }
  w.price = p.c;
  w.profit = p.a;
  w.reachable = w.q_total <= capacity;
  w.reachable_total = std::min(w.q_total, capacity);

  return {detail::symmetric_point(q, p), detail::symmetric_point(q_jpm, p), w};
}

}  // namespace leca
