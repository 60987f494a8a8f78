#pragma once

// Session analysis: collusion degree, deadweight loss, payout conversion,
// windowed summaries, per-round median series and the profit test battery.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "leca/errors.hpp"
#include "leca/game.hpp"
#include "leca/market.hpp"
#include "leca/stats.hpp"

namespace leca {

/// Which quantity the collusion degree is measured on.
enum class CollusionBasis {
  total,       ///< x + y against 2 Q_n and 2 Q_c
  per_player,  ///< a single player's quantity against Q_n and Q_c
};

/// (N_q - q) / (N_q - C_q): 0 at the Nash quantity, 1 at the collusive one.
inline double degree_of_collusion(double q, const ReferencePoints& refs, CollusionBasis basis = CollusionBasis::total) {
  if (!(q > 0.0)) throw DomainError("degree_of_collusion: quantity must be positive");
  const double scale = basis == CollusionBasis::total ? 2.0 : 1.0;
  const double nash = scale * refs.nash.q, collusive = scale * refs.jpm.q;
  return (nash - q) / (nash - collusive);
}

struct DeadweightLoss {
  double value;
  bool beyond_capacity;  ///< z exceeded the joint capacity; value reported as 0
};

/// Welfare lost relative to full joint capacity b = x_high + y_high:
/// integral from z to b of (P(u) - c) du. Closed form D ln(b / z) - c (b - z)
/// for the hyperbolic price, composite Simpson otherwise.
inline DeadweightLoss deadweight_loss(double z, const MarketParams& p) {
  if (!(z > 0.0)) throw DomainError("deadweight_loss: total quantity must be positive");
  const double b = p.x_bounds.high + p.y_bounds.high;
  if (z > b) return {0.0, true};
  if (p.hyperbolic()) return {p.demand_scale * std::log(b / z) - p.c * (b - z), false};
  // Integrate in log-space: u = e^s, du = u ds.
  const int panels = 4000;
  const double s0 = std::log(z), s1 = std::log(b), h = (s1 - s0) / panels;
  auto g = [&](double s) {
    const double u = std::exp(s);
    return (price(u, p) - p.c) * u;
  };
  double acc = g(s0) + g(s1);
  for (int i = 1; i < panels; ++i) acc += g(s0 + i * h) * (i % 2 ? 4.0 : 2.0);
  return {acc * h / 3.0, false};
}

/// Cash conversion of a rival's total score.
struct PayoutRule {
  double rate = 1.2;
  double rounds = 600.0;
  double baseline = 30.0;
  double show_up_fee = 5.0;
  bool clamp_negative = false;
};

inline double payout_yuan(double total_profit, const PayoutRule& rule = {}) {
  const double v = rule.rate * (total_profit / rule.rounds - rule.baseline) + rule.show_up_fee;
  return rule.clamp_negative ? std::max(0.0, v) : v;
}

/// Inclusive round interval [first, last].
struct RoundWindow {
  int first = 1;
  int last = 600;

  bool contains(int round) const { return round >= first && round <= last; }
};

/// Per-session averages over a window.
struct SessionMeans {
  double x;
  double y;
  double s_x;
  double s_y;
};

inline SessionMeans session_means(const SessionRecord& s, RoundWindow w) {
  SessionMeans m{0, 0, 0, 0};
  int n = 0;
  for (const auto& r : s.rounds_log) {
    if (!w.contains(r.round)) continue;
    m.x += r.x;
    m.y += r.y;
    m.s_x += r.s_x;
    m.s_y += r.s_y;
    ++n;
  }
  if (n == 0)
    throw ValidationError("session " + s.session_id + " has no rounds in window " + std::to_string(w.first) + "-" +
                          std::to_string(w.last));
  return {m.x / n, m.y / n, m.s_x / n, m.s_y / n};
}

struct Moments {
  double average;
  double stdev;
  double median;
};

struct WindowSummary {
  RoundWindow window;
  int sessions;
  Moments quantity;  ///< rival quantity
  Moments profit;    ///< rival profit
};

inline Moments moments(const std::vector<double>& v) { return {stats::mean(v), stats::stdev(v), stats::median(v)}; }

/// Two-stage summary: each session's mean over the window, then the average,
/// sample standard deviation and median across sessions.
inline WindowSummary summarize(std::span<const SessionRecord> sessions, RoundWindow w) {
  if (sessions.empty()) throw ValidationError("summarize needs at least one session");
  if (w.first < 1 || w.last < w.first) throw ValidationError("empty round window");
  std::vector<double> q, prof;
  for (const auto& s : sessions) {
    const auto m = session_means(s, w);
    q.push_back(m.x);
    prof.push_back(m.s_x);
  }
  return {w, static_cast<int>(sessions.size()), moments(q), moments(prof)};
}

enum class SeriesField { x, y, total, degree, dwl };

inline std::string_view to_string(SeriesField f) {
  switch (f) {
    case SeriesField::x: return "x";
    case SeriesField::y: return "y";
    case SeriesField::total: return "total";
    case SeriesField::degree: return "degree";
    case SeriesField::dwl: return "dwl";
  }
  return "unknown";
}

inline SeriesField parse_series_field(std::string_view s) {
  for (auto f : {SeriesField::x, SeriesField::y, SeriesField::total, SeriesField::degree, SeriesField::dwl})
    if (to_string(f) == s) return f;
  throw ValidationError("unknown series field '" + std::string(s) + "'");
}

struct SeriesPoint {
  int round;
  double median;
};

/// Per-round median across sessions of the chosen field.
inline std::vector<SeriesPoint> median_timeseries(std::span<const SessionRecord> sessions, SeriesField field,
                                                  CollusionBasis basis = CollusionBasis::total) {
  if (sessions.empty()) throw ValidationError("median_timeseries needs at least one session");
  const auto n = sessions.front().rounds_log.size();
  for (const auto& s : sessions)
    if (s.rounds_log.size() != n) throw ValidationError("sessions differ in round count");
  std::vector<ReferencePoints> refs;
  if (field == SeriesField::degree)
    for (const auto& s : sessions) refs.push_back(reference_points(s.config.market));

  std::vector<SeriesPoint> out;
  out.reserve(n);
  std::vector<double> col(sessions.size());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      const auto& r = sessions[i].rounds_log[t];
      const auto& market = sessions[i].config.market;
      switch (field) {
        case SeriesField::x: col[i] = r.x; break;
        case SeriesField::y: col[i] = r.y; break;
        case SeriesField::total: col[i] = r.x + r.y; break;
        case SeriesField::degree:
          col[i] = degree_of_collusion(basis == CollusionBasis::total ? r.x + r.y : r.x, refs[i], basis);
          break;
        case SeriesField::dwl: col[i] = deadweight_loss(r.x + r.y, market).value; break;
      }
    }
    out.push_back({static_cast<int>(t) + 1, stats::median(col)});
  }
  return out;
}

struct Comparison {
  std::string hypothesis;  ///< e.g. "algorithm>human"
  double mean_difference;  ///< mean(first - second)
  double rank_sum_p;
  double t_test_p;
};

/// Per-session mean profits compared three ways: algorithm vs rival,
/// algorithm vs the Nash benchmark and rival vs the Nash benchmark.
inline std::vector<Comparison> profit_battery(std::span<const SessionRecord> sessions, RoundWindow w,
                                              double nash_profit = 40.0) {
  if (sessions.size() < 2) throw ValidationError("profit battery needs at least two sessions");
  std::vector<double> alg, hum;
  for (const auto& s : sessions) {
    const auto m = session_means(s, w);
    alg.push_back(m.s_y);
    hum.push_back(m.s_x);
  }
  const std::vector<double> nash(sessions.size(), nash_profit);
  auto compare = [](std::string name, const std::vector<double>& a, const std::vector<double>& b) {
    return Comparison{std::move(name), stats::mean(a) - stats::mean(b), stats::rank_sum_test(a, b).p,
                      stats::paired_t_test(a, b).p};
  };
  return {compare("algorithm>human", alg, hum), compare("algorithm>nash", alg, nash), compare("human>nash", hum, nash)};
}

}  // namespace leca
