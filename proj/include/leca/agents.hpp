#pragma once

// Simulated rivals standing in for human subjects.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "leca/errors.hpp"
#include "leca/extortion.hpp"
#include "leca/market.hpp"
#include "leca/records.hpp"

namespace leca {

enum class AgentKind { stationary, collusive, myopic_best_response, cycle, random_uniform, epsilon_greedy_learner };

inline constexpr std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::stationary: return "stationary";
    case AgentKind::collusive: return "collusive";
    case AgentKind::myopic_best_response: return "myopic_best_response";
    case AgentKind::cycle: return "cycle";
    case AgentKind::random_uniform: return "random_uniform";
    case AgentKind::epsilon_greedy_learner: return "epsilon_greedy_learner";
  }
  return "unknown";
}

inline AgentKind parse_agent_kind(std::string_view s) {
  for (auto k : {AgentKind::stationary, AgentKind::collusive, AgentKind::myopic_best_response, AgentKind::cycle,
                 AgentKind::random_uniform, AgentKind::epsilon_greedy_learner})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown agent kind '" + std::string(s) + "'");
}

/// Declarative rival strategy. Only the fields relevant to `kind` are used.
struct AgentSpec {
  AgentKind kind = AgentKind::collusive;
  std::uint64_t seed = 0;

  double x0 = 3.0;                ///< stationary: the quantity it always plays
  std::optional<double> k{};        ///< collusive: assumed k (defaults to the session's)
  std::vector<double> sequence{};   ///< cycle: quantities played in order

  // epsilon_greedy_learner
  double epsilon_start = 0.3;
  double epsilon_end = 0.01;
  int horizon = 600;   ///< rounds over which epsilon decays linearly
  int buckets = 60;
  int hold = 2;        ///< rounds each chosen bucket is held; the first round of a hold is not scored

  void validate(const MarketParams& p) const {
    switch (kind) {
      case AgentKind::stationary:
        if (!p.x_bounds.contains(x0)) throw ValidationError("stationary agent x0 outside rival bounds");
        break;
      case AgentKind::collusive:
        if (k && !(*k >= 1.0)) throw ValidationError("collusive agent k must be >= 1");
        break;
      case AgentKind::cycle:
        if (sequence.empty()) throw ValidationError("cycle agent needs a non-empty sequence");
        for (double x : sequence)
          if (!p.x_bounds.contains(x)) throw ValidationError("cycle agent quantity outside rival bounds");
        break;
      case AgentKind::epsilon_greedy_learner:
        if (buckets < 2 || hold < 1 || horizon < 1) throw ValidationError("learner needs buckets >= 2, hold >= 1, horizon >= 1");
        if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
          throw ValidationError("learner epsilon must lie in [0, 1]");
        break;
      case AgentKind::myopic_best_response:
      case AgentKind::random_uniform:
        break;
    }
  }

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

namespace detail {

/// Uniform double in [0, 1) drawn from a stream keyed by (seed, round, slot),
/// so decisions depend only on the seed and the round being decided.
inline double uniform01(std::uint64_t seed, std::uint64_t round, std::uint64_t slot) {
  std::mt19937_64 gen(seed ^ (0x9E3779B97F4A7C15ULL * (round + 1)) ^ (0xD1B54A32D192ED03ULL * (slot + 1)));
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double learner_decide(const AgentSpec& spec, std::span<const RoundRecord> history, const MarketParams& p) {
  const auto t = history.size() + 1;  // round being decided
  const auto hold = static_cast<std::size_t>(spec.hold);
  const std::size_t block = (t - 1) / hold;
  if (block == 0) return p.x_bounds.mid();
  if ((t - 1) % hold != 0) return history[block * hold].x;

  const auto n = static_cast<std::size_t>(spec.buckets);
  const double width = p.x_bounds.width() / static_cast<double>(n - 1);
  auto value_of = [&](std::size_t i) { return i + 1 == n ? p.x_bounds.high : p.x_bounds.low + static_cast<double>(i) * width; };
  auto bucket_of = [&](double x) {
    const double i = std::round((x - p.x_bounds.low) / width);
    return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(n - 1)));
  };

  std::vector<double> estimate(n, 0.0);
  std::vector<int> pulls(n, 0);
  for (std::size_t b = 0; b < block; ++b) {
    const std::size_t first = b * hold;
    double reward = 0.0;
    int scored = 0;
    for (std::size_t r = (hold == 1 ? first : first + 1); r < first + hold; ++r, ++scored) reward += history[r].s_x;
    reward /= scored;
    const std::size_t arm = bucket_of(history[first].x);
    ++pulls[arm];
    estimate[arm] += (reward - estimate[arm]) / pulls[arm];
  }

  const double progress = spec.horizon > 1 ? std::min(1.0, static_cast<double>(t - 1) / (spec.horizon - 1)) : 1.0;
  const double epsilon = spec.epsilon_start + (spec.epsilon_end - spec.epsilon_start) * progress;
  if (uniform01(spec.seed, t, 0) < epsilon) {
    return value_of(std::min(n - 1, static_cast<std::size_t>(uniform01(spec.seed, t, 1) * static_cast<double>(n))));
  }
  // Untried buckets count as optimistic; ties are broken by a seeded draw.
  std::vector<std::size_t> best;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = pulls[i] == 0 ? std::numeric_limits<double>::infinity() : estimate[i];
    if (v > best_v) {
      best_v = v;
      best.assign(1, i);
    } else if (v == best_v) {
      best.push_back(i);
    }
  }
  const auto pick = static_cast<std::size_t>(uniform01(spec.seed, t, 2) * static_cast<double>(best.size()));
  return value_of(best[std::min(pick, best.size() - 1)]);
}

}  // namespace detail

namespace detail {

// The stationary optimum depends only on the configuration, so the last
// answer is memoised per thread. Custom price functions are not comparable
// and bypass the cache.
inline double cached_stationary_x(const LecaConfig& cfg, const MarketParams& p) {
  if (p.custom_price) return stationary_best_response(cfg, p).x;
  struct Entry {
    std::array<double, 9> key;
    int root;
    double x;
  };
  thread_local std::optional<Entry> last;
  const std::array<double, 9> key{cfg.k,          cfg.s_n,         p.a,           p.c, p.demand_scale,
                                  p.x_bounds.low, p.x_bounds.high, p.y_bounds.low, p.y_bounds.high};
  const int root = static_cast<int>(cfg.root);
  if (!last || last->key != key || last->root != root) last = Entry{key, root, stationary_best_response(cfg, p).x};
  return last->x;
}

}  // namespace detail

/// Rival quantity for the next round given the full history so far. Pure:
/// identical (spec, history, session) always yields the identical decision.
inline double decide(const AgentSpec& spec, std::span<const RoundRecord> history, const SessionConfig& session) {
  const MarketParams& p = session.market;
  for (std::size_t i = 0; i < history.size(); ++i)
    if (history[i].round != static_cast<int>(i) + 1) throw std::invalid_argument("history rounds must be contiguous from 1");

  switch (spec.kind) {
    case AgentKind::stationary:
      return spec.x0;
    case AgentKind::collusive: {
      LecaConfig cfg = session.leca.with_clamp(ClampPolicy::unclamped);
      if (spec.k) cfg.k = *spec.k;
      return detail::cached_stationary_x(cfg, p);
    }
    case AgentKind::myopic_best_response:
      return history.empty() ? p.x_bounds.mid() : best_response(history.back().y, p, p.x_bounds);
    case AgentKind::cycle:
      return spec.sequence.at(history.size() % spec.sequence.size());
    case AgentKind::random_uniform:
      return p.x_bounds.low + detail::uniform01(spec.seed, history.size() + 1, 0) * p.x_bounds.width();
    case AgentKind::epsilon_greedy_learner:
      return detail::learner_decide(spec, history, p);
  }
  throw std::logic_error("unhandled agent kind");
}

}  // namespace leca
