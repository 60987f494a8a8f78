#pragma once

// Iterated game loop: the rival decides, the algorithm answers the rival's
// previous quantity, both quantities are rounded for display and profits are
// computed from the displayed values.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leca/agents.hpp"
#include "leca/errors.hpp"
#include "leca/extortion.hpp"
#include "leca/market.hpp"
#include "leca/records.hpp"

namespace leca {

enum class SessionStatus { active, finished, abandoned };

inline constexpr std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::finished: return "finished";
    case SessionStatus::abandoned: return "abandoned";
  }
  return "unknown";
}

inline SessionStatus parse_session_status(std::string_view s) {
  for (auto v : {SessionStatus::active, SessionStatus::finished, SessionStatus::abandoned})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown session status '" + std::string(s) + "'");
}

struct SessionRecord {
  std::string session_id;
  SessionConfig config;
  std::optional<AgentSpec> agent;  ///< empty for a human rival
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds_log;
  SessionStatus status = SessionStatus::active;

  int rounds_played() const { return static_cast<int>(rounds_log.size()); }
  bool full() const { return rounds_played() >= config.rounds; }
  double cum_x() const { return rounds_log.empty() ? 0.0 : rounds_log.back().cum_x; }
};

/// Computes the record for the next round without appending it.
inline RoundRecord next_round(const SessionRecord& s, double x_raw) {
  if (s.status != SessionStatus::active || s.full())
    throw SessionClosed("session " + s.session_id + " accepts no further rounds");
  const auto& cfg = s.config;
  if (!std::isfinite(x_raw) || !cfg.market.x_bounds.contains(x_raw))
    throw RejectedDecision("quantity " + std::to_string(x_raw) + " outside rival bounds");

  RoundRecord r;
  r.round = s.rounds_played() + 1;
  r.x = cfg.market.x_bounds.clamp(round_half_up(x_raw, cfg.decimals));

  double y_raw;
  if (s.rounds_log.empty() && cfg.first_round == FirstRoundRule::fixed) {
    y_raw = cfg.first_y;
  } else {
    const double x_prev = s.rounds_log.empty() ? r.x : s.rounds_log.back().x;
    y_raw = solve_response(x_prev, cfg.leca.with_clamp(ClampPolicy::unclamped), cfg.market);
    if (cfg.leca.clamp != ClampPolicy::unclamped) {
      r.clamped = !cfg.market.y_bounds.contains(y_raw);
      y_raw = detail::apply_clamp(y_raw, cfg.leca, cfg.market);
    }
  }
  r.y = round_half_up(y_raw, cfg.decimals);
  if (cfg.leca.clamp != ClampPolicy::unclamped) r.y = cfg.market.y_bounds.clamp(r.y);

  const auto s_pair = profit_pair(r.x, r.y, cfg.market, Domain::relaxed);
  r.s_x = s_pair.x;
  r.s_y = s_pair.y;
  r.cum_x = s.rounds_log.empty() ? r.s_x : s.rounds_log.back().cum_x + r.s_x;
  return r;
}

/// Plays one round and appends it to the session log.
inline const RoundRecord& step(SessionRecord& s, double x_raw) {
  s.rounds_log.push_back(next_round(s, x_raw));
  return s.rounds_log.back();
}

inline SessionRecord new_session(std::string id, SessionConfig config, std::optional<AgentSpec> agent,
                                 std::uint64_t seed) {
  config.validate();
  if (agent) agent->validate(config.market);
  SessionRecord s;
  s.session_id = std::move(id);
  s.config = std::move(config);
  s.agent = std::move(agent);
  s.seed = seed;
  return s;
}

/// Plays a whole session against a simulated rival. The agent's own seed is
/// replaced by `seed` so that one number determines the run.
inline SessionRecord run_session(const SessionConfig& config, AgentSpec agent, std::uint64_t seed,
                                 std::string id = {}) {
  agent.seed = seed;
  if (id.empty()) id = "sim-" + std::to_string(seed);
  SessionRecord s = new_session(std::move(id), config, agent, seed);
  s.rounds_log.reserve(static_cast<std::size_t>(config.rounds));
  while (!s.full()) step(s, decide(agent, s.rounds_log, s.config));
  s.status = SessionStatus::finished;
  return s;
}

/// Rebuilds a log from the stored rival quantities alone.
inline std::vector<RoundRecord> replay(const SessionRecord& s) {
  SessionRecord fresh = s;
  fresh.rounds_log.clear();
  fresh.status = SessionStatus::active;
  for (const auto& r : s.rounds_log) step(fresh, r.x);
  return fresh.rounds_log;
}

}  // namespace leca
