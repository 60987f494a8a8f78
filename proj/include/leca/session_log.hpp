#pragma once

// Line-delimited session logs: one JSON header object, one JSON object per
// round (keys round, x, y, sx, sy, cumx), and an optional trailing status
// line. Quantities are fixed-point strings at the session's precision;
// profits are JSON numbers written with round-trip precision.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "leca/agents.hpp"
#include "leca/errors.hpp"
#include "leca/game.hpp"
#include "leca/records.hpp"

namespace leca {

using json = nlohmann::json;

inline std::string_view to_string(RootChoice r) { return r == RootChoice::minus ? "minus" : "plus"; }
inline std::string_view to_string(ClampPolicy c) {
  switch (c) {
    case ClampPolicy::clamp_to_bounds: return "clamp_to_bounds";
    case ClampPolicy::error_on_out_of_bounds: return "error_on_out_of_bounds";
    case ClampPolicy::unclamped: return "unclamped";
  }
  return "unknown";
}
inline std::string_view to_string(FirstRoundRule f) {
  return f == FirstRoundRule::fixed ? "fixed" : "respond_to_first";
}

namespace detail {

template <class T>
T json_get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("field '") + key + "': " + e.what());
  }
}

inline Interval interval_from(const json& j, const char* key, Interval fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ValidationError(std::string("field '") + key + "' must be [low, high]");
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace detail

inline json market_to_json(const MarketParams& p) {
  if (!p.hyperbolic()) throw ValidationError("custom price functions cannot be serialized");
  return {{"a", p.a},
          {"c", p.c},
          {"demand_scale", p.demand_scale},
          {"x_bounds", {p.x_bounds.low, p.x_bounds.high}},
          {"y_bounds", {p.y_bounds.low, p.y_bounds.high}}};
}

inline MarketParams market_from_json(const json& j, MarketParams base = {}) {
  if (!j.is_object()) throw ValidationError("market params must be an object");
  base.a = detail::json_get(j, "a", base.a);
  base.c = detail::json_get(j, "c", base.c);
  base.demand_scale = detail::json_get(j, "demand_scale", base.demand_scale);
  base.x_bounds = detail::interval_from(j, "x_bounds", base.x_bounds);
  base.y_bounds = detail::interval_from(j, "y_bounds", base.y_bounds);
  return base;
}

inline json leca_to_json(const LecaConfig& c) {
  return {{"k", c.k}, {"s_n", c.s_n}, {"root", to_string(c.root)}, {"clamp", to_string(c.clamp)}};
}

inline LecaConfig leca_from_json(const json& j, LecaConfig base = {}) {
  if (!j.is_object()) throw ValidationError("leca config must be an object");
  base.k = detail::json_get(j, "k", base.k);
  base.s_n = detail::json_get(j, "s_n", base.s_n);
  const auto root = detail::json_get<std::string>(j, "root", std::string(to_string(base.root)));
  if (root == "minus") base.root = RootChoice::minus;
  else if (root == "plus") base.root = RootChoice::plus;
  else throw ValidationError("root must be 'minus' or 'plus'");
  const auto clamp = detail::json_get<std::string>(j, "clamp", std::string(to_string(base.clamp)));
  if (clamp == "clamp_to_bounds") base.clamp = ClampPolicy::clamp_to_bounds;
  else if (clamp == "error_on_out_of_bounds") base.clamp = ClampPolicy::error_on_out_of_bounds;
  else if (clamp == "unclamped") base.clamp = ClampPolicy::unclamped;
  else throw ValidationError("unknown clamp policy '" + clamp + "'");
  return base;
}

inline json config_to_json(const SessionConfig& c) {
  return {{"market", market_to_json(c.market)},
          {"leca", leca_to_json(c.leca)},
          {"rounds", c.rounds},
          {"decimals", c.decimals},
          {"first_round", to_string(c.first_round)},
          {"first_y", c.first_y}};
}

/// Applies the keys present in `j` on top of `base`. Also accepts the flat
/// override keys `k`, `s_n` and `clamp`.
inline SessionConfig config_from_json(const json& j, SessionConfig base = {}) {
  if (!j.is_object()) throw ValidationError("session config must be an object");
  if (j.contains("market")) base.market = market_from_json(j.at("market"), base.market);
  if (j.contains("leca")) base.leca = leca_from_json(j.at("leca"), base.leca);
  json flat = json::object();
  for (const char* key : {"k", "s_n", "root", "clamp"})
    if (j.contains(key)) flat[key] = j.at(key);
  if (!flat.empty()) base.leca = leca_from_json(flat, base.leca);
  base.rounds = detail::json_get(j, "rounds", base.rounds);
  base.decimals = detail::json_get(j, "decimals", base.decimals);
  const auto first = detail::json_get<std::string>(j, "first_round", std::string(to_string(base.first_round)));
  if (first == "respond_to_first") base.first_round = FirstRoundRule::respond_to_first;
  else if (first == "fixed") base.first_round = FirstRoundRule::fixed;
  else throw ValidationError("first_round must be 'respond_to_first' or 'fixed'");
  base.first_y = detail::json_get(j, "first_y", base.first_y);
  return base;
}

inline json agent_to_json(const AgentSpec& a) {
  json j{{"kind", to_string(a.kind)}, {"seed", a.seed}};
  switch (a.kind) {
    case AgentKind::stationary: j["x0"] = a.x0; break;
    case AgentKind::collusive:
      if (a.k) j["k"] = *a.k;
      break;
    case AgentKind::cycle: j["sequence"] = a.sequence; break;
    case AgentKind::epsilon_greedy_learner:
      j["epsilon_start"] = a.epsilon_start;
      j["epsilon_end"] = a.epsilon_end;
      j["horizon"] = a.horizon;
      j["buckets"] = a.buckets;
      j["hold"] = a.hold;
      break;
    case AgentKind::myopic_best_response:
    case AgentKind::random_uniform:
      break;
  }
  return j;
}

inline AgentSpec agent_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ValidationError("agent spec must be an object with 'kind'");
  AgentSpec a;
  a.kind = parse_agent_kind(detail::json_get<std::string>(j, "kind", ""));
  a.seed = detail::json_get<std::uint64_t>(j, "seed", 0);
  a.x0 = detail::json_get(j, "x0", a.x0);
  if (j.contains("k")) a.k = detail::json_get(j, "k", 1.0);
  a.sequence = detail::json_get(j, "sequence", a.sequence);
  a.epsilon_start = detail::json_get(j, "epsilon_start", a.epsilon_start);
  a.epsilon_end = detail::json_get(j, "epsilon_end", a.epsilon_end);
  a.horizon = detail::json_get(j, "horizon", a.horizon);
  a.buckets = detail::json_get(j, "buckets", a.buckets);
  a.hold = detail::json_get(j, "hold", a.hold);
  return a;
}

inline json round_to_json(const RoundRecord& r, int decimals) {
  json j{{"round", r.round},
         {"x", format_fixed(r.x, decimals)},
         {"y", format_fixed(r.y, decimals)},
         {"sx", r.s_x},
         {"sy", r.s_y},
         {"cumx", r.cum_x}};
  if (r.clamped) j["clamped"] = true;
  return j;
}

inline double parse_decimal(const json& v, const char* key) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a decimal string");
  const auto& s = v.get_ref<const std::string&>();
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValidationError(std::string("field '") + key + "' is not a decimal: " + s);
  return d;
}

inline RoundRecord round_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("round record must be an object");
  for (const char* key : {"round", "x", "y", "sx", "sy", "cumx"})
    if (!j.contains(key)) throw ValidationError(std::string("round record missing '") + key + "'");
  RoundRecord r;
  r.round = detail::json_get(j, "round", 0);
  r.x = parse_decimal(j.at("x"), "x");
  r.y = parse_decimal(j.at("y"), "y");
  r.s_x = parse_decimal(j.at("sx"), "sx");
  r.s_y = parse_decimal(j.at("sy"), "sy");
  r.cum_x = parse_decimal(j.at("cumx"), "cumx");
  r.clamped = detail::json_get(j, "clamped", false);
  return r;
}

inline json header_to_json(const SessionRecord& s) {
  return {{"session_id", s.session_id},
          {"seed", s.seed},
          {"agent", s.agent ? agent_to_json(*s.agent) : json("human")},
          {"config", config_to_json(s.config)}};
}

inline std::string header_line(const SessionRecord& s) { return header_to_json(s).dump() + "\n"; }
inline std::string round_line(const RoundRecord& r, int decimals) { return round_to_json(r, decimals).dump() + "\n"; }
inline std::string status_line(SessionStatus st) { return json{{"status", to_string(st)}}.dump() + "\n"; }

inline void write_session_log(std::ostream& out, const SessionRecord& s) {
  out << header_line(s);
  for (const auto& r : s.rounds_log) out << round_line(r, s.config.decimals);
  if (s.status != SessionStatus::active) out << status_line(s.status);
}

inline std::string session_log_string(const SessionRecord& s) {
  std::ostringstream os;
  write_session_log(os, s);
  return os.str();
}

struct ParseOptions {
  /// Drop a final line that lacks its terminating newline (an interrupted append).
  bool drop_torn_tail = false;
};

/// Parses a session log. Errors carry the 1-based line number.
inline SessionRecord parse_session_log(std::istream& in, ParseOptions opts = {}) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (opts.drop_torn_tail && !text.empty() && text.back() != '\n') text.erase(text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1);

  SessionRecord s;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  bool closed = false;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (!j.is_object() || !j.contains("config")) throw ValidationError("first line must be the session header");
        s.session_id = detail::json_get<std::string>(j, "session_id", "");
        s.seed = detail::json_get<std::uint64_t>(j, "seed", 0);
        s.config = config_from_json(j.at("config"));
        s.config.validate();
        if (j.contains("agent") && j.at("agent").is_object()) s.agent = agent_from_json(j.at("agent"));
        have_header = true;
      } else if (j.is_object() && j.contains("status")) {
        s.status = parse_session_status(detail::json_get<std::string>(j, "status", ""));
        closed = true;
      } else {
        if (closed) throw ValidationError("round record after status line");
        RoundRecord r = round_from_json(j);
        if (r.round != s.rounds_played() + 1) throw ValidationError("round numbers must be contiguous from 1");
        if (s.full()) throw ValidationError("more rounds than the session allows");
        s.rounds_log.push_back(r);
      }
    } catch (const json::exception& e) {
      throw ValidationError("corrupt log line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("corrupt log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ValidationError("empty session log");
  return s;
}

inline SessionRecord read_session_log(const std::filesystem::path& path, ParseOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_session_log(in, opts);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_session_log(const std::filesystem::path& path, const SessionRecord& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_session_log(out, s);
  if (!out) throw IoError("write failed for " + path.string());
}

/// Round table as CSV: round,x,y,sx,sy,cumx,clamped. Quantities at the session's
/// precision, profits with 17 significant digits (lossless for doubles).
inline void write_rounds_csv(std::ostream& out, const SessionRecord& s) {
  out << "round,x,y,sx,sy,cumx,clamped\n";
  char buf[256];
  for (const auto& r : s.rounds_log) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.17g,%.17g,%.17g,%d\n", r.round, format_fixed(r.x, s.config.decimals).c_str(),
                  format_fixed(r.y, s.config.decimals).c_str(), r.s_x, r.s_y, r.cum_x, r.clamped ? 1 : 0);
    out << buf;
  }
}

inline std::vector<RoundRecord> read_rounds_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "round,x,y,sx,sy,cumx,clamped") throw ValidationError("csv: unexpected header");
  std::vector<RoundRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RoundRecord r;
    std::istringstream cells(line);
    std::string cell;
    std::vector<std::string> parts;
    while (std::getline(cells, cell, ',')) parts.push_back(cell);
    if (parts.size() != 7) throw ValidationError("csv line " + std::to_string(lineno) + ": expected 7 columns");
    try {
      r.round = std::stoi(parts[0]);
      r.x = std::stod(parts[1]);
      r.y = std::stod(parts[2]);
      r.s_x = std::stod(parts[3]);
      r.s_y = std::stod(parts[4]);
      r.cum_x = std::stod(parts[5]);
      r.clamped = std::stoi(parts[6]) != 0;
    } catch (const std::exception&) {
      throw ValidationError("csv line " + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace leca
