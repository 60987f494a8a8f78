#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "leca/metrics.hpp"
#include "leca/session_log.hpp"

namespace leca::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, validation = 2, io = 3, internal = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return io;
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::domain_error*>(&e) ||
      dynamic_cast<const std::out_of_range*>(&e) || dynamic_cast<const Unsupported*>(&e) ||
      dynamic_cast<const CalibrationError*>(&e) || dynamic_cast<const json::exception*>(&e))
    return validation;
  return internal;
}

/// One-line JSON error report for stderr.
inline std::string error_line(int code, const std::string& message) {
  const char* kind = code == validation ? "validation" : code == io ? "io" : "internal";
  return json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump();
}

inline std::string num(double v, int precision = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string fixed(double v, int decimals = 6) { return format_fixed(v, decimals); }

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
  std::optional<fs::path> params;
  double k = 1.296;
  int n = 2;
  std::optional<fs::path> surface_csv;
  double surface_step = 0.01;
  std::optional<fs::path> deviation_csv;
  double deviation_k_lo = 1.0;
  double deviation_k_hi = 3.5;
  double deviation_k_step = 0.01;
  double deviation_x1 = 0.1;
  bool skip_k_max = false;
};

/// Params file: market keys (a, c, demand_scale, x_bounds, y_bounds) plus an
/// optional "s_n". Without "s_n" the reference level is the Nash profit.
inline std::pair<MarketParams, LecaConfig> load_params(const std::optional<fs::path>& path) {
  MarketParams market;
  std::optional<double> s_n;
  if (path) {
    const json j = read_json_file(*path);
    market = market_from_json(j.contains("market") ? j.at("market") : j);
    if (j.contains("s_n")) s_n = j.at("s_n").get<double>();
  }
  market.validate();
  LecaConfig leca;
  leca.s_n = s_n ? *s_n : reference_points(market).nash.profit;
  return {market, leca};
}

/// Rotates a loop so it starts at its smallest element.
inline std::vector<double> canonical_cycle(std::vector<double> xs) {
  if (!xs.empty()) std::rotate(xs.begin(), std::min_element(xs.begin(), xs.end()), xs.end());
  return xs;
}

inline std::string cycle_string(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + fixed(xs[i], 4);
  return s + "]";
}

inline int calibrate(const CalibrateOptions& o, std::ostream& out) {
  if (o.n < 1 || o.n > 4) throw ValidationError("--n must be between 1 and 4");
  if (o.k < 1.0) throw ValidationError("--k must be >= 1");
  auto [market, leca] = load_params(o.params);
  const auto refs = reference_points(market);
  out << "reference nash q=" << fixed(refs.nash.q) << " price=" << fixed(refs.nash.price)
      << " profit=" << fixed(refs.nash.profit) << "\n";
  out << "reference jpm q=" << fixed(refs.jpm.q) << " price=" << fixed(refs.jpm.price)
      << " profit=" << fixed(refs.jpm.profit) << "\n";
  out << "reference walrasian total=" << fixed(refs.walrasian.q_total) << " price=" << fixed(refs.walrasian.price)
      << " profit=" << fixed(refs.walrasian.profit) << " reachable=" << (refs.walrasian.reachable ? "true" : "false")
      << " reachable_total=" << fixed(refs.walrasian.reachable_total) << "\n";
  out << "s_n " << fixed(leca.s_n) << "\n";

  const LecaConfig cfg = leca.with_k(o.k).with_clamp(ClampPolicy::unclamped);
  const auto st = stationary_best_response(cfg, market);
  out << "stationary k=" << fixed(o.k, 4) << " x=" << fixed(st.x) << " y=" << fixed(st.y) << " s_x=" << fixed(st.s_x)
      << " s_y=" << fixed(st.s_y) << " price=" << fixed(price(st.x + st.y, market), 2) << "\n";

  const auto check = check_k(o.k, market, o.n, leca);
  out << "check k=" << fixed(o.k, 4) << " n=" << o.n << " " << (check.valid ? "VALID" : "INVALID")
      << " stationary=" << fixed(check.stationary_payoff) << " best_cycle=" << fixed(check.best_cycle.mean_payoff)
      << " witness=" << cycle_string(canonical_cycle(check.best_cycle.xs)) << "\n";

  if (!o.skip_k_max) out << "k_max n=" << o.n << " " << fixed(max_valid_k(market, o.n, leca)) << "\n";

  if (o.surface_csv) {
    auto f = open_out(*o.surface_csv);
    f << "x,y,k\n";
    for (const auto& row : response_surface(o.k, o.surface_step, market, leca))
      f << num(row.x) << "," << (row.y ? num(*row.y) : "") << "," << num(o.k) << "\n";
    check_written(f, *o.surface_csv);
  }
  if (o.deviation_csv) {
    auto f = open_out(*o.deviation_csv);
    f << "k,x,payoff,stationary\n";
    for (const auto& row :
         deviation_curve(o.deviation_k_lo, o.deviation_k_hi, o.deviation_k_step, o.deviation_x1, market, leca))
      f << num(row.k) << "," << num(row.x2) << "," << num(row.payoff) << "," << num(row.stationary) << "\n";
    check_written(f, *o.deviation_csv);
  }
  return ok;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  AgentSpec agent;
  std::optional<fs::path> config;  ///< session config JSON
  std::optional<double> k;
  std::optional<int> rounds;
  std::uint64_t seed = 1;
  int sessions = 1;
  std::optional<fs::path> out;
  std::optional<fs::path> out_dir;
};

inline SessionConfig simulate_config(const SimulateOptions& o) {
  SessionConfig cfg;
  if (o.config) cfg = config_from_json(read_json_file(*o.config));
  if (o.k) cfg.leca.k = *o.k;
  if (o.rounds) cfg.rounds = *o.rounds;
  cfg.validate();
  return cfg;
}

inline std::string session_file_name(std::uint64_t seed) { return "session-" + std::to_string(seed) + ".jsonl"; }

inline int simulate(const SimulateOptions& o, std::ostream& out) {
  if (o.sessions < 1) throw ValidationError("--sessions must be >= 1");
  if (o.sessions > 1 && !o.out_dir) throw ValidationError("--sessions > 1 requires --out-dir");
  if (o.out && o.out_dir) throw ValidationError("--out and --out-dir are mutually exclusive");
  const SessionConfig cfg = simulate_config(o);
  o.agent.validate(cfg.market);

  if (!o.out && !o.out_dir) {
    write_session_log(out, run_session(cfg, o.agent, o.seed));
    return ok;
  }
  out << "session_id,file,rounds,cumx,last_x,last_y\n";
  for (int i = 0; i < o.sessions; ++i) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
    const auto s = run_session(cfg, o.agent, seed);
    const fs::path path = o.out ? *o.out : *o.out_dir / session_file_name(seed);
    auto f = open_out(path);
    write_session_log(f, s);
    check_written(f, path);
    out << s.session_id << "," << path.string() << "," << s.rounds_played() << "," << num(s.cum_x(), 17) << ","
        << format_fixed(s.rounds_log.back().x, cfg.decimals) << "," << format_fixed(s.rounds_log.back().y, cfg.decimals)
        << "\n";
  }
  return ok;
}

// ------------------------------------------------------------------ analyze

struct AnalyzeOptions {
  std::vector<fs::path> inputs;  ///< log files or directories of *.jsonl
  std::optional<RoundWindow> window;
  std::optional<fs::path> out_dir;
  double nash_profit = 40.0;
};

/// Parses "first-last", e.g. "301-600".
inline RoundWindow parse_window(const std::string& s) {
  RoundWindow w;
  char dash = 0;
  std::istringstream in(s);
  if (!(in >> w.first >> dash >> w.last) || dash != '-' || !in.eof() || w.first < 1 || w.last < w.first)
    throw ValidationError("window must look like FIRST-LAST with 1 <= FIRST <= LAST, got '" + s + "'");
  return w;
}

inline std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw IoError("no such file or directory: " + p.string());
    }
  }
  if (files.empty()) throw ValidationError("no session logs found");
  return files;
}

inline void write_summary_csv(std::ostream& f, const WindowSummary& s) {
  f << "window,sessions,metric,average,stdev,median\n";
  const std::string w = std::to_string(s.window.first) + "-" + std::to_string(s.window.last);
  auto row = [&](const char* name, const Moments& m) {
    f << w << "," << s.sessions << "," << name << "," << num(m.average) << "," << (std::isnan(m.stdev) ? "" : num(m.stdev))
      << "," << num(m.median) << "\n";
  };
  row("quantity", s.quantity);
  row("profit", s.profit);
}

inline void write_battery_csv(std::ostream& f, const std::vector<Comparison>& battery, RoundWindow w) {
  f << "hypothesis,window,mean_difference,rank_sum_p,t_test_p\n";
  for (const auto& c : battery)
    f << c.hypothesis << "," << w.first << "-" << w.last << "," << num(c.mean_difference) << "," << num(c.rank_sum_p)
      << "," << num(c.t_test_p) << "\n";
}

inline int analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err = std::cerr) {
  std::vector<SessionRecord> sessions;
  for (const auto& f : expand_inputs(o.inputs)) sessions.push_back(read_session_log(f));

  std::size_t shortest = sessions.front().rounds_log.size(), longest = 0;
  for (const auto& s : sessions) {
    shortest = std::min(shortest, s.rounds_log.size());
    longest = std::max(longest, s.rounds_log.size());
  }
  if (longest == 0) throw ValidationError("session logs contain no rounds");
  const RoundWindow w = o.window ? *o.window : RoundWindow{1, static_cast<int>(longest)};

  const auto summary = summarize(sessions, w);
  write_summary_csv(out, summary);
  out << "\n";
  std::vector<Comparison> battery;
  if (sessions.size() >= 2) battery = profit_battery(sessions, w, o.nash_profit);
  else err << "note: test battery needs at least two sessions\n";
  write_battery_csv(out, battery, w);

  if (!o.out_dir) return ok;
  if (shortest != longest) err << "note: time series truncated to " << shortest << " rounds\n";
  std::vector<SessionRecord> aligned = sessions;
  for (auto& s : aligned) s.rounds_log.resize(shortest);

  const fs::path dir = *o.out_dir;
  {
    auto f = open_out(dir / "summary.csv");
    write_summary_csv(f, summary);
    check_written(f, dir / "summary.csv");
  }
  {
    auto f = open_out(dir / "battery.csv");
    write_battery_csv(f, battery, w);
    check_written(f, dir / "battery.csv");
  }
  if (shortest > 0) {
    const std::vector<SeriesField> fields{SeriesField::x, SeriesField::y, SeriesField::total, SeriesField::degree,
                                          SeriesField::dwl};
    std::vector<std::vector<SeriesPoint>> cols;
    for (auto field : fields) cols.push_back(median_timeseries(aligned, field));
    auto f = open_out(dir / "timeseries.csv");
    f << "round,x,y,total,degree,dwl\n";
    for (std::size_t t = 0; t < shortest; ++t) {
      f << cols[0][t].round;
      for (const auto& c : cols) f << "," << num(c[t].median);
      f << "\n";
    }
    check_written(f, dir / "timeseries.csv");
  }
  return ok;
}

// ------------------------------------------------------------------- export

struct ExportOptions {
  fs::path log;
  std::string format = "csv";
  std::optional<fs::path> out;
};

inline int export_log(const ExportOptions& o, std::ostream& out) {
  if (o.format != "csv") throw ValidationError("unknown export format '" + o.format + "' (supported: csv)");
  const auto s = read_session_log(o.log);
  if (!o.out) {
    write_rounds_csv(out, s);
    return ok;
  }
  auto f = open_out(*o.out);
  write_rounds_csv(f, s);
  check_written(f, *o.out);
  return ok;
}

}  // namespace leca::cli
