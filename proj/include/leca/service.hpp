#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 512
#endif
#include "httplib.h"
#include "leca/metrics.hpp"
#include "leca/session_log.hpp"

namespace leca::service {

using Clock = std::chrono::steady_clock;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "leca-data";
  double idle_timeout_s = 1800;
  Interval k_bounds{1.0, 1.296};
  SessionConfig session_template{};
  PayoutRule payout{.clamp_negative = true};
  bool fsync = true;
  int worker_threads = 64;

  void validate() const {
    if (port < 0 || port > 65535) throw ValidationError("port out of range");
    if (!(idle_timeout_s > 0)) throw ValidationError("idle_timeout_s must be positive");
    if (!(k_bounds.low >= 1.0) || k_bounds.high < k_bounds.low) throw ValidationError("k_bounds must satisfy 1 <= low <= high");
    if (worker_threads < 1) throw ValidationError("worker_threads must be positive");
    session_template.validate();
    if (!k_bounds.contains(session_template.leca.k, 0.0))
      throw ValidationError("template k lies outside k_bounds");
  }
};

inline json service_config_to_json(const ServiceConfig& c) {
  return {{"host", c.host},
          {"port", c.port},
          {"data_dir", c.data_dir.string()},
          {"idle_timeout_s", c.idle_timeout_s},
          {"k_bounds", {c.k_bounds.low, c.k_bounds.high}},
          {"session_template", config_to_json(c.session_template)},
          {"payout",
           {{"rate", c.payout.rate},
            {"rounds", c.payout.rounds},
            {"baseline", c.payout.baseline},
            {"show_up_fee", c.payout.show_up_fee},
            {"clamp_negative", c.payout.clamp_negative}}},
          {"fsync", c.fsync},
          {"worker_threads", c.worker_threads}};
}

inline ServiceConfig service_config_from_json(const json& j, ServiceConfig base = {}) {
  if (!j.is_object()) throw ValidationError("service config must be an object");
  try {
    base.host = detail::json_get(j, "host", base.host);
    base.port = detail::json_get(j, "port", base.port);
    if (j.contains("data_dir")) base.data_dir = j.at("data_dir").get<std::string>();
    base.idle_timeout_s = detail::json_get(j, "idle_timeout_s", base.idle_timeout_s);
    base.k_bounds = detail::interval_from(j, "k_bounds", base.k_bounds);
    if (j.contains("session_template")) base.session_template = config_from_json(j.at("session_template"), base.session_template);
    if (j.contains("payout")) {
      const auto& p = j.at("payout");
      base.payout.rate = detail::json_get(p, "rate", base.payout.rate);
      base.payout.rounds = detail::json_get(p, "rounds", base.payout.rounds);
      base.payout.baseline = detail::json_get(p, "baseline", base.payout.baseline);
      base.payout.show_up_fee = detail::json_get(p, "show_up_fee", base.payout.show_up_fee);
      base.payout.clamp_negative = detail::json_get(p, "clamp_negative", base.payout.clamp_negative);
    }
    base.fsync = detail::json_get(j, "fsync", base.fsync);
    base.worker_threads = detail::json_get(j, "worker_threads", base.worker_threads);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("service config: ") + e.what());
  }
  return base;
}

inline ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return service_config_from_json(j);
}

/// A submission whose round number is not the next expected one. Carries the
/// stored record when the round was already played.
struct Conflict : std::runtime_error {
  Conflict(const std::string& msg, int expected, std::optional<RoundRecord> rec)
      : std::runtime_error(msg), expected_round(expected), existing(std::move(rec)) {}
  int expected_round;
  std::optional<RoundRecord> existing;
};

// Wire format: quantities and displayed profits are fixed 2-decimal strings.
inline json record_to_wire(const RoundRecord& r, int decimals) {
  json j{{"round", r.round},
         {"x", format_fixed(r.x, decimals)},
         {"y", format_fixed(r.y, decimals)},
         {"sx", format_fixed(r.s_x, 2)},
         {"sy", format_fixed(r.s_y, 2)},
         {"cumx", format_fixed(r.cum_x, 2)},
         {"sx_full", r.s_x},
         {"sy_full", r.s_y},
         {"cumx_full", r.cum_x},
         {"clamped", r.clamped}};
  return j;
}

inline RoundRecord record_from_wire(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.x = parse_decimal(j.at("x"), "x");
  r.y = parse_decimal(j.at("y"), "y");
  r.s_x = j.at("sx_full").get<double>();
  r.s_y = j.at("sy_full").get<double>();
  r.cum_x = j.at("cumx_full").get<double>();
  r.clamped = j.value("clamped", false);
  return r;
}

inline std::string new_session_id() {
  static std::mutex m;
  static std::random_device rd;
  std::lock_guard lock(m);
  char buf[33];
  std::uint64_t hi = (std::uint64_t{rd()} << 32) | rd();
  std::uint64_t lo = (std::uint64_t{rd()} << 32) | rd();
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

/// Append-only file handle; every append reaches the disk before returning
/// when `sync` is set.
class AppendFile {
 public:
  AppendFile(const std::filesystem::path& path, bool sync) : path_(path), sync_(sync) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;
  ~AppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(const std::string& data) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
      const ssize_t n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("write failed for " + path_.string() + ": " + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0) throw IoError("fsync failed for " + path_.string() + ": " + std::strerror(errno));
  }

 private:
  std::filesystem::path path_;
  bool sync_;
  int fd_ = -1;
};

struct FinishSummary {
  std::string session_id;
  SessionStatus status;
  int rounds_played;
  double cum_x;
  double payout_yuan;
};

inline json summary_to_json(const FinishSummary& s) {
  return {{"session_id", s.session_id},
          {"status", to_string(s.status)},
          {"rounds_played", s.rounds_played},
          {"cumx", format_fixed(s.cum_x, 2)},
          {"cumx_full", s.cum_x},
          {"payout_yuan", format_fixed(s.payout_yuan, 2)},
          {"payout_yuan_full", s.payout_yuan}};
}

struct History {
  std::string session_id;
  SessionStatus status;
  std::vector<RoundRecord> records;  ///< newest first
  double cum_x;
  int rounds_played;
  int next_round;
  int rounds;
  int decimals;
};

inline json history_to_json(const History& h) {
  json recs = json::array();
  for (const auto& r : h.records) recs.push_back(record_to_wire(r, h.decimals));
  return {{"session_id", h.session_id},
          {"status", to_string(h.status)},
          {"records", recs},
          {"totals", {{"cumx", format_fixed(h.cum_x, 2)}, {"cumx_full", h.cum_x}, {"rounds_played", h.rounds_played}}},
          {"next_round", h.next_round},
          {"rounds", h.rounds}};
}

/// Owns every session: one mutex and one append-only `<id>.jsonl` per session.
class SessionStore {
 public:
  explicit SessionStore(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::error_code ec;
    std::filesystem::create_directories(cfg_.data_dir, ec);
    if (ec || !std::filesystem::is_directory(cfg_.data_dir))
      throw IoError("cannot create data directory " + cfg_.data_dir.string());
    const auto probe = cfg_.data_dir / ".write-probe";
    {
      std::ofstream out(probe);
      if (!out) throw IoError("data directory not writable: " + cfg_.data_dir.string());
    }
    std::filesystem::remove(probe, ec);
    recover();
  }

  const ServiceConfig& config() const { return cfg_; }
  const std::vector<std::string>& recovery_errors() const { return recovery_errors_; }

  std::size_t size() const {
    std::shared_lock lock(map_mutex_);
    return slots_.size();
  }

  std::pair<std::string, SessionConfig> create(const json& overrides = json::object()) {
    SessionConfig config = config_from_json(overrides.is_null() ? json::object() : overrides, cfg_.session_template);
    config.validate();
    if (!cfg_.k_bounds.contains(config.leca.k, 0.0))
      throw ValidationError("k=" + std::to_string(config.leca.k) + " outside allowed range [" +
                            std::to_string(cfg_.k_bounds.low) + ", " + std::to_string(cfg_.k_bounds.high) + "]");
    auto slot = std::make_shared<Slot>();
    std::string id;
    {
      std::unique_lock lock(map_mutex_);
      do id = new_session_id();
      while (slots_.count(id));
      slot->record = new_session(id, config, std::nullopt, 0);
      slot->file = std::make_unique<AppendFile>(path_for(id), cfg_.fsync);
      slot->file->append(header_line(slot->record));
      slot->touched = Clock::now();
      slots_.emplace(id, slot);
    }
    return {id, config};
  }

  RoundRecord submit(const std::string& id, int round, double x) {
    auto slot = find(id);
    std::lock_guard lock(slot->m);
    auto& s = slot->record;
    slot->touched = Clock::now();
    const int expected = s.rounds_played() + 1;
    if (round >= 1 && round < expected)
      throw Conflict("round " + std::to_string(round) + " already recorded", expected,
                     s.rounds_log[static_cast<std::size_t>(round - 1)]);
    if (s.status != SessionStatus::active || s.full())
      throw SessionClosed("session " + id + " is " +
                          std::string(s.status == SessionStatus::active ? "complete" : to_string(s.status)));
    if (round != expected)
      throw Conflict("expected round " + std::to_string(expected) + ", got " + std::to_string(round), expected,
                     std::nullopt);
    RoundRecord r = next_round(s, x);
    slot->file->append(round_line(r, s.config.decimals));
    s.rounds_log.push_back(r);
    return r;
  }

  History history(const std::string& id, int last_n = 10) const {
    if (last_n < 0) throw ValidationError("n must be non-negative");
    auto slot = find(id);
    std::lock_guard lock(slot->m);
    const auto& s = slot->record;
    History h{id, s.status, {}, s.cum_x(), s.rounds_played(), s.rounds_played() + 1, s.config.rounds,
              s.config.decimals};
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(last_n), s.rounds_log.size());
    h.records.assign(s.rounds_log.rbegin(), s.rounds_log.rbegin() + static_cast<std::ptrdiff_t>(n));
    return h;
  }

  FinishSummary finish(const std::string& id) {
    auto slot = find(id);
    std::lock_guard lock(slot->m);
    auto& s = slot->record;
    if (s.status == SessionStatus::active) {
      slot->file->append(status_line(SessionStatus::finished));
      s.status = SessionStatus::finished;
    }
    return summary_of(s);
  }

  /// Marks active sessions untouched for longer than the idle timeout as
  /// abandoned. Returns how many were closed.
  int reap_idle(Clock::time_point now = Clock::now()) {
    std::vector<std::shared_ptr<Slot>> all;
    {
      std::shared_lock lock(map_mutex_);
      for (auto& [_, slot] : slots_) all.push_back(slot);
    }
    const auto limit = std::chrono::duration<double>(cfg_.idle_timeout_s);
    int closed = 0;
    for (auto& slot : all) {
      std::lock_guard lock(slot->m);
      if (slot->record.status != SessionStatus::active || now - slot->touched <= limit) continue;
      slot->file->append(status_line(SessionStatus::abandoned));
      slot->record.status = SessionStatus::abandoned;
      ++closed;
    }
    return closed;
  }

  SessionRecord snapshot(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->m);
    return slot->record;
  }

  std::filesystem::path path_for(const std::string& id) const { return cfg_.data_dir / (id + ".jsonl"); }

 private:
  struct Slot {
    mutable std::mutex m;
    SessionRecord record;
    std::unique_ptr<AppendFile> file;
    Clock::time_point touched;
  };

  std::shared_ptr<Slot> find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = slots_.find(id);
    if (it == slots_.end()) throw NotFound("unknown session " + id);
    return it->second;
  }

  FinishSummary summary_of(const SessionRecord& s) const {
    return {s.session_id, s.status, s.rounds_played(), s.cum_x(), payout_yuan(s.cum_x(), cfg_.payout)};
  }

  // A crash can leave a final line without its newline; only acknowledged
  // rounds (whose line was completely synced) survive.
  void recover() {
    for (const auto& entry : std::filesystem::directory_iterator(cfg_.data_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
      const auto path = entry.path();
      try {
        std::string text;
        {
          std::ifstream in(path, std::ios::binary);
          if (!in) throw IoError("cannot open " + path.string());
          text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        if (!text.empty() && text.back() != '\n') {
          const auto keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
          std::filesystem::resize_file(path, keep);
          text.resize(keep);
        }
        std::istringstream in(text);
        auto slot = std::make_shared<Slot>();
        slot->record = parse_session_log(in);
        if (slot->record.session_id != path.stem().string())
          throw ValidationError("header session_id does not match file name");
        slot->file = std::make_unique<AppendFile>(path, cfg_.fsync);
        slot->touched = Clock::now();
        slots_.emplace(slot->record.session_id, slot);
      } catch (const std::exception& e) {
        recovery_errors_.push_back(path.string() + ": " + e.what());
      }
    }
  }

  ServiceConfig cfg_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::vector<std::string> recovery_errors_;
};

inline json error_body(std::string_view code, const std::string& message, json detail = json::object()) {
  return {{"code", code}, {"message", message}, {"detail", std::move(detail)}};
}

/// HTTP front end over a SessionStore.
class HttpServer {
 public:
  explicit HttpServer(SessionStore& store) : store_(store) {
    const int workers = store.config().worker_threads;
    server_.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
    routes();
  }
  ~HttpServer() { stop(); }

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) port_ = server_.bind_to_any_port(host);
    else port_ = server_.bind_to_port(host, port) ? port : -1;
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  /// Serves until stop(); also runs the idle reaper.
  void run() {
    std::thread reaper([this] { reap_loop(); });
    server_.listen_after_bind();
    {
      std::lock_guard lock(reap_m_);
      stopping_ = true;
    }
    reap_cv_.notify_all();
    reaper.join();
  }

  void start_background() {
    thread_ = std::thread([this] { run(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Conflict& e) {
      json detail{{"expected_round", e.expected_round}};
      if (e.existing) detail["record"] = record_to_wire(*e.existing, 2);
      send(res, 409, error_body("conflict", e.what(), detail));
    } catch (const SessionClosed& e) {
      send(res, 409, error_body("session_closed", e.what()));
    } catch (const RejectedDecision& e) {
      send(res, 422, error_body("rejected_decision", e.what()));
    } catch (const NotFound& e) {
      send(res, 404, error_body("not_found", e.what()));
    } catch (const json::exception& e) {
      send(res, 400, error_body("bad_request", e.what()));
    } catch (const ValidationError& e) {
      send(res, 400, error_body("validation", e.what()));
    } catch (const std::domain_error& e) {
      send(res, 400, error_body("validation", e.what()));
    } catch (const IoError& e) {
      send(res, 500, error_body("io_error", e.what()));
    } catch (const std::exception& e) {
      send(res, 500, error_body("internal", e.what()));
    }
  }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  }

  void routes() {
    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}, {"sessions", store_.size()}});
    });

    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto [id, config] = store_.create(body_json(req));
        send(res, 201, {{"session_id", id}, {"config", config_to_json(config)}});
      });
    });

    server_.Post(R"(/sessions/([A-Za-z0-9_-]+)/rounds)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_json(req);
        if (!b.contains("round") || !b.at("round").is_number_integer()) throw ValidationError("'round' must be an integer");
        if (!b.contains("x")) throw ValidationError("'x' is required");
        const double x = parse_decimal(b.at("x"), "x");
        const std::string id = req.matches[1];
        const auto r = store_.submit(id, b.at("round").get<int>(), x);
        send(res, 200, record_to_wire(r, 2));
      });
    });

    server_.Get(R"(/sessions/([A-Za-z0-9_-]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        int n = 10;
        if (req.has_param("n")) {
          const auto v = req.get_param_value("n");
          std::size_t used = 0;
          try {
            n = std::stoi(v, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used == 0 || used != v.size()) throw ValidationError("n must be an integer");
        }
        send(res, 200, history_to_json(store_.history(req.matches[1], n)));
      });
    });

    server_.Post(R"(/sessions/([A-Za-z0-9_-]+)/finish)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, summary_to_json(store_.finish(req.matches[1]))); });
    });
  }

  void reap_loop() {
    const auto period = std::chrono::duration<double>(std::clamp(store_.config().idle_timeout_s / 4, 0.05, 5.0));
    std::unique_lock lock(reap_m_);
    while (!reap_cv_.wait_for(lock, period, [this] { return stopping_; })) store_.reap_idle();
  }

  SessionStore& store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::mutex reap_m_;
  std::condition_variable reap_cv_;
  bool stopping_ = false;
};

}  // namespace leca::service
