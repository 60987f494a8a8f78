#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "leca/service.hpp"

namespace leca::service {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("leca-svc-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ServiceConfig config_in(const TempDir& d, bool sync = true) {
  ServiceConfig c;
  c.data_dir = d.path();
  c.fsync = sync;
  return c;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

TEST(ServiceConfigTest, LoadsAndValidates) {
  TempDir d;
  fs::create_directories(d.path());
  const auto file = d.path() / "svc.json";
  std::ofstream(file) << R"({"port": 9001, "data_dir": "/tmp/x", "idle_timeout_s": 60,
                            "session_template": {"rounds": 20, "leca": {"k": 1.2}},
                            "payout": {"clamp_negative": false}})";
  const auto c = load_service_config(file);
  EXPECT_EQ(c.port, 9001);
  EXPECT_EQ(c.session_template.rounds, 20);
  EXPECT_DOUBLE_EQ(c.session_template.leca.k, 1.2);
  EXPECT_FALSE(c.payout.clamp_negative);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(service_config_from_json(service_config_to_json(c)).session_template.rounds, 20);

  ServiceConfig bad;
  bad.session_template.leca.k = 2.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  EXPECT_THROW(load_service_config(d.path() / "missing.json"), IoError);
  std::ofstream(file) << "{not json";
  EXPECT_THROW(load_service_config(file), ValidationError);
}

TEST(Store, CreateUsesTemplateAndOverrides) {
  TempDir d;
  SessionStore store(config_in(d));
  auto [id, cfg] = store.create();
  EXPECT_EQ(id.size(), 32u);
  EXPECT_DOUBLE_EQ(cfg.leca.k, 1.296);
  EXPECT_EQ(cfg.rounds, 600);
  EXPECT_TRUE(fs::exists(store.path_for(id)));
  EXPECT_EQ(count_lines(store.path_for(id)), 1);

  EXPECT_EQ(store.create({{"rounds", 10}}).second.rounds, 10);
  EXPECT_THROW(store.create({{"k", 0.5}}), ValidationError);
  EXPECT_THROW(store.create({{"k", 2.0}}), ValidationError);
  EXPECT_THROW(store.create({{"rounds", 0}}), ValidationError);
  EXPECT_NE(store.create().first, id);
}

TEST(Store, SubmitFirstRoundAndErrors) {
  TempDir d;
  SessionStore store(config_in(d));
  const auto id = store.create({{"rounds", 10}}).first;
  const auto r = store.submit(id, 1, 3.0);
  EXPECT_EQ(r.round, 1);
  EXPECT_EQ(r.y, round_half_up(solve_response(3.0, LecaConfig{}, MarketParams{}), 2));
  EXPECT_EQ(r.y, 3.0);
  EXPECT_DOUBLE_EQ(r.s_x, 40.0);

  EXPECT_THROW(store.submit(id, 2, 6.5), RejectedDecision);
  EXPECT_THROW(store.submit(id, 2, 0.05), RejectedDecision);
  try {
    store.submit(id, 4, 1.0);
    FAIL();
  } catch (const Conflict& c) {
    EXPECT_EQ(c.expected_round, 2);
    EXPECT_FALSE(c.existing);
  }
  EXPECT_THROW(store.submit("nope", 1, 1.0), NotFound);
  EXPECT_EQ(store.snapshot(id).rounds_played(), 1);
}

TEST(Store, DuplicateRoundIsIdempotent) {
  TempDir d;
  SessionStore store(config_in(d));
  const auto id = store.create().first;
  std::vector<RoundRecord> acked;
  for (int t = 1; t <= 5; ++t) acked.push_back(store.submit(id, t, 0.5 + 0.1 * t));
  const int lines = count_lines(store.path_for(id));
  for (double x : {0.73, 1.1}) {
    try {
      store.submit(id, 5, x);
      FAIL();
    } catch (const Conflict& c) {
      ASSERT_TRUE(c.existing);
      EXPECT_EQ(*c.existing, acked[4]);
      EXPECT_EQ(c.expected_round, 6);
    }
  }
  EXPECT_EQ(count_lines(store.path_for(id)), lines);
  EXPECT_EQ(store.snapshot(id).rounds_played(), 5);
}

TEST(Store, SessionClosesAfterLastRound) {
  TempDir d;
  SessionStore store(config_in(d));
  const auto id = store.create({{"rounds", 3}}).first;
  for (int t = 1; t <= 3; ++t) store.submit(id, t, 1.0);
  EXPECT_THROW(store.submit(id, 4, 1.0), SessionClosed);
  EXPECT_THROW(store.submit(id, 3, 1.0), Conflict);
}

TEST(Store, HistoryNewestFirst) {
  TempDir d;
  SessionStore store(config_in(d));
  const auto id = store.create().first;
  for (int t = 1; t <= 3; ++t) store.submit(id, t, 1.0);
  EXPECT_EQ(store.history(id).records.size(), 3u);
  for (int t = 4; t <= 15; ++t) store.submit(id, t, 0.1 * t);
  const auto h = store.history(id);
  ASSERT_EQ(h.records.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(h.records[i].round, 15 - static_cast<int>(i));
  EXPECT_EQ(h.cum_x, h.records.front().cum_x);
  EXPECT_EQ(h.next_round, 16);
  EXPECT_EQ(h.rounds_played, 15);
  EXPECT_EQ(store.history(id, 2).records.size(), 2u);
  EXPECT_THROW(store.history(id, -1), ValidationError);
  EXPECT_THROW(store.history("missing"), NotFound);
}

TEST(Store, FinishPaysOutIdempotently) {
  TempDir d;
  SessionStore store(config_in(d, false));
  const auto nash = store.create().first;
  for (int t = 1; t <= 600; ++t) store.submit(nash, t, 3.0);
  const auto s1 = store.finish(nash);
  EXPECT_DOUBLE_EQ(s1.cum_x, 24000.0);
  EXPECT_NEAR(s1.payout_yuan, 17.0, 1e-12);
  const auto s2 = store.finish(nash);
  EXPECT_EQ(summary_to_json(s1), summary_to_json(s2));
  EXPECT_EQ(count_lines(store.path_for(nash)), 602);

  const auto empty = store.create().first;
  const auto e = store.finish(empty);
  EXPECT_EQ(e.payout_yuan, 0.0);
  EXPECT_EQ(e.status, SessionStatus::finished);
  EXPECT_THROW(store.submit(empty, 1, 1.0), SessionClosed);
}

TEST(Store, IdleSessionsAreAbandoned) {
  TempDir d;
  auto cfg = config_in(d);
  cfg.idle_timeout_s = 60;
  SessionStore store(cfg);
  const auto idle = store.create().first;
  const auto done = store.create().first;
  store.finish(done);
  EXPECT_EQ(store.reap_idle(), 0);
  EXPECT_EQ(store.reap_idle(Clock::now() + std::chrono::seconds(61)), 1);
  EXPECT_EQ(store.snapshot(idle).status, SessionStatus::abandoned);
  EXPECT_EQ(store.snapshot(done).status, SessionStatus::finished);
  EXPECT_THROW(store.submit(idle, 1, 1.0), SessionClosed);
  EXPECT_EQ(read_session_log(store.path_for(idle)).status, SessionStatus::abandoned);
}

TEST(Store, RestartRecoversAcknowledgedRounds) {
  TempDir d;
  std::string id;
  std::vector<RoundRecord> acked;
  {
    SessionStore store(config_in(d));
    id = store.create({{"rounds", 20}}).first;
    for (int t = 1; t <= 7; ++t) acked.push_back(store.submit(id, t, 0.3 * t));
  }
  // Simulate a crash during the next append.
  std::ofstream(d.path() / (id + ".jsonl"), std::ios::app) << R"({"round":8,"x":"0.5)";

  SessionStore store(config_in(d));
  EXPECT_TRUE(store.recovery_errors().empty());
  const auto s = store.snapshot(id);
  EXPECT_EQ(s.rounds_log, acked);
  EXPECT_EQ(s.status, SessionStatus::active);
  const auto r8 = store.submit(id, 8, 0.5);
  EXPECT_EQ(r8.round, 8);
  const auto reread = read_session_log(store.path_for(id));
  EXPECT_EQ(reread.rounds_played(), 8);
  EXPECT_EQ(reread.rounds_log.back(), r8);
  EXPECT_EQ(replay(reread), reread.rounds_log);
}

TEST(Store, CorruptLogIsReportedNotFatal) {
  TempDir d;
  std::string good;
  {
    SessionStore store(config_in(d));
    good = store.create().first;
    store.submit(good, 1, 1.0);
  }
  std::ofstream(d.path() / "broken.jsonl") << "{\"session_id\":\"broken\"}\nnot json\n";
  SessionStore store(config_in(d));
  ASSERT_EQ(store.recovery_errors().size(), 1u);
  EXPECT_NE(store.recovery_errors()[0].find("broken.jsonl"), std::string::npos);
  EXPECT_EQ(store.snapshot(good).rounds_played(), 1);
}

class HttpFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    auto cfg = config_in(dir_);
    store_ = std::make_unique<SessionStore>(cfg);
    server_ = std::make_unique<HttpServer>(*store_);
    port_ = server_->bind("127.0.0.1", 0);
    server_->start_background();
  }
  void TearDown() override {
    server_->stop();
    server_.reset();
    store_.reset();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30);
    return c;
  }
  static json body(const httplib::Result& r) { return json::parse(r->body); }

  TempDir dir_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<HttpServer> server_;
  int port_ = 0;
};

TEST_F(HttpFixture, Lifecycle) {
  auto c = client();
  auto health = c.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto created = c.Post("/sessions", R"({"rounds": 12})", "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  const auto id = body(created)["session_id"].get<std::string>();
  EXPECT_EQ(body(created)["config"]["leca"]["k"], 1.296);

  auto r1 = c.Post("/sessions/" + id + "/rounds", R"({"round": 1, "x": "3.00"})", "application/json");
  ASSERT_EQ(r1->status, 200);
  const auto j1 = body(r1);
  EXPECT_EQ(j1["x"], "3.00");
  EXPECT_EQ(j1["y"], "3.00");
  EXPECT_EQ(j1["sx"], "40.00");
  EXPECT_EQ(j1["sx_full"], 40.0);

  auto dup = c.Post("/sessions/" + id + "/rounds", R"({"round": 1, "x": 2.5})", "application/json");
  ASSERT_EQ(dup->status, 409);
  const auto jd = body(dup);
  EXPECT_EQ(jd["code"], "conflict");
  EXPECT_EQ(jd["detail"]["record"], j1);
  EXPECT_EQ(record_from_wire(jd["detail"]["record"]), store_->snapshot(id).rounds_log[0]);

  auto out = c.Post("/sessions/" + id + "/rounds", R"({"round": 2, "x": "7.00"})", "application/json");
  EXPECT_EQ(out->status, 422);
  EXPECT_EQ(body(out)["code"], "rejected_decision");
  EXPECT_TRUE(body(out).contains("message"));
  EXPECT_TRUE(body(out).contains("detail"));

  EXPECT_EQ(c.Post("/sessions/" + id + "/rounds", "{oops", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/sessions/" + id + "/rounds", R"({"x": 1})", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/sessions/unknown/rounds", R"({"round": 1, "x": 1})", "application/json")->status, 404);
  EXPECT_EQ(c.Post("/sessions", R"({"k": 0.5})", "application/json")->status, 400);

  for (int t = 2; t <= 12; ++t)
    ASSERT_EQ(c.Post("/sessions/" + id + "/rounds", json{{"round", t}, {"x", "0.10"}}.dump(), "application/json")->status, 200);
  auto closed = c.Post("/sessions/" + id + "/rounds", R"({"round": 13, "x": 1})", "application/json");
  EXPECT_EQ(closed->status, 409);
  EXPECT_EQ(body(closed)["code"], "session_closed");

  auto hist = c.Get("/sessions/" + id + "/history");
  ASSERT_EQ(hist->status, 200);
  const auto jh = body(hist);
  EXPECT_EQ(jh["records"].size(), 10u);
  EXPECT_EQ(jh["records"][0]["round"], 12);
  EXPECT_EQ(jh["totals"]["cumx"], jh["records"][0]["cumx"]);
  EXPECT_EQ(jh["next_round"], 13);
  EXPECT_EQ(body(c.Get("/sessions/" + id + "/history?n=3"))["records"].size(), 3u);
  EXPECT_EQ(c.Get("/sessions/" + id + "/history?n=abc")->status, 400);

  auto f1 = c.Post("/sessions/" + id + "/finish", "", "application/json");
  auto f2 = c.Post("/sessions/" + id + "/finish", "", "application/json");
  ASSERT_EQ(f1->status, 200);
  EXPECT_EQ(body(f1), body(f2));
  EXPECT_EQ(body(f1)["status"], "finished");
}

TEST_F(HttpFixture, ConcurrentSessionsStayIsolated) {
  constexpr int kSessions = 40, kRounds = 120;
  std::vector<std::string> ids(kSessions);
  std::vector<std::vector<double>> played(kSessions);
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < kSessions; ++i)
    threads.emplace_back([&, i] {
      auto c = client();
      auto created = c.Post("/sessions", json{{"rounds", kRounds}}.dump(), "application/json");
      if (!created || created->status != 201) {
        ADD_FAILURE() << "create " << i << ": " << (created ? created->body : httplib::to_string(created.error()));
        return void(++failures);
      }
      ids[i] = body(created)["session_id"];
      for (int t = 1; t <= kRounds; ++t) {
        const double x = 0.1 + ((i * 37 + t * 11) % 590) / 100.0;
        auto r = c.Post("/sessions/" + ids[i] + "/rounds", json{{"round", t}, {"x", format_fixed(x, 2)}}.dump(),
                        "application/json");
        if (!r || r->status != 200) {
          ADD_FAILURE() << "session " << i << " round " << t << ": "
                        << (r ? r->body : httplib::to_string(r.error()));
          return void(++failures);
        }
        played[i].push_back(x);
      }
      auto f = c.Post("/sessions/" + ids[i] + "/finish", "", "application/json");
      if (!f || f->status != 200) ++failures;
    });
  for (auto& t : threads) t.join();
  ASSERT_EQ(failures.load(), 0);

  SessionConfig cfg;
  cfg.rounds = kRounds;
  for (int i = 0; i < kSessions; ++i) {
    const auto log = read_session_log(store_->path_for(ids[i]));
    EXPECT_EQ(log.session_id, ids[i]);
    EXPECT_EQ(log.status, SessionStatus::finished);
    SessionRecord offline = new_session(ids[i], cfg, std::nullopt, 0);
    for (double x : played[i]) step(offline, x);
    EXPECT_EQ(log.rounds_log, offline.rounds_log) << "session " << i;
  }
}

}  // namespace
}  // namespace leca::service
