#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "leca/agents.hpp"
#include "leca/game.hpp"

namespace leca {
namespace {

const SessionConfig kSession{};

std::vector<RoundRecord> fake_history(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> q(0.1, 6.0), s(20.0, 90.0);
  std::vector<RoundRecord> h;
  double cum = 0;
  for (int i = 1; i <= n; ++i) {
    RoundRecord r;
    r.round = i;
    r.x = round_half_up(q(rng), 2);
    r.y = round_half_up(std::min(3.0, q(rng)), 2);
    r.s_x = s(rng);
    r.s_y = s(rng);
    cum += r.s_x;
    r.cum_x = cum;
    h.push_back(r);
  }
  return h;
}

std::vector<AgentSpec> all_kinds() {
  std::vector<AgentSpec> specs;
  for (auto kind : {AgentKind::stationary, AgentKind::collusive, AgentKind::myopic_best_response, AgentKind::cycle,
                    AgentKind::random_uniform, AgentKind::epsilon_greedy_learner}) {
    AgentSpec a;
    a.kind = kind;
    a.seed = 42;
    a.sequence = {0.1, 0.9, 2.5};
    specs.push_back(a);
  }
  return specs;
}

TEST(Agents, MyopicAnswersNash) {
  AgentSpec a{.kind = AgentKind::myopic_best_response};
  auto h = fake_history(1, 1);
  h[0].y = 3.0;
  EXPECT_NEAR(decide(a, h, kSession), 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(decide(a, {}, kSession), kSession.market.x_bounds.mid());
}

TEST(Agents, CollusiveHoldsLowerBound) {
  AgentSpec a{.kind = AgentKind::collusive};
  EXPECT_DOUBLE_EQ(decide(a, {}, kSession), 0.1);
  EXPECT_DOUBLE_EQ(decide(a, fake_history(10, 3), kSession), 0.1);
  a.k = 1.2;
  EXPECT_DOUBLE_EQ(decide(a, {}, kSession), 0.1);
}

TEST(Agents, CycleFollowsSequence) {
  AgentSpec a{.kind = AgentKind::cycle, .sequence = {0.1, 0.9}};
  for (int t = 1; t <= 8; ++t) {
    const auto h = fake_history(t - 1, 5);
    EXPECT_DOUBLE_EQ(decide(a, h, kSession), t % 2 == 1 ? 0.1 : 0.9) << t;
  }
}

TEST(Agents, StationaryIsFixed) {
  AgentSpec a{.kind = AgentKind::stationary, .x0 = 2.5};
  EXPECT_DOUBLE_EQ(decide(a, {}, kSession), 2.5);
  EXPECT_DOUBLE_EQ(decide(a, fake_history(7, 9), kSession), 2.5);
}

TEST(Agents, DeterministicAndWithinBounds) {
  for (const auto& spec : all_kinds()) {
    for (int n = 0; n < 40; ++n) {
      const auto h = fake_history(n, static_cast<std::uint64_t>(n) * 13 + 1);
      const double a = decide(spec, h, kSession);
      const double b = decide(spec, h, kSession);
      EXPECT_EQ(a, b) << to_string(spec.kind);
      EXPECT_TRUE(kSession.market.x_bounds.contains(a)) << to_string(spec.kind) << " " << a;
    }
  }
}

TEST(Agents, RandomUniformDependsOnSeed) {
  AgentSpec a{.kind = AgentKind::random_uniform, .seed = 1};
  AgentSpec b{.kind = AgentKind::random_uniform, .seed = 2};
  EXPECT_NE(decide(a, {}, kSession), decide(b, {}, kSession));
}

TEST(Agents, RejectsMalformedHistory) {
  auto h = fake_history(3, 1);
  h[1].round = 5;
  EXPECT_THROW(decide(AgentSpec{}, h, kSession), std::invalid_argument);
}

TEST(Agents, Validation) {
  EXPECT_THROW((AgentSpec{.kind = AgentKind::cycle}).validate(kSession.market), ValidationError);
  EXPECT_THROW((AgentSpec{.kind = AgentKind::stationary, .x0 = 7}).validate(kSession.market), ValidationError);
  EXPECT_THROW(parse_agent_kind("oracle"), ValidationError);
  EXPECT_EQ(parse_agent_kind("epsilon_greedy_learner"), AgentKind::epsilon_greedy_learner);
}

TEST(Agents, CollusiveUnroundedProfitsMatchExtortionPair) {
  SessionConfig fine = kSession;
  fine.decimals = 6;
  const auto s = run_session(fine, AgentSpec{.kind = AgentKind::collusive}, 1);
  for (std::size_t i = 1; i < s.rounds_log.size(); ++i) {
    EXPECT_NEAR(s.rounds_log[i].s_x, 65.203, 5e-3);
    EXPECT_NEAR(s.rounds_log[i].s_y, 72.662, 5e-3);
  }
}

double tail_median_x(const SessionRecord& s, int tail) {
  std::vector<double> xs;
  for (int i = s.rounds_played() - tail; i < s.rounds_played(); ++i) xs.push_back(s.rounds_log[static_cast<std::size_t>(i)].x);
  std::sort(xs.begin(), xs.end());
  return 0.5 * (xs[xs.size() / 2 - 1] + xs[xs.size() / 2]);
}

TEST(Agents, LearnerSettlesNearCollusiveQuantity) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = run_session(kSession, AgentSpec{.kind = AgentKind::epsilon_greedy_learner}, seed);
    EXPECT_LT(tail_median_x(s, 100), 0.3) << "seed " << seed;
  }
}

TEST(Agents, LearnerQuantityDeclinesOverSession) {
  const auto s = run_session(kSession, AgentSpec{.kind = AgentKind::epsilon_greedy_learner}, 11);
  double early = 0, late = 0;
  for (int i = 0; i < 150; ++i) early += s.rounds_log[static_cast<std::size_t>(i)].x;
  for (int i = 450; i < 600; ++i) late += s.rounds_log[static_cast<std::size_t>(i)].x;
  EXPECT_LT(late, early);
}

}  // namespace
}  // namespace leca
