#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mfope/simulator.hpp"
#include "mfope/trajectory_io.hpp"

using namespace mfope;

TEST(Attraction, FormulaCases) {
  EXPECT_DOUBLE_EQ(attraction(0, 50, 50, 1.0), 2.0);
  EXPECT_NEAR(attraction(1, 50, 50, 1.0), 1.5 * std::exp(1.0) + 0.5, 1e-12);
  EXPECT_NEAR(attraction(1, 50, 50, 1.0), 4.5774, 1e-4);
  EXPECT_DOUBLE_EQ(attraction(0, 0, 10, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(attraction(0, 4, 0, 2.0), 1.5 + 0.5 * 4 / 2.0);  // clamped at the floor
}

TEST(Mismatch, Recursion) {
  EXPECT_NEAR(mismatch_update(5, 3, 0.0), 7.0 / 18.0, 1e-15);
  EXPECT_DOUBLE_EQ(mismatch_update(40, 40, 1.0), 1.0);  // fixed point at D = O
  EXPECT_DOUBLE_EQ(mismatch_update(40, 40, 0.2), 0.5 + 0.1);
}

TEST(Env, ZeroSpreadIntensities) {
  EnvConfig c;
  c.mu_sd = 0;
  for (double m : Environment::draw_mu(c)) EXPECT_EQ(m, 100.0);
}

TEST(Env, InitialState) {
  EnvConfig c;
  c.seed = 9;
  Environment env(c);
  const auto s = env.state();
  ASSERT_EQ(s.rows(), 25);
  ASSERT_EQ(s.cols(), 3);
  for (Eigen::Index i = 0; i < 25; ++i) {
    EXPECT_EQ(s(i, 0), 80.0);
    EXPECT_EQ(s(i, 1), std::round(s(i, 1)));
    EXPECT_DOUBLE_EQ(s(i, 2), mismatch_update(80.0, s(i, 1), 0.5));
  }
  Environment again(c);
  EXPECT_EQ(again.state(), s);
  for (double m : env.mu()) EXPECT_GE(m, 1.0);
}

TEST(Env, RejectsInvalidConfig) {
  EnvConfig c;
  c.sigma_r = -1;
  EXPECT_THROW(Environment{c}, ConfigError);
  c = {};
  c.driver_floor = 0;
  EXPECT_THROW(Environment{c}, ConfigError);
  Environment env(EnvConfig{});
  EXPECT_THROW(env.step(ActionVector(25, 2)), ConfigError);
  EXPECT_THROW(env.step(ActionVector(3, 0)), ConfigError);
}

TEST(Env, LiteralUpdateWithEqualAttractionDividesByDegree) {
  EnvConfig c;
  c.driver_update = DriverUpdate::as_written;
  c.poisson_orders = false;
  c.mu_sd = 0;
  c.init_drivers = 100;  // O = D, so every nu equals 2 under a = 0
  Environment env(c);
  const auto next = env.step(ActionVector(25, 0)).state;
  const auto g = c.graph();
  for (std::size_t i = 0; i < 25; ++i)
    EXPECT_NEAR(next(static_cast<Eigen::Index>(i), 0), 100.0 / static_cast<double>(g.degree(i)), 1e-12);
}

TEST(Env, RedistributionConservesDrivers) {
  EnvConfig c;
  c.seed = 4;
  Environment env(c);
  Rng rng(1);
  const auto behavior = Policy::behavior_bernoulli(0.5);
  for (int t = 0; t < 50; ++t) {
    const auto s = env.step(behavior.act(env.state(), rng)).state;
    EXPECT_NEAR(s.col(0).sum(), 25 * 80.0, 1e-8);
  }
}

TEST(Env, PositivityAndMismatchRange) {
  for (auto update : {DriverUpdate::redistribute, DriverUpdate::as_written}) {
    EnvConfig c;
    c.seed = 12;
    c.driver_update = update;
    Environment env(c);
    const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), 200);
    for (const auto& s : traj.states) {
      EXPECT_TRUE((s.col(0).array() > 0).all());
      EXPECT_TRUE((s.col(2).array() > 0).all());
      EXPECT_TRUE((s.col(2).array() <= 1).all());
    }
  }
}

TEST(Env, NoiselessRewardIsFunctionOfNextState) {
  EnvConfig c;
  c.sigma_r = 0;
  c.seed = 2;
  Environment env(c);
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), 30);
  for (std::size_t t = 0; t < 30; ++t) {
    const auto& s = traj.states[t + 1];
    for (Eigen::Index i = 0; i < 25; ++i)
      EXPECT_DOUBLE_EQ(traj.rewards(i, static_cast<Eigen::Index>(t)), s(i, 2) * std::min(s(i, 0), s(i, 1)));
  }
}

TEST(Env, DriverCapSignalsOverflow) {
  EnvConfig c;
  c.driver_cap = 81;
  c.seed = 1;
  Environment env(c);
  ActionVector a(25, 0);
  a[12] = 1;
  EXPECT_THROW(env.step(a), NumericError);
}

TEST(Env, TimeOfDay) {
  EnvConfig c;
  c.include_time_of_day = true;
  Environment env(c);
  EXPECT_EQ(env.state().cols(), 4);
  for (int t = 0; t < 50; ++t) env.step(ActionVector(25, 0));
  EXPECT_EQ(env.state()(0, 3), 50 % 48);
}

TEST(Rollout, Lengths) {
  Environment env(EnvConfig{});
  const auto one = rollout(env, Policy::behavior_bernoulli(0.5), 1);
  EXPECT_EQ(one.states.size(), 2u);
  EXPECT_EQ(one.actions.size(), 1u);
  EXPECT_EQ(one.rewards.cols(), 1);
  Environment env2(EnvConfig{});
  const auto full = rollout(env2, Policy::behavior_bernoulli(0.5), 336);
  EXPECT_EQ(full.rewards.size(), 8400);
  EXPECT_THROW(rollout(env2, Policy::behavior_bernoulli(0.5), 0), ConfigError);
}

TEST(Rollout, Deterministic) {
  EnvConfig c;
  c.seed = 77;
  Environment a(c), b(c);
  const auto ta = rollout(a, Policy::behavior_bernoulli(0.5), 40);
  const auto tb = rollout(b, Policy::behavior_bernoulli(0.5), 40);
  EXPECT_EQ(ta.actions, tb.actions);
  EXPECT_EQ(ta.rewards, tb.rewards);
  for (std::size_t t = 0; t <= 40; ++t) EXPECT_EQ(ta.states[t], tb.states[t]);
}

TEST(Rollout, BehaviorTreatmentFrequency) {
  EnvConfig c;
  c.rows = 1;
  c.cols = 2;
  Environment env(c);
  const std::size_t T = 10000;
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), T);
  for (std::size_t i = 0; i < 2; ++i) {
    double f = 0;
    for (const auto& a : traj.actions) f += a[i];
    f /= T;
    EXPECT_LT(std::abs(f - 0.5), 3 * 0.5 / std::sqrt(static_cast<double>(T)));
  }
}

TEST(TopK, Ranking) {
  const std::vector<double> mu = {3, 1, 2};
  EXPECT_EQ(Policy::top_k(mu, 2).assignment(), (ActionVector{1, 0, 1}));
  EXPECT_EQ(Policy::top_k(mu, 0).assignment(), (ActionVector{0, 0, 0}));
  EXPECT_EQ(Policy::top_k(mu, 3).assignment(), (ActionVector{1, 1, 1}));
  const std::vector<double> tie = {2, 2, 1};
  EXPECT_EQ(Policy::top_k(tie, 1).assignment(), (ActionVector{1, 0, 0}));
  EXPECT_THROW(Policy::top_k(mu, 4), ConfigError);
  EXPECT_TRUE(Policy::top_k(mu, 1).state_agnostic());
}

TEST(TopK, TieBreakAgreesWithEnumeration) {
  // Among all K-subsets with maximal mu-sum, the chosen one is lexicographically first.
  const std::vector<double> mu = {5, 3, 5, 3, 1, 3};
  for (std::size_t k = 0; k <= mu.size(); ++k) {
    ActionVector best;
    double best_sum = -1;
    for (unsigned mask = 0; mask < 64; ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
      ActionVector a(6);
      double sum = 0;
      for (int i = 0; i < 6; ++i) {
        a[i] = (mask >> i) & 1;
        sum += a[i] * mu[i];
      }
      if (sum > best_sum + 1e-12 || (std::abs(sum - best_sum) < 1e-12 && a > best)) {
        best_sum = sum;
        best = a;
      }
    }
    EXPECT_EQ(Policy::top_k(mu, k).assignment(), best) << "K=" << k;
  }
}

TEST(Policy, Actions) {
  Environment env(EnvConfig{});
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), 5);
  EXPECT_THROW(policy_actions(Policy::behavior_bernoulli(0.5), traj), ConfigError);
  const auto fixed = policy_actions(Policy::fixed(ActionVector(25, 1)), traj);
  EXPECT_EQ(fixed.size(), 6u);
  const auto custom = Policy::custom([](const GlobalState& s) {
    ActionVector a(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) a[static_cast<std::size_t>(i)] = s(i, 1) > 100 ? 1 : 0;
    return a;
  });
  const auto acts = policy_actions(custom, traj);
  for (std::size_t t = 0; t < acts.size(); ++t)
    for (Eigen::Index i = 0; i < 25; ++i) EXPECT_EQ(acts[t][i], traj.states[t](i, 1) > 100 ? 1 : 0);
}

TEST(TrajectoryIo, CsvLayout) {
  EnvConfig c;
  c.rows = 1;
  c.cols = 2;
  Environment env(c);
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), 3);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,unit,D,O,M,action,reward");
  int rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 8);  // (T + 1) * N
  EXPECT_EQ(last.substr(0, 4), "3,1,");
  EXPECT_EQ(last.substr(last.size() - 2), ",,");
}

TEST(TrajectoryIo, BinaryRoundTrip) {
  EnvConfig c;
  c.rows = 2;
  c.cols = 3;
  c.include_self = true;
  c.include_time_of_day = true;
  c.seed = 5;
  Environment env(c);
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), 20);
  std::stringstream ss;
  write_trajectory_binary(ss, traj);
  const auto back = read_trajectory_binary(ss);
  EXPECT_EQ(back.actions, traj.actions);
  EXPECT_EQ(back.rewards, traj.rewards);
  for (std::size_t t = 0; t < traj.states.size(); ++t) EXPECT_EQ(back.states[t], traj.states[t]);
  EXPECT_EQ(back.graph.adjacency(), traj.graph.adjacency());
  EXPECT_EQ(nlohmann::json(back.config), nlohmann::json(traj.config));

  std::stringstream bad("NOTMAGIC....");
  EXPECT_THROW(read_trajectory_binary(bad), ConfigError);
}

TEST(EnvConfig, JsonRoundTrip) {
  EnvConfig c;
  c.rows = 3;
  c.driver_update = DriverUpdate::as_written;
  c.adjacency = grid_adjacency(3, 5, false);
  const nlohmann::json j = c;
  const auto back = env_config_from_json(j);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW(env_config_from_json(nlohmann::json{{"mu_sd", -1}}), ConfigError);
}
