#include "maxplore/envs.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace maxplore;

TEST(ChainEnv, ResetStartsAtStateOne) {
  ChainEnv env(ChainConfig{50, false}, 7);
  EXPECT_EQ(env.state(), 1);
  env.step(1);
  EXPECT_NE(env.reset(), 0);
  EXPECT_EQ(env.state(), 1);
  EXPECT_EQ(env.steps_in_episode(), 0);
}

TEST(ChainEnv, SwapMaskIsPerSeedNotPerEpisode) {
  ChainEnv a(ChainConfig{30, false}, 99);
  ChainEnv b(ChainConfig{30, false}, 99);
  EXPECT_EQ(a.swap_mask(), b.swap_mask());
  const auto mask = a.swap_mask();
  a.reset();
  for (int i = 0; i < 5; ++i) a.step(1);
  a.reset();
  EXPECT_EQ(a.swap_mask(), mask);

  ChainEnv c(ChainConfig{30, false}, 100);
  EXPECT_NE(c.swap_mask(), mask);  // overwhelmingly likely for L=30
}

TEST(ChainEnv, SwapMaskCoversAboutHalfTheStates) {
  double fraction_sum = 0.0;
  const int n_seeds = 400;
  const int L = 50;
  for (int seed = 0; seed < n_seeds; ++seed) {
    ChainEnv env(ChainConfig{L, false}, static_cast<std::uint64_t>(seed));
    int swapped = 0;
    for (auto m : env.swap_mask()) swapped += m != 0;
    fraction_sum += static_cast<double>(swapped) / L;
  }
  EXPECT_NEAR(fraction_sum / n_seeds, 0.5, 0.05);
}

TEST(ChainEnv, StayInPlaceAtEnds) {
  ChainConfig cfg{10, false};
  ChainEnv env(cfg, 3);
  // walk using the mask so the intended direction is known
  const auto& mask = env.swap_mask();
  auto toward = [&](int s, bool right) {
    return mask[static_cast<std::size_t>(s)] ? (right ? 0 : 1) : (right ? 1 : 0);
  };
  env.reset();
  while (env.state() < 9 && !env.done()) env.step(toward(env.state(), true));
  ASSERT_EQ(env.state(), 9);
  const auto res = env.step(toward(9, true));
  EXPECT_EQ(res.next, 9);  // moving past the end stays in place
  EXPECT_DOUBLE_EQ(res.reward, 1.0);
}

TEST(ChainEnv, EdgeRewards) {
  ChainEnv env(ChainConfig{10, false}, 3);
  const auto& mask = env.swap_mask();
  auto toward = [&](int s, bool right) {
    return mask[static_cast<std::size_t>(s)] ? (right ? 0 : 1) : (right ? 1 : 0);
  };
  env.reset();
  const auto left = env.step(toward(1, false));
  EXPECT_EQ(left.next, 0);
  EXPECT_DOUBLE_EQ(left.reward, 0.001);
  const auto mid = env.step(toward(0, true));
  EXPECT_EQ(mid.next, 1);
  EXPECT_DOUBLE_EQ(mid.reward, 0.0);
}

TEST(ChainEnv, EpisodeLastsLengthPlusNineSteps) {
  ChainEnv env(ChainConfig{12, false}, 5);
  env.reset();
  int steps = 0;
  while (!env.done()) {
    const auto res = env.step(steps % 2);
    ++steps;
    EXPECT_EQ(res.done, env.done());
  }
  EXPECT_EQ(steps, 12 + 9);
  EXPECT_THROW(env.step(0), StateError);
}

TEST(ChainEnv, ActionValidation) {
  ChainEnv env(ChainConfig{10, false}, 5);
  EXPECT_THROW(env.step(2), ValidationError);
  EXPECT_THROW(env.step(-1), ValidationError);
}

TEST(TrapChain, TrapRowSplitsEvenly) {
  ChainEnv env(ChainConfig{10, true}, 11);
  const auto table = env.transition_table();
  for (int a = 0; a < 2; ++a) {
    EXPECT_DOUBLE_EQ(table.row(0, a).probs[0], 0.5);
    EXPECT_DOUBLE_EQ(table.row(0, a).probs[1], 0.5);
  }
}

TEST(TrapChain, EmpiricalTrapFrequency) {
  // Count where trap-state steps land over many episodes.
  int to_one = 0;
  int samples = 0;
  Rng rng(5);
  ChainEnv env(ChainConfig{6, true}, 123);
  env.reset();
  while (samples < 10000) {
    if (env.done()) env.reset();
    const int s = env.state();
    const auto res = env.step(rng.uniform_int(2));
    if (s == 0) {
      ++samples;
      if (res.next == 1) ++to_one;
    }
  }
  EXPECT_NEAR(static_cast<double>(to_one) / samples, 0.5, 0.02);
}

TEST(TransitionTable, ExactShapeAndPointMasses) {
  ChainEnv env(ChainConfig{10, false}, 17);
  const auto table = env.transition_table();
  EXPECT_EQ(table.size(), 20u);  // 2 actions x 10 states
  for (int s = 0; s < 10; ++s) {
    for (int a = 0; a < 2; ++a) {
      const auto& row = table.row(s, a);
      row.validate();
      double mx = 0.0;
      for (double p : row.probs) mx = std::max(mx, p);
      EXPECT_DOUBLE_EQ(mx, 1.0);  // deterministic chain rows are point masses
    }
  }
}

TEST(TransitionTable, MatchesSampledDynamics) {
  ChainEnv env(ChainConfig{25, false}, 31);
  const auto table = env.transition_table();
  env.reset();
  Rng rng(5);
  while (!env.done()) {
    const int s = env.state();
    const int a = rng.uniform_int(2);
    const auto res = env.step(a);
    EXPECT_DOUBLE_EQ(table.row(s, a).probs[static_cast<std::size_t>(res.next)], 1.0);
  }
}

TEST(ExploredFraction, CountsDistinctPairs) {
  ChainEnv env(ChainConfig{50, false}, 3);
  const auto table = env.transition_table();
  DiscreteHistory empty;
  EXPECT_DOUBLE_EQ(explored_fraction(table, empty), 0.0);

  DiscreteHistory all;
  for (int s = 0; s < 50; ++s)
    for (int a = 0; a < 2; ++a) all.push({s, a, s});
  EXPECT_DOUBLE_EQ(explored_fraction(table, all), 1.0);

  DiscreteHistory forty;
  for (int s = 0; s < 20; ++s)
    for (int a = 0; a < 2; ++a) {
      forty.push({s, a, s});
      forty.push({s, a, s});  // duplicates do not count twice
    }
  EXPECT_DOUBLE_EQ(explored_fraction(table, forty), 0.4);
}

TEST(MountainCar, ResetDrawsStartWithZeroVelocity) {
  MountainCarEnv env(MountainCarConfig{0.0, 200}, 77);
  for (int i = 0; i < 20; ++i) {
    const auto obs = env.reset();
    EXPECT_GE(obs[0], -0.6);
    EXPECT_LE(obs[0], -0.4);
    EXPECT_DOUBLE_EQ(obs[1], 0.0);
  }
}

TEST(MountainCar, NoiselessObservationEqualsTrueState) {
  MountainCarEnv env(MountainCarConfig{0.0, 200}, 7);
  env.reset();
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto res = env.step(rng.uniform(-1, 1));
    EXPECT_DOUBLE_EQ(res.obs[0], env.true_state()[0]);
    EXPECT_DOUBLE_EQ(res.obs[1], env.true_state()[1]);
  }
}

TEST(MountainCar, TrueStateAlwaysInBoundsDespiteNoise) {
  MountainCarEnv env(MountainCarConfig{0.05, 500}, 13);
  env.reset();
  Rng rng(21);
  double obs_noise_sq = 0.0;
  int n = 0;
  while (!env.done()) {
    const auto res = env.step(rng.uniform(-1, 1));
    const auto& s = env.true_state();
    EXPECT_GE(s[0], MountainCarEnv::kPosMin);
    EXPECT_LE(s[0], MountainCarEnv::kPosMax);
    EXPECT_GE(s[1], MountainCarEnv::kVelMin);
    EXPECT_LE(s[1], MountainCarEnv::kVelMax);
    // observation = noiseless state + gaussian noise, exactly
    obs_noise_sq += (res.obs[0] - s[0]) * (res.obs[0] - s[0]);
    obs_noise_sq += (res.obs[1] - s[1]) * (res.obs[1] - s[1]);
    n += 2;
  }
  const double noise_std = std::sqrt(obs_noise_sq / n);
  EXPECT_NEAR(noise_std, 0.05, 0.01);
}

TEST(MountainCar, LeftWallZeroesVelocity) {
  MountainCarEnv env(MountainCarConfig{0.0, 5000}, 3);
  env.reset();
  bool hit_wall = false;
  while (!env.done()) {
    // pump energy along the motion, brake before escaping to the right; the
    // underpowered car cannot reach the wall with constant thrust
    const double p = env.true_state()[0];
    const double v = env.true_state()[1];
    env.step(v <= 0.0 ? -1.0 : (p > 0.2 ? -1.0 : 1.0));
    if (env.true_state()[0] <= MountainCarEnv::kPosMin) {
      hit_wall = true;
      EXPECT_DOUBLE_EQ(env.true_state()[1], 0.0);
      break;
    }
  }
  EXPECT_TRUE(hit_wall);
}

TEST(MountainCar, PureExplorationRewardIsZeroAndHorizonEnds) {
  MountainCarEnv env(MountainCarConfig{0.0, 50}, 3);
  env.reset();
  int steps = 0;
  while (!env.done()) {
    const auto res = env.step(1.0);
    EXPECT_DOUBLE_EQ(res.reward, 0.0);
    ++steps;
  }
  EXPECT_EQ(steps, 50);
  EXPECT_THROW(env.step(0.0), StateError);
}

TEST(MountainCar, DeterministicGivenSeed) {
  MountainCarEnv a(MountainCarConfig{0.02, 100}, 42);
  MountainCarEnv b(MountainCarConfig{0.02, 100}, 42);
  a.reset();
  b.reset();
  for (int i = 0; i < 100; ++i) {
    const auto ra = a.step(0.3);
    const auto rb = b.step(0.3);
    EXPECT_EQ(ra.obs[0], rb.obs[0]);
    EXPECT_EQ(ra.obs[1], rb.obs[1]);
  }
}
