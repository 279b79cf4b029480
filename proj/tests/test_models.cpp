#include "maxplore/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "maxplore/divergence.hpp"
#include "maxplore/envs.hpp"

using namespace maxplore;

namespace {

// One deterministic observation per (s, a) pair of a chain, repeated `reps`
// times.
DiscreteHistory full_table_history(const ChainEnv& env, int reps = 1) {
  const auto table = env.transition_table();
  DiscreteHistory hist;
  for (int r = 0; r < reps; ++r) {
    for (int s = 0; s < env.length(); ++s) {
      for (int a = 0; a < 2; ++a) {
        int nxt = 0;
        for (int k = 0; k < env.length(); ++k)
          if (table.row(s, a).probs[static_cast<std::size_t>(k)] > 0.5) nxt = k;
        hist.push({s, a, nxt});
      }
    }
  }
  return hist;
}

EnsembleTrainConfig chain_train(int iterations, double lr = 3e-3) {
  EnsembleTrainConfig tc;
  tc.iterations = iterations;
  tc.batch_size = 64;
  tc.opt.learning_rate = lr;
  tc.opt.weight_decay = 1e-6;
  return tc;
}

}  // namespace

TEST(DiscreteEnsemble, UntrainedPredictIsAStateError) {
  auto ens = DiscreteEnsemble::mlp(5, 2, 3, {8}, 1);
  EXPECT_THROW(ens.predict_all(0, 0), StateError);
  Rng rng(1);
  EXPECT_THROW(ens.sample_next(0, 0, 0, rng), StateError);
  ens.mark_trained();
  EXPECT_EQ(ens.predict_all(0, 0).size(), 3u);
}

TEST(DiscreteEnsemble, IdenticalMembersGiveIdenticalPredictions) {
  auto ens = DiscreteEnsemble::mlp(6, 2, 4, {8}, 7);
  for (auto& net : ens.nets()) net.zero_params();
  ens.mark_trained();
  const auto dists = ens.predict_all(2, 1);
  ASSERT_EQ(dists.size(), 4u);
  for (const auto& d : dists) {
    for (double p : d.probs) EXPECT_NEAR(p, 1.0 / 6.0, 1e-12);
  }
  EXPECT_NEAR(jsd_categorical(dists), 0.0, 1e-12);
}

TEST(DiscreteEnsemble, TabularConvergesOnDeterministicTransition) {
  auto ens = DiscreteEnsemble::tabular(50, 2, 3, 1e-3);
  DiscreteHistory hist;
  for (int i = 0; i < 10; ++i) hist.push({4, 1, 5});
  ens.train(hist, EnsembleTrainConfig{});
  for (const auto& d : ens.predict_all(4, 1)) EXPECT_GE(d.probs[5], 0.99);
}

TEST(DiscreteEnsemble, TabularMatchesEmpiricalFrequencies) {
  auto ens = DiscreteEnsemble::tabular(4, 2, 1, 1e-3);
  DiscreteHistory hist;
  for (int i = 0; i < 750; ++i) hist.push({0, 0, 1});
  for (int i = 0; i < 250; ++i) hist.push({0, 0, 2});
  ens.train(hist, EnsembleTrainConfig{});
  const auto d = ens.predict_all(0, 0)[0];
  EXPECT_NEAR(d.probs[1], 0.75, 1e-3);  // laplace vanishes as counts grow
  EXPECT_NEAR(d.probs[2], 0.25, 1e-3);
}

TEST(DiscreteEnsemble, TrainedArgmaxMatchesChainTable) {
  ChainEnv env(ChainConfig{10, false}, 4242);
  const auto table = env.transition_table();
  const auto hist = full_table_history(env);
  auto ens = DiscreteEnsemble::mlp(10, 2, 3, {64, 64}, 99);
  ens.train(hist, chain_train(150));
  for (int s = 0; s < 10; ++s) {
    for (int a = 0; a < 2; ++a) {
      int truth = 0;
      for (int k = 0; k < 10; ++k)
        if (table.row(s, a).probs[static_cast<std::size_t>(k)] > 0.5) truth = k;
      for (const auto& d : ens.predict_all(s, a)) {
        int am = 0;
        for (int k = 1; k < 10; ++k)
          if (d.probs[static_cast<std::size_t>(k)] > d.probs[static_cast<std::size_t>(am)]) am = k;
        EXPECT_EQ(am, truth) << "s=" << s << " a=" << a;
      }
    }
  }
}

TEST(DiscreteEnsemble, MembersDisagreeOffDataAndAgreeOnData) {
  // Visited: both actions for states 0..4 of an L=10 chain; unvisited: the
  // rest. Members share the data but start from different seeds.
  ChainEnv env(ChainConfig{10, false}, 31);
  const auto table = env.transition_table();
  DiscreteHistory hist;
  for (int rep = 0; rep < 8; ++rep) {
    for (int s = 0; s < 5; ++s) {
      for (int a = 0; a < 2; ++a) {
        int nxt = 0;
        for (int k = 0; k < 10; ++k)
          if (table.row(s, a).probs[static_cast<std::size_t>(k)] > 0.5) nxt = k;
        hist.push({s, a, nxt});
      }
    }
  }
  auto ens = DiscreteEnsemble::mlp(10, 2, 3, {64, 64, 64, 64}, 5);
  ens.train(hist, chain_train(200));

  // non-zero parameter distance between members
  const auto& nets = ens.nets();
  double dist = 0.0;
  for (std::size_t i = 0; i < nets[0].params().size(); ++i) {
    const double d = nets[0].params()[i] - nets[1].params()[i];
    dist += d * d;
  }
  EXPECT_GT(std::sqrt(dist), 1e-3);

  std::vector<double> visited_jsd, unvisited_jsd;
  for (int s = 0; s < 10; ++s)
    for (int a = 0; a < 2; ++a)
      (s < 5 ? visited_jsd : unvisited_jsd).push_back(jsd_categorical(ens.predict_all(s, a)));
  std::sort(unvisited_jsd.begin(), unvisited_jsd.end());
  const double median_unvisited = unvisited_jsd[unvisited_jsd.size() / 2];
  double mean_unvisited = 0.0;
  for (double u : unvisited_jsd) mean_unvisited += u;
  mean_unvisited /= static_cast<double>(unvisited_jsd.size());
  for (double v : visited_jsd) {
    EXPECT_LT(v, median_unvisited);
    EXPECT_LT(v, mean_unvisited);
  }
}

TEST(DiscreteEnsemble, EmptyHistoryRejected) {
  auto ens = DiscreteEnsemble::mlp(4, 2, 2, {8}, 3);
  DiscreteHistory empty;
  EXPECT_THROW(ens.train(empty, EnsembleTrainConfig{}), ValidationError);
}

TEST(DiscreteEnsemble, SampleSequencesAreSeedReproducible) {
  auto ens = DiscreteEnsemble::tabular(6, 2, 2, 1e-3);
  DiscreteHistory hist;
  for (int i = 0; i < 50; ++i) hist.push({i % 6, i % 2, (i + 1) % 6});
  ens.train(hist, EnsembleTrainConfig{});
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i)
    EXPECT_EQ(ens.sample_next(2, 1, i % 2, a), ens.sample_next(2, 1, i % 2, b));
  EXPECT_THROW(ens.sample_next(2, 1, 5, a), ValidationError);
}

TEST(DiscreteEnsemble, DeterministicMemberAlwaysSamplesItsPointMass) {
  auto ens = DiscreteEnsemble::tabular(8, 2, 1, 0.0);
  DiscreteHistory hist;
  for (int i = 0; i < 5; ++i) hist.push({3, 0, 6});
  ens.train(hist, EnsembleTrainConfig{});
  Rng rng(9);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(ens.sample_next(3, 0, 0, rng), 6);
}

TEST(DiscreteEnsemble, CheckpointRoundTrip) {
  ChainEnv env(ChainConfig{6, false}, 1);
  auto ens = DiscreteEnsemble::mlp(6, 2, 2, {16}, 77);
  ens.train(full_table_history(env), chain_train(30));
  std::stringstream buf;
  ens.save(buf);
  auto loaded = DiscreteEnsemble::load(buf);
  EXPECT_EQ(loaded.size(), 2);
  for (int s = 0; s < 6; ++s)
    for (int a = 0; a < 2; ++a) {
      const auto d0 = ens.predict_all(s, a);
      const auto d1 = loaded.predict_all(s, a);
      for (std::size_t m = 0; m < d0.size(); ++m)
        for (std::size_t k = 0; k < d0[m].probs.size(); ++k)
          EXPECT_EQ(d0[m].probs[k], d1[m].probs[k]);
    }
}

// ---- Continuous mode -------------------------------------------------------

namespace {

ContinuousHistory line_history(int n, double slope, Rng& rng, double noise = 0.0) {
  // 1-d dynamics s' = s + slope * a (+ noise), states spread over [-1, 1]
  ContinuousHistory h;
  for (int i = 0; i < n; ++i) {
    ContinuousTransition t;
    t.s = {rng.uniform(-1, 1)};
    t.a = {rng.uniform(-1, 1)};
    t.s_next = {t.s[0] + slope * t.a[0] + (noise > 0 ? rng.normal(0.0, noise) : 0.0)};
    h.push(std::move(t));
  }
  return h;
}

}  // namespace

TEST(NormStats, RoundTripIsExactWithinTolerance) {
  Rng rng(3);
  ContinuousHistory h = line_history(200, 0.5, rng);
  const NormStats st = h.compute_stats(1, 1);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> s{rng.uniform(-3, 3)};
    const auto round = st.denormalize_state(st.normalize_state(s));
    EXPECT_NEAR(round[0], s[0], 1e-10);
  }
}

TEST(NormStats, ComputedFromExactlyTheStoredTransitions) {
  ContinuousHistory h;
  h.push({{1.0}, {0.0}, {2.0}});
  h.push({{3.0}, {2.0}, {2.0}});
  const NormStats st = h.compute_stats(1, 1);
  EXPECT_DOUBLE_EQ(st.state_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(st.state_std[0], 1.0);
  EXPECT_DOUBLE_EQ(st.action_mean[0], 1.0);
  EXPECT_DOUBLE_EQ(st.delta_mean[0], 0.0);
  EXPECT_DOUBLE_EQ(st.delta_std[0], 1.0);
  // std floor applies to constant components
  ContinuousHistory flat;
  flat.push({{1.0}, {0.5}, {1.0}});
  flat.push({{1.0}, {0.5}, {1.0}});
  const NormStats st2 = flat.compute_stats(1, 1);
  EXPECT_DOUBLE_EQ(st2.state_std[0], 1e-6);
}

TEST(GaussianEnsemble, ZeroInitMeansEqualQueryStatePlusMeanDelta) {
  auto ens = GaussianEnsemble::mlp(2, 1, 3, {8}, 11);
  for (auto& net : ens.nets()) net.zero_params();
  NormStats st = NormStats::identity(2, 1);
  st.delta_mean = {0.25, -0.5};
  st.delta_std = {2.0, 0.5};
  ens.set_stats(st);
  ens.mark_trained();
  const std::vector<double> s{1.0, -1.0};
  const auto preds = ens.predict_all(s, std::vector<double>{0.3});
  for (const auto& g : preds) {
    EXPECT_DOUBLE_EQ(g.mean[0], 1.25);   // s + de-normalized zero delta
    EXPECT_DOUBLE_EQ(g.mean[1], -1.5);
    EXPECT_DOUBLE_EQ(g.var[0], 4.0);     // delta_std^2 * var_hi(=1)
    EXPECT_DOUBLE_EQ(g.var[1], 0.25);
  }
}

TEST(GaussianEnsemble, TightVarianceSamplesStayNearMean) {
  // clamp forces var to the lower bound 1e-8 (sigma = 1e-4)
  auto ens = GaussianEnsemble::mlp(1, 1, 1, {4}, 5, Activation::swish, std::log(1e-8),
                                   std::log(1e-8));
  for (auto& net : ens.nets()) net.zero_params();
  ens.mark_trained();
  Rng rng(21);
  const std::vector<double> s{0.4};
  for (int i = 0; i < 1000; ++i) {
    const auto next = ens.sample_next(s, std::vector<double>{0.0}, 0, rng);
    EXPECT_NEAR(next[0], 0.4, 1e-3);  // 10 sigma; 3 sigma would be 3e-4
  }
}

TEST(GaussianEnsemble, LearnsLinearDynamics) {
  Rng rng(17);
  ContinuousHistory h = line_history(300, 0.5, rng, 0.01);
  auto ens = GaussianEnsemble::mlp(1, 1, 4, {24, 24}, 3);
  EnsembleTrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 64;
  tc.opt.learning_rate = 3e-3;
  ens.train(h, tc);
  double worst = 0.0;
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> s{rng.uniform(-0.8, 0.8)};
    const std::vector<double> a{rng.uniform(-0.8, 0.8)};
    for (const auto& g : ens.predict_all(s, a))
      worst = std::max(worst, std::abs(g.mean[0] - (s[0] + 0.5 * a[0])));
  }
  EXPECT_LT(worst, 0.1);
}

TEST(GaussianEnsemble, ReinitializeRestoresDiversityAndDeterminism) {
  Rng rng(8);
  ContinuousHistory h = line_history(100, 0.3, rng);
  auto make = [&]() {
    auto e = GaussianEnsemble::mlp(1, 1, 2, {16}, 42);
    EnsembleTrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 32;
    e.train(h, tc);
    e.reinitialize(777);
    e.train(h, tc);
    return e.nets()[0].params();
  };
  const auto a = make();
  const auto b = make();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(GaussianEnsemble, CheckpointRoundTrip) {
  Rng rng(4);
  ContinuousHistory h = line_history(100, 0.7, rng);
  auto ens = GaussianEnsemble::mlp(1, 1, 3, {8}, 13);
  EnsembleTrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 32;
  ens.train(h, tc);
  std::stringstream buf;
  ens.save(buf);
  auto loaded = GaussianEnsemble::load(buf);
  const std::vector<double> s{0.2};
  const std::vector<double> a{-0.4};
  const auto p0 = ens.predict_all(s, a);
  const auto p1 = loaded.predict_all(s, a);
  ASSERT_EQ(p0.size(), p1.size());
  for (std::size_t m = 0; m < p0.size(); ++m) {
    EXPECT_EQ(p0[m].mean[0], p1[m].mean[0]);
    EXPECT_EQ(p0[m].var[0], p1[m].var[0]);
  }
}

TEST(GaussianEnsemble, VarianceUpperBoundMapsThroughDeltaStd) {
  auto ens = GaussianEnsemble::mlp(2, 1, 2, {4}, 9);
  NormStats st = NormStats::identity(2, 1);
  st.delta_std = {0.1, 3.0};
  ens.set_stats(st);
  const auto up = ens.variance_upper_denormalized();
  EXPECT_DOUBLE_EQ(up[0], 0.01);  // (0.1)^2 * e^{ln 1}
  EXPECT_DOUBLE_EQ(up[1], 9.0);
}
