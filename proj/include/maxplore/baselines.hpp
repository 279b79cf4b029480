#pragma once

// Reactive comparison agents for the chain: greedy Q-learning with an
// oracle first-visit exploration bonus (EB) and bootstrapped Q-heads with a
// shared replay (Boot). Epsilon-greedy is off in both; exploration relies on
// the add-on alone. Default value representation is tabular with optimistic
// random initialization; an MLP variant (one-hot / thermometer encoded
// states, huber loss, rmsprop with momentum) sits behind the repr flag.

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/envs.hpp"
#include "maxplore/models.hpp"
#include "maxplore/netcore.hpp"

namespace maxplore {

enum class QRepr { tabular, mlp };

struct QAgentConfig {
  QRepr repr = QRepr::tabular;
  double discount = 0.975;
  double tabular_lr = 0.2;
  double optimism_init = 0.01;  // tabular Q init drawn uniform from [0, this)
  int batch_size = 32;
  int target_sync_period = 256;  // training batches between target copies
  std::size_t replay_capacity = 256;
  // mlp variant
  std::vector<int> hidden = {64, 64, 64};
  OptimizerConfig opt{OptimizerKind::rmsprop_momentum, 1e-2, 0.0, 5.0};
};

// Pays the bonus exactly on the first visit of each (s, a, s') triple.
class BonusOracle {
 public:
  explicit BonusOracle(double bonus) : bonus_(bonus) {}

  double pay(int s, int a, int s_next) {
    return visited_.insert({s, a, s_next}).second ? bonus_ : 0.0;
  }

  double bonus() const { return bonus_; }
  std::size_t visited_count() const { return visited_.size(); }

 private:
  double bonus_;
  std::set<std::tuple<int, int, int>> visited_;
};

namespace detail {

// One Q function: tabular array or MLP over an encoded state.
class QFunction {
 public:
  QFunction(const QAgentConfig& cfg, int n_states, int n_actions, bool thermometer,
            std::uint64_t seed)
      : n_states_(n_states), n_actions_(n_actions), thermometer_(thermometer) {
    if (cfg.repr == QRepr::tabular) {
      Rng rng(seed);
      table_.resize(static_cast<std::size_t>(n_states) * n_actions);
      for (double& q : table_) q = rng.uniform(0.0, cfg.optimism_init);
    } else {
      MlpSpec spec;
      spec.input_dim = n_states;
      spec.hidden = cfg.hidden;
      spec.output_dim = n_actions;
      spec.activation = Activation::tanh_fn;
      spec.head = HeadKind::linear;
      net_.emplace(spec, seed);
      opt_.emplace(cfg.opt);
    }
  }

  bool tabular() const { return !net_.has_value(); }

  std::vector<double> values(int s) const {
    if (tabular()) {
      std::vector<double> q(static_cast<std::size_t>(n_actions_));
      for (int a = 0; a < n_actions_; ++a)
        q[static_cast<std::size_t>(a)] = table_[static_cast<std::size_t>(s) * n_actions_ + a];
      return q;
    }
    return net_->forward_linear(encode(s));
  }

  // Tabular TD update toward the given targets for the chosen actions.
  void update_tabular(const std::vector<DiscreteTransition>& batch,
                      const std::vector<double>& targets, double lr) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double& q = table_[static_cast<std::size_t>(batch[i].s) * n_actions_ + batch[i].a];
      q += lr * (targets[i] - q);
    }
  }

  // One optimizer step toward targets on the chosen actions only.
  void update_mlp(const std::vector<DiscreteTransition>& batch,
                  const std::vector<double>& targets) {
    std::vector<std::vector<double>> X(batch.size());
    std::vector<std::vector<double>> Y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      X[i] = encode(batch[i].s);
      Y[i] = net_->forward_linear(X[i]);
      Y[i][static_cast<std::size_t>(batch[i].a)] = targets[i];
    }
    net_->train_step(X, Y, LossKind::huber, *opt_);
  }

  std::vector<double> snapshot() const { return tabular() ? table_ : net_->params(); }
  void restore(const std::vector<double>& params) {
    if (tabular())
      table_ = params;
    else
      net_->params() = params;
  }

  std::vector<double> encode(int s) const {
    std::vector<double> x(static_cast<std::size_t>(n_states_), 0.0);
    if (thermometer_) {
      for (int i = 0; i <= s; ++i) x[static_cast<std::size_t>(i)] = 1.0;
    } else {
      x[static_cast<std::size_t>(s)] = 1.0;
    }
    return x;
  }

 private:
  int n_states_;
  int n_actions_;
  bool thermometer_;
  std::vector<double> table_;
  std::optional<Mlp> net_;
  std::optional<Optimizer> opt_;
};

}  // namespace detail

// Greedy Q-learning with an oracle first-visit bonus added to stored rewards
// and one training batch per environment step.
class EbAgent {
 public:
  EbAgent(const QAgentConfig& cfg, double bonus, int n_states, int n_actions, std::uint64_t seed)
      : cfg_(cfg), oracle_(bonus), rng_(Rng(seed).stream("eb-agent")),
        q_(cfg, n_states, n_actions, /*thermometer=*/false, Rng(seed).stream_seed("eb-q")),
        target_(q_), n_actions_(n_actions) {
    target_snapshot_ = q_.snapshot();
  }

  const BonusOracle& oracle() const { return oracle_; }
  std::span<const DiscreteTransition> replay() const { return replay_; }
  const std::vector<double>& target_snapshot() const { return target_snapshot_; }

  int greedy_action(int s) const {
    const auto q = q_.values(s);
    int best = 0;
    for (int a = 1; a < n_actions_; ++a)
      if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
    return best;
  }

  // Act greedily, store the bonus-augmented transition, train one batch.
  DiscreteTransition step(ChainEnv& env, bool random_action = false) {
    const int s = env.state();
    const int a = random_action ? rng_.uniform_int(n_actions_) : greedy_action(s);
    const auto res = env.step(a);
    const double stored = res.reward + oracle_.pay(s, a, res.next);
    push_replay({s, a, res.next}, stored);
    train_batch();
    return {s, a, res.next};
  }

 private:
  void push_replay(DiscreteTransition t, double reward) {
    replay_.push_back(t);
    rewards_.push_back(reward);
    if (replay_.size() > cfg_.replay_capacity) {
      replay_.erase(replay_.begin());
      rewards_.erase(rewards_.begin());
    }
  }

  void train_batch() {
    if (replay_.empty()) return;
    const std::size_t bs = std::min<std::size_t>(cfg_.batch_size, replay_.size());
    std::vector<DiscreteTransition> batch(bs);
    std::vector<double> targets(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      const auto j = static_cast<std::size_t>(rng_.uniform_int(static_cast<int>(replay_.size())));
      batch[i] = replay_[j];
      const auto tq = target_.values(replay_[j].s_next);
      double mx = tq[0];
      for (double v : tq) mx = std::max(mx, v);
      targets[i] = rewards_[j] + cfg_.discount * mx;
    }
    if (q_.tabular())
      q_.update_tabular(batch, targets, cfg_.tabular_lr);
    else
      q_.update_mlp(batch, targets);
    if (++updates_ % cfg_.target_sync_period == 0) {
      target_snapshot_ = q_.snapshot();
      target_.restore(target_snapshot_);
    }
  }

  QAgentConfig cfg_;
  BonusOracle oracle_;
  Rng rng_;
  detail::QFunction q_;
  detail::QFunction target_;
  std::vector<double> target_snapshot_;
  std::vector<DiscreteTransition> replay_;
  std::vector<double> rewards_;
  int n_actions_;
  std::uint64_t updates_ = 0;
};

// Bootstrapped Q-heads: one head drawn uniformly per episode drives the
// greedy policy; all heads train on the full shared replay after the episode.
// Tabular heads carry small fixed randomized-prior offsets for diversity.
class BootAgent {
 public:
  BootAgent(const QAgentConfig& cfg, int n_heads, int train_iters_per_episode, int n_states,
            int n_actions, std::uint64_t seed, double prior_scale = 0.05)
      : cfg_(cfg), rng_(Rng(seed).stream("boot-agent")), n_actions_(n_actions),
        train_iters_(train_iters_per_episode) {
    if (n_heads < 1) throw ValidationError("BootAgent: need at least one head");
    Rng root(seed);
    for (int k = 0; k < n_heads; ++k) {
      heads_.emplace_back(cfg, n_states, n_actions, /*thermometer=*/cfg.repr == QRepr::mlp,
                          root.stream_seed("boot-head", static_cast<std::uint64_t>(k)));
      targets_.emplace_back(heads_.back());
      Rng prior_rng = root.stream("boot-prior", static_cast<std::uint64_t>(k));
      std::vector<double> prior(static_cast<std::size_t>(n_states) * n_actions);
      for (double& p : prior) p = prior_rng.uniform(0.0, prior_scale);
      priors_.push_back(std::move(prior));
    }
  }

  int head_count() const { return static_cast<int>(heads_.size()); }
  int active_head() const { return active_head_; }
  std::span<const DiscreteTransition> replay() const { return replay_; }

  int greedy_action(int head, int s) const {
    const auto q = heads_[static_cast<std::size_t>(head)].values(s);
    int best = 0;
    for (int a = 1; a < n_actions_; ++a) {
      const double qa = q[static_cast<std::size_t>(a)] + prior(head, s, a);
      const double qb = q[static_cast<std::size_t>(best)] + prior(head, s, best);
      if (qa > qb) best = a;
    }
    return best;
  }

  // One full episode: sample a head at reset, act greedily w.r.t. it, then
  // train every head on the shared replay.
  DiscreteHistory run_episode(ChainEnv& env, bool random_actions = false) {
    env.reset();
    active_head_ = rng_.uniform_int(head_count());
    DiscreteHistory episode;
    while (!env.done()) {
      const int s = env.state();
      const int a = random_actions ? rng_.uniform_int(n_actions_) : greedy_action(active_head_, s);
      const auto res = env.step(a);
      replay_.push_back({s, a, res.next});
      replay_rewards_.push_back(res.reward);
      episode.push({s, a, res.next});
    }
    train_all_heads();
    return episode;
  }

 private:
  double prior(int head, int s, int a) const {
    if (cfg_.repr != QRepr::tabular) return 0.0;
    return priors_[static_cast<std::size_t>(head)]
                  [static_cast<std::size_t>(s) * n_actions_ + a];
  }

  void train_all_heads() {
    if (replay_.empty()) return;
    const std::size_t bs = std::min<std::size_t>(cfg_.batch_size, replay_.size());
    for (int k = 0; k < head_count(); ++k) {
      auto& head = heads_[static_cast<std::size_t>(k)];
      auto& target = targets_[static_cast<std::size_t>(k)];
      for (int it = 0; it < train_iters_; ++it) {
        std::vector<DiscreteTransition> batch(bs);
        std::vector<double> tvals(bs);
        for (std::size_t i = 0; i < bs; ++i) {
          const auto j =
              static_cast<std::size_t>(rng_.uniform_int(static_cast<int>(replay_.size())));
          batch[i] = replay_[j];
          const auto tq = target.values(replay_[j].s_next);
          double mx = tq[0];
          for (double v : tq) mx = std::max(mx, v);
          tvals[i] = replay_rewards_[j] + cfg_.discount * mx;
        }
        if (head.tabular())
          head.update_tabular(batch, tvals, cfg_.tabular_lr);
        else
          head.update_mlp(batch, tvals);
        if (++update_counts_ % cfg_.target_sync_period == 0) target.restore(head.snapshot());
      }
    }
  }

  QAgentConfig cfg_;
  Rng rng_;
  std::vector<detail::QFunction> heads_;
  std::vector<detail::QFunction> targets_;
  std::vector<std::vector<double>> priors_;
  std::vector<DiscreteTransition> replay_;
  std::vector<double> replay_rewards_;
  int n_actions_;
  int train_iters_;
  int active_head_ = 0;
  std::uint64_t update_counts_ = 0;
};

}  // namespace maxplore
