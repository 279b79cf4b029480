#pragma once

// Evaluation environments: the randomized Chain (with per-state action swap
// and an optional stochastic trap at state 0) and a continuous Mountain Car
// with additive observation noise. Chain ground truth is exported as an exact
// transition table for exploration metrics and oracle bonuses.

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/divergence.hpp"
#include "maxplore/models.hpp"

namespace maxplore {

// Exact map (s, a) -> distribution over next states.
struct TransitionTable {
  int n_states = 0;
  int n_actions = 2;
  std::vector<CategoricalDist> rows;  // index s * n_actions + a

  const CategoricalDist& row(int s, int a) const {
    return rows[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::size_t size() const { return rows.size(); }
};

struct ChainConfig {
  int length = 50;
  bool trap = false;          // state 0 becomes a stochastic trap
  double reward_left = 0.001;
  double reward_right = 1.0;
};

// States 0..L-1, two actions (0 = left, 1 = right), start at state 1, episode
// of exactly L+9 steps. The action semantics are flipped at states selected
// by a Bernoulli(1/2) mask drawn once from the run seed. Moves past either
// end stay in place; the reward depends on the state occupied after the move.
class ChainEnv {
 public:
  static constexpr int kLeft = 0;
  static constexpr int kRight = 1;

  ChainEnv(ChainConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(Rng(seed).stream("env")) {
    if (cfg_.length < 2) throw ValidationError("ChainEnv: length must be >= 2");
    swap_mask_.resize(static_cast<std::size_t>(cfg_.length));
    Rng mask_rng = Rng(seed).stream("swap-mask");
    for (auto& m : swap_mask_) m = mask_rng.uniform() < 0.5 ? 1 : 0;
    reset();
  }

  int length() const { return cfg_.length; }
  int state_count() const { return cfg_.length; }
  int action_count() const { return 2; }
  int episode_length() const { return cfg_.length + 9; }
  const ChainConfig& config() const { return cfg_; }
  const std::vector<std::uint8_t>& swap_mask() const { return swap_mask_; }

  int state() const { return state_; }
  int steps_in_episode() const { return steps_; }
  std::uint64_t total_steps() const { return total_steps_; }
  bool done() const { return steps_ >= episode_length(); }

  int reset() {
    state_ = 1;
    steps_ = 0;
    return state_;
  }

  struct StepResult {
    int next = 0;
    double reward = 0.0;
    bool done = false;
  };

  StepResult step(int action) {
    if (action != kLeft && action != kRight)
      throw ValidationError("ChainEnv: action must be 0 or 1");
    if (done()) throw StateError("ChainEnv: step after episode end");
    state_ = sample_transition(state_, action, rng_);
    ++steps_;
    ++total_steps_;
    StepResult r;
    r.next = state_;
    r.reward = reward_of(state_);
    r.done = done();
    return r;
  }

  // Exact dynamics as a distribution; shared by step() and the table export.
  CategoricalDist transition_dist(int s, int action) const {
    CategoricalDist d;
    d.probs.assign(static_cast<std::size_t>(cfg_.length), 0.0);
    if (cfg_.trap && s == 0) {
      d.probs[0] = 0.5;
      d.probs[1] = 0.5;
      return d;
    }
    const bool swapped = swap_mask_[static_cast<std::size_t>(s)] != 0;
    const bool rightward = (action == kRight) != swapped;
    int next = s + (rightward ? 1 : -1);
    if (next < 0 || next >= cfg_.length) next = s;  // stay in place at the ends
    d.probs[static_cast<std::size_t>(next)] = 1.0;
    return d;
  }

  TransitionTable transition_table() const {
    TransitionTable t;
    t.n_states = cfg_.length;
    t.n_actions = 2;
    t.rows.reserve(static_cast<std::size_t>(cfg_.length) * 2);
    for (int s = 0; s < cfg_.length; ++s)
      for (int a = 0; a < 2; ++a) t.rows.push_back(transition_dist(s, a));
    return t;
  }

  double reward_of(int s) const {
    if (s == 0) return cfg_.reward_left;
    if (s == cfg_.length - 1) return cfg_.reward_right;
    return 0.0;
  }

 private:
  int sample_transition(int s, int action, Rng& rng) const {
    if (cfg_.trap && s == 0) return rng.uniform() < 0.5 ? 0 : 1;
    const bool swapped = swap_mask_[static_cast<std::size_t>(s)] != 0;
    const bool rightward = (action == kRight) != swapped;
    int next = s + (rightward ? 1 : -1);
    if (next < 0 || next >= cfg_.length) next = s;
    return next;
  }

  ChainConfig cfg_;
  Rng rng_;
  std::vector<std::uint8_t> swap_mask_;
  int state_ = 1;
  int steps_ = 0;
  std::uint64_t total_steps_ = 0;
};

struct MountainCarConfig {
  double noise_std = 0.02;       // observation noise, state units
  int episode_horizon = 200;
  bool noise_on_dynamics = false;  // perturb the true state instead of the observation
};

// Standard continuous mountain car: thrust 0.0015 * a, gravity term
// 0.0025 * cos(3 p). The true state evolves noiselessly (unless
// noise_on_dynamics); observations add independent Gaussian noise. The noise
// stream is never reset across episodes. Reward is always 0 in
// pure-exploration mode.
class MountainCarEnv {
 public:
  static constexpr double kPosMin = -1.2;
  static constexpr double kPosMax = 0.6;
  static constexpr double kVelMin = -0.07;
  static constexpr double kVelMax = 0.07;
  static constexpr double kActMin = -1.0;
  static constexpr double kActMax = 1.0;

  MountainCarEnv(MountainCarConfig cfg, std::uint64_t seed)
      : cfg_(cfg),
        start_rng_(Rng(seed).stream("start")),
        noise_rng_(Rng(seed).stream("noise")) {
    if (cfg_.noise_std < 0.0) throw ValidationError("MountainCarEnv: noise_std must be >= 0");
    if (cfg_.episode_horizon < 1)
      throw ValidationError("MountainCarEnv: episode horizon must be >= 1");
    reset();
  }

  int state_dim() const { return 2; }
  int action_dim() const { return 1; }
  int episode_length() const { return cfg_.episode_horizon; }
  const MountainCarConfig& config() const { return cfg_; }

  const std::array<double, 2>& true_state() const { return state_; }
  int steps_in_episode() const { return steps_; }
  std::uint64_t total_steps() const { return total_steps_; }
  bool done() const { return steps_ >= cfg_.episode_horizon; }

  std::vector<double> reset() {
    state_[0] = start_rng_.uniform(-0.6, -0.4);
    state_[1] = 0.0;
    steps_ = 0;
    return observe();
  }

  struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
  };

  StepResult step(double action) {
    if (done()) throw StateError("MountainCarEnv: step after episode end");
    const double a = std::min(std::max(action, kActMin), kActMax);
    double pos = state_[0];
    double vel = state_[1];
    vel += 0.0015 * a - 0.0025 * std::cos(3.0 * pos);
    vel = std::min(std::max(vel, kVelMin), kVelMax);
    pos += vel;
    if (pos < kPosMin) {
      pos = kPosMin;
      vel = 0.0;  // left wall kills velocity
    }
    if (pos > kPosMax) pos = kPosMax;
    state_[0] = pos;
    state_[1] = vel;
    if (cfg_.noise_on_dynamics && cfg_.noise_std > 0.0) {
      state_[0] += noise_rng_.normal(0.0, cfg_.noise_std);
      state_[1] += noise_rng_.normal(0.0, cfg_.noise_std);
      state_[0] = std::min(std::max(state_[0], kPosMin), kPosMax);
      state_[1] = std::min(std::max(state_[1], kVelMin), kVelMax);
    }
    ++steps_;
    ++total_steps_;
    StepResult r;
    r.obs = observe();
    r.reward = 0.0;
    r.done = done();
    return r;
  }

  std::vector<double> observe() {
    std::vector<double> obs = {state_[0], state_[1]};
    if (!cfg_.noise_on_dynamics && cfg_.noise_std > 0.0) {
      obs[0] += noise_rng_.normal(0.0, cfg_.noise_std);
      obs[1] += noise_rng_.normal(0.0, cfg_.noise_std);
    }
    return obs;
  }

 private:
  MountainCarConfig cfg_;
  Rng start_rng_;
  Rng noise_rng_;
  std::array<double, 2> state_ = {-0.5, 0.0};
  int steps_ = 0;
  std::uint64_t total_steps_ = 0;
};

// Fraction of distinct (s, a) pairs in the history over all 2L pairs.
inline double explored_fraction(const TransitionTable& table, const DiscreteHistory& d) {
  std::set<std::pair<int, int>> seen;
  for (const auto& t : d.transitions()) seen.insert({t.s, t.a});
  return static_cast<double>(seen.size()) /
         static_cast<double>(table.n_states * table.n_actions);
}

inline double explored_fraction(const TransitionTable& table,
                                const std::set<std::pair<int, int>>& visited) {
  return static_cast<double>(visited.size()) /
         static_cast<double>(table.n_states * table.n_actions);
}

}  // namespace maxplore
