#pragma once

// Plan search inside the exploration MDP. Both planners are templates over
// the MDP interface, never touch the external environment, and break exact
// value ties toward the lowest action index / first-sampled candidate.
//
// mcts_search:   open-loop tree (nodes keyed by action prefix), Thompson
//                sampling over raw value samples for selection, unexpanded
//                children first, random-action rollouts at expansion, best
//                root child by average value. The tree lives only for the
//                duration of the call.
// shooting_plan: receding-horizon random shooting with optional
//                cross-entropy-method refinement for continuous actions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "maxplore/common.hpp"

namespace maxplore {

struct MctsConfig {
  int iterations = 25;
  int trajectories = 5;  // rollouts per expansion
  int horizon = 15;
  bool expand_full_path = true;  // false: classic single expansion per round
  void validate() const {
    if (iterations < 1) throw ValidationError("MctsConfig: iterations must be >= 1");
    if (trajectories < 1) throw ValidationError("MctsConfig: trajectories must be >= 1");
    if (horizon < 1) throw ValidationError("MctsConfig: horizon must be >= 1");
  }
};

struct MctsNode {
  int incoming_action = -1;
  std::vector<std::unique_ptr<MctsNode>> children;
  std::vector<double> values;  // cumulative utilities observed through this node
  int visits = 0;

  double average() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
};

namespace detail {

// Rollout through the exploration MDP: the prefix actions first, uniform
// random actions after. Returns per-step utilities.
template <class Mdp>
std::vector<double> mcts_rollout(const Mdp& mdp, std::span<const int> prefix, int horizon,
                                 Rng& rng) {
  auto s = mdp.initial_state();
  std::vector<double> utils(static_cast<std::size_t>(horizon), 0.0);
  for (int t = 0; t < horizon; ++t) {
    const int a = t < static_cast<int>(prefix.size())
                      ? prefix[static_cast<std::size_t>(t)]
                      : rng.uniform_int(mdp.action_count());
    auto [next, u] = mdp.imagine_step(s, a, rng);
    utils[static_cast<std::size_t>(t)] = u;
    s = std::move(next);
  }
  return utils;
}

// Backup: the node entered by the t-th action stores the cumulative utility
// observed through it (from its own action onward); the root stores the full
// return. Sibling comparisons then share no upstream noise.
inline void mcts_backup(std::vector<MctsNode*>& path, const std::vector<double>& utils) {
  std::vector<double> suffix(utils.size() + 1, 0.0);
  for (std::size_t t = utils.size(); t-- > 0;) suffix[t] = suffix[t + 1] + utils[t];
  for (std::size_t i = 0; i < path.size(); ++i) {
    const std::size_t from = i == 0 ? 0 : i - 1;
    path[i]->values.push_back(suffix[std::min(from, utils.size())]);
    ++path[i]->visits;
  }
}

}  // namespace detail

// Returns the root action with the highest average value. Requires a
// discrete-action MDP exposing action_count(), initial_state(), horizon()
// and imagine_step(state, action, rng) -> (next_state, utility).
//
// One round walks from the root to the search horizon. At each level an
// unexpanded child (lowest action index) takes priority; otherwise one stored
// value sample per child is drawn uniformly and the argmax child is entered.
// Every expansion step is scored with cfg.trajectories random-completion
// rollouts whose cumulative utilities back up the whole path, so a single
// round can push a corridor of new nodes all the way to depth horizon.
template <class Mdp>
int mcts_search(const Mdp& mdp, const MctsConfig& cfg, Rng& rng,
                double* best_value_out = nullptr) {
  cfg.validate();
  const int n_actions = mdp.action_count();
  if (n_actions < 1) throw ValidationError("mcts_search: discrete action space required");
  const int horizon = std::min(cfg.horizon, mdp.horizon());

  MctsNode root;
  root.children.resize(static_cast<std::size_t>(n_actions));

  std::vector<MctsNode*> path;
  std::vector<int> prefix;
  for (int round = 0; round < cfg.iterations; ++round) {
    path.clear();
    prefix.clear();
    MctsNode* node = &root;
    path.push_back(node);
    bool expanded_any = false;

    while (static_cast<int>(prefix.size()) < horizon) {
      int chosen = -1;
      for (int a = 0; a < n_actions; ++a) {
        if (!node->children[static_cast<std::size_t>(a)]) {
          chosen = a;
          break;
        }
      }
      const bool expanding = chosen >= 0;
      if (expanding) {
        auto child = std::make_unique<MctsNode>();
        child->incoming_action = chosen;
        child->children.resize(static_cast<std::size_t>(n_actions));
        node->children[static_cast<std::size_t>(chosen)] = std::move(child);
      } else {
        double best_draw = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < n_actions; ++a) {
          const MctsNode& c = *node->children[static_cast<std::size_t>(a)];
          const double draw =
              c.values.empty()
                  ? 0.0
                  : c.values[static_cast<std::size_t>(
                        rng.uniform_int(static_cast<int>(c.values.size())))];
          if (draw > best_draw) {
            best_draw = draw;
            chosen = a;
          }
        }
      }
      node = node->children[static_cast<std::size_t>(chosen)].get();
      path.push_back(node);
      prefix.push_back(chosen);

      if (expanding) {
        expanded_any = true;
        for (int k = 0; k < cfg.trajectories; ++k) {
          const auto utils = detail::mcts_rollout(mdp, prefix, horizon, rng);
          detail::mcts_backup(path, utils);
        }
        if (!cfg.expand_full_path) break;  // single expansion per round
      }
    }

    // A fully built path contributes fresh exact-plan evaluations instead.
    if (!expanded_any) {
      for (int k = 0; k < cfg.trajectories; ++k) {
        const auto utils = detail::mcts_rollout(mdp, prefix, horizon, rng);
        detail::mcts_backup(path, utils);
      }
    }
  }

  int best = 0;
  double best_avg = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < n_actions; ++a) {
    const auto& child = root.children[static_cast<std::size_t>(a)];
    if (!child || child->values.empty()) continue;
    const double avg = child->average();
    if (avg > best_avg) {
      best_avg = avg;
      best = a;
    }
  }
  if (best_value_out) *best_value_out = std::isfinite(best_avg) ? best_avg : 0.0;
  return best;
}

// Exact finite-horizon value iteration over the surrogate MDP's mixture
// dynamics. For chain-sized state spaces this solves the exploration MDP to
// optimality at less compute than a sampled tree search, and it is immune to
// the rollout noise that hides small interior utility gradients. Requires
// state_count(), action_count(), horizon(), initial_state(), utility(s, a)
// and mixture_row(s, a).
template <class Mdp>
int exact_plan(const Mdp& mdp, Rng&, double* best_value_out = nullptr) {
  const int S = mdp.state_count();
  const int A = mdp.action_count();
  const int horizon = mdp.horizon();
  std::vector<double> value(static_cast<std::size_t>(S), 0.0);
  std::vector<double> next_value(static_cast<std::size_t>(S), 0.0);
  std::vector<int> first_action(static_cast<std::size_t>(S), 0);
  for (int t = horizon - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        double q = mdp.utility(s, a);
        const auto row = mdp.mixture_row(s, a);
        for (int k = 0; k < S; ++k) q += row[static_cast<std::size_t>(k)] * value[static_cast<std::size_t>(k)];
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      next_value[static_cast<std::size_t>(s)] = best;
      if (t == 0) first_action[static_cast<std::size_t>(s)] = best_a;
    }
    std::swap(value, next_value);
  }
  const int s0 = mdp.initial_state();
  if (best_value_out) *best_value_out = value[static_cast<std::size_t>(s0)];
  return first_action[static_cast<std::size_t>(s0)];
}

struct ShootingConfig {
  int candidates = 64;
  int horizon = 12;
  int cem_iterations = 0;      // 0 = pure random shooting
  double elite_fraction = 0.25;
  double cem_std_floor = 0.02;
  int n_rollouts = 1;          // rollouts per candidate score
  void validate() const {
    if (candidates < 2) throw ValidationError("ShootingConfig: need at least 2 candidates");
    if (horizon < 1) throw ValidationError("ShootingConfig: horizon must be >= 1");
    if (cem_iterations < 0) throw ValidationError("ShootingConfig: cem_iterations must be >= 0");
    if (!(elite_fraction > 0.0 && elite_fraction < 1.0))
      throw ValidationError("ShootingConfig: elite fraction must lie in (0,1)");
    if (n_rollouts < 1) throw ValidationError("ShootingConfig: n_rollouts must be >= 1");
  }
};

// Returns the first action of the best-scoring candidate sequence. Round 0
// samples uniformly inside the action bounds (the warm-start sequence, when
// given, is injected as candidate 0); later CEM rounds sample Gaussians
// around the elite mean, clipped to bounds. Requires a continuous-action MDP
// exposing action_dim(), action_lower()/action_upper(), horizon() and
// evaluate_plan(plan, n_rollouts, rng).
template <class Mdp>
std::vector<double> shooting_plan(
    const Mdp& mdp, const ShootingConfig& cfg, Rng& rng,
    std::span<const std::vector<double>> warm_start = {},
    std::vector<std::vector<double>>* best_sequence_out = nullptr,
    double* best_score_out = nullptr) {
  cfg.validate();
  const int dim = mdp.action_dim();
  const auto lo = mdp.action_lower();
  const auto hi = mdp.action_upper();
  const int horizon = std::min(cfg.horizon, mdp.horizon());
  const int n_elite = std::max(1, static_cast<int>(cfg.elite_fraction * cfg.candidates));

  using Plan = std::vector<std::vector<double>>;
  std::vector<Plan> plans(static_cast<std::size_t>(cfg.candidates));
  std::vector<double> scores(static_cast<std::size_t>(cfg.candidates));

  Plan mean(static_cast<std::size_t>(horizon), std::vector<double>(static_cast<std::size_t>(dim)));
  Plan stddev = mean;

  Plan best_plan;
  double best_score = -std::numeric_limits<double>::infinity();

  for (int round = 0; round <= cfg.cem_iterations; ++round) {
    for (int c = 0; c < cfg.candidates; ++c) {
      Plan& p = plans[static_cast<std::size_t>(c)];
      p.assign(static_cast<std::size_t>(horizon),
               std::vector<double>(static_cast<std::size_t>(dim)));
      if (round == 0 && c == 0 && static_cast<int>(warm_start.size()) >= horizon) {
        for (int t = 0; t < horizon; ++t) p[static_cast<std::size_t>(t)] = warm_start[t];
        continue;
      }
      for (int t = 0; t < horizon; ++t) {
        for (int k = 0; k < dim; ++k) {
          double v;
          if (round == 0) {
            v = rng.uniform(lo[static_cast<std::size_t>(k)], hi[static_cast<std::size_t>(k)]);
          } else {
            v = rng.normal(mean[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)],
                           stddev[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
            v = std::min(std::max(v, lo[static_cast<std::size_t>(k)]),
                         hi[static_cast<std::size_t>(k)]);
          }
          p[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = v;
        }
      }
    }

    // Common random numbers: every candidate in a round is scored under the
    // same rollout noise realization (streams split per rollout index), so
    // score differences reflect the action sequences alone.
    const Rng round_base = rng.stream("cem-round", static_cast<std::uint64_t>(round));
    for (int c = 0; c < cfg.candidates; ++c) {
      Rng eval_rng = round_base;
      scores[static_cast<std::size_t>(c)] = mdp.evaluate_plan(
          std::span<const std::vector<double>>(plans[static_cast<std::size_t>(c)]),
          cfg.n_rollouts, eval_rng);
      if (scores[static_cast<std::size_t>(c)] > best_score) {  // strict: first wins ties
        best_score = scores[static_cast<std::size_t>(c)];
        best_plan = plans[static_cast<std::size_t>(c)];
      }
    }

    if (round == cfg.cem_iterations) break;

    // Refit the sampling distribution to the elite set.
    std::vector<int> idx(static_cast<std::size_t>(cfg.candidates));
    for (int c = 0; c < cfg.candidates; ++c) idx[static_cast<std::size_t>(c)] = c;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    for (int t = 0; t < horizon; ++t) {
      for (int k = 0; k < dim; ++k) {
        double m = 0.0;
        for (int e = 0; e < n_elite; ++e)
          m += plans[static_cast<std::size_t>(idx[static_cast<std::size_t>(e)])]
                    [static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
        m /= static_cast<double>(n_elite);
        double var = 0.0;
        for (int e = 0; e < n_elite; ++e) {
          const double d = plans[static_cast<std::size_t>(idx[static_cast<std::size_t>(e)])]
                                [static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] -
                           m;
          var += d * d;
        }
        var /= static_cast<double>(n_elite);
        mean[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = m;
        stddev[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] =
            std::max(std::sqrt(var), cfg.cem_std_floor);
      }
    }
  }

  if (best_sequence_out) *best_sequence_out = best_plan;
  if (best_score_out) *best_score_out = best_score;
  return best_plan.front();
}

}  // namespace maxplore
