#pragma once

// The surrogate exploration MDP: uniform per-step member sampling for the
// dynamics and ensemble disagreement as the reward. Utility kinds cover the
// JSD/JRD objectives plus the prediction-error and trajectory-variance
// baseline utilities. Instances are immutable after construction; rollouts
// never touch the external environment.

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/divergence.hpp"
#include "maxplore/models.hpp"

namespace maxplore {

enum class UtilityKind { jsd_categorical, jrd_gaussian, pred_error, traj_variance };

// Discrete-state exploration MDP over a frozen ensemble. Predictive
// distributions and utilities for every (s, a) pair are cached up front, so
// imagined rollouts cost two table lookups per step.
class DiscreteExplorationMdp {
 public:
  DiscreteExplorationMdp(const DiscreteEnsemble& ens, UtilityKind kind, int initial_state,
                         int horizon)
      : ens_(ens), initial_state_(initial_state), horizon_(horizon) {
    if (kind != UtilityKind::jsd_categorical)
      throw ValidationError("DiscreteExplorationMdp: utility kind mismatched with ensemble mode");
    if (horizon < 1) throw ValidationError("DiscreteExplorationMdp: horizon must be >= 1");
    if (initial_state < 0 || initial_state >= ens.n_states())
      throw ValidationError("DiscreteExplorationMdp: initial state out of range");
    const int S = ens.n_states();
    const int A = ens.n_actions();
    const int N = ens.size();
    utilities_.resize(static_cast<std::size_t>(S) * A);
    cdfs_.resize(static_cast<std::size_t>(S) * A * N);
    mixture_.resize(static_cast<std::size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto dists = ens.predict_all(s, a);
        utilities_[static_cast<std::size_t>(s) * A + a] =
            jsd_categorical(std::span<const CategoricalDist>(dists));
        auto& mix = mixture_[static_cast<std::size_t>(s) * A + a];
        mix.assign(static_cast<std::size_t>(S), 0.0);
        for (int m = 0; m < N; ++m) {
          auto& cdf = cdfs_[(static_cast<std::size_t>(s) * A + a) * N + m];
          cdf.resize(static_cast<std::size_t>(S));
          double acc = 0.0;
          for (int k = 0; k < S; ++k) {
            const double p = dists[static_cast<std::size_t>(m)].probs[static_cast<std::size_t>(k)];
            acc += p;
            cdf[static_cast<std::size_t>(k)] = acc;
            mix[static_cast<std::size_t>(k)] += p / static_cast<double>(N);
          }
        }
      }
    }
  }

  using State = int;
  using Action = int;

  int action_count() const { return ens_.n_actions(); }
  int state_count() const { return ens_.n_states(); }
  int member_count() const { return ens_.size(); }
  State initial_state() const { return initial_state_; }
  int horizon() const { return horizon_; }

  double utility(int s, int a) const {
    check_sa(s, a);
    return utilities_[static_cast<std::size_t>(s) * ens_.n_actions() + a];
  }

  // Marginal next-state distribution under uniform member choice; the exact
  // transition function of the surrogate MDP.
  std::span<const double> mixture_row(int s, int a) const {
    check_sa(s, a);
    return mixture_[static_cast<std::size_t>(s) * ens_.n_actions() + a];
  }

  // Member drawn uniformly first, next state second; keeps draw order stable.
  std::pair<int, double> imagine_step(int s, int a, Rng& rng) const {
    check_sa(s, a);
    const int member = rng.uniform_int(ens_.size());
    const auto& cdf =
        cdfs_[(static_cast<std::size_t>(s) * ens_.n_actions() + a) * ens_.size() + member];
    const double u01 = rng.uniform();
    int next = static_cast<int>(cdf.size()) - 1;
    for (std::size_t k = 0; k < cdf.size(); ++k) {
      if (u01 < cdf[k]) {
        next = static_cast<int>(k);
        break;
      }
    }
    return {next, utility(s, a)};
  }

  double evaluate_plan(std::span<const int> plan, int n_rollouts, Rng& rng) const {
    if (plan.empty()) throw ValidationError("evaluate_plan: empty plan");
    if (static_cast<int>(plan.size()) > horizon_)
      throw ValidationError("evaluate_plan: plan longer than horizon");
    if (n_rollouts < 1) throw ValidationError("evaluate_plan: n_rollouts must be >= 1");
    double total = 0.0;
    for (int r = 0; r < n_rollouts; ++r) {
      int s = initial_state_;
      double cum = 0.0;
      for (int a : plan) {
        auto [next, u] = imagine_step(s, a, rng);
        cum += u;
        s = next;
      }
      total += cum;
    }
    return total / static_cast<double>(n_rollouts);
  }

 private:
  void check_sa(int s, int a) const {
    if (s < 0 || s >= ens_.n_states() || a < 0 || a >= ens_.n_actions())
      throw ValidationError("DiscreteExplorationMdp: state or action out of range");
  }

  const DiscreteEnsemble& ens_;
  int initial_state_;
  int horizon_;
  std::vector<double> utilities_;
  std::vector<std::vector<double>> cdfs_;     // (s, a, member) -> cdf over next states
  std::vector<std::vector<double>> mixture_;  // (s, a) -> mean pmf over next states
};

// Continuous-state exploration MDP over a frozen Gaussian ensemble.
class ContinuousExplorationMdp {
 public:
  ContinuousExplorationMdp(const GaussianEnsemble& ens, UtilityKind kind, double lambda,
                           std::vector<double> initial_state, int horizon,
                           std::vector<double> action_lower, std::vector<double> action_upper)
      : ens_(ens), kind_(kind), initial_state_(std::move(initial_state)), horizon_(horizon),
        action_lower_(std::move(action_lower)), action_upper_(std::move(action_upper)) {
    if (kind == UtilityKind::jsd_categorical)
      throw ValidationError(
          "ContinuousExplorationMdp: utility kind mismatched with ensemble mode");
    if (horizon < 1) throw ValidationError("ContinuousExplorationMdp: horizon must be >= 1");
    if (static_cast<int>(initial_state_.size()) != ens.state_dim())
      throw ValidationError("ContinuousExplorationMdp: initial state dimension mismatch");
    if (static_cast<int>(action_lower_.size()) != ens.action_dim() ||
        static_cast<int>(action_upper_.size()) != ens.action_dim())
      throw ValidationError("ContinuousExplorationMdp: action bound dimension mismatch");
    tempering_.lambda = lambda;
    tempering_.sigma_upper = ens.variance_upper_denormalized();
    tempering_.validate();
  }

  using State = std::vector<double>;
  using Action = std::vector<double>;

  int action_dim() const { return ens_.action_dim(); }
  std::span<const double> action_lower() const { return action_lower_; }
  std::span<const double> action_upper() const { return action_upper_; }
  const State& initial_state() const { return initial_state_; }
  int horizon() const { return horizon_; }
  UtilityKind kind() const { return kind_; }
  int member_count() const { return ens_.size(); }

  double utility(std::span<const double> s, std::span<const double> a) const {
    switch (kind_) {
      case UtilityKind::jrd_gaussian: {
        const auto preds = ens_.predict_all(s, a);
        const auto tempered = rescale_variances(preds, tempering_);
        return jrd_gaussians(std::span<const GaussianDiag>(tempered));
      }
      case UtilityKind::pred_error: {
        // Target-free planning proxy: mean pairwise squared distance between
        // member means.
        const auto preds = ens_.predict_all(s, a);
        const int n = static_cast<int>(preds.size());
        if (n < 2) return 0.0;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          for (int j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < preds[0].mean.size(); ++k) {
              const double d = preds[static_cast<std::size_t>(i)].mean[k] -
                               preds[static_cast<std::size_t>(j)].mean[k];
              sq += d * d;
            }
            acc += sq;
          }
        }
        return acc / (0.5 * n * (n - 1));
      }
      case UtilityKind::traj_variance:
        // Scored at trajectory level inside evaluate_plan.
        return 0.0;
      case UtilityKind::jsd_categorical:
        break;
    }
    throw ValidationError("ContinuousExplorationMdp: bad utility kind");
  }

  // Historical scoring for reactive prediction-error exploration: the true
  // squared error of each member mean against the observed next state.
  double utility_vs_target(std::span<const double> s, std::span<const double> a,
                           std::span<const double> observed_next) const {
    const auto preds = ens_.predict_all(s, a);
    double acc = 0.0;
    for (const auto& p : preds) {
      double sq = 0.0;
      for (std::size_t k = 0; k < p.mean.size(); ++k) {
        const double d = p.mean[k] - observed_next[k];
        sq += d * d;
      }
      acc += sq;
    }
    return acc / static_cast<double>(preds.size());
  }

  std::pair<State, double> imagine_step(std::span<const double> s, std::span<const double> a,
                                        Rng& rng) const {
    const int member = rng.uniform_int(ens_.size());
    State next = ens_.sample_next(s, a, member, rng);
    return {std::move(next), utility(s, a)};
  }

  double evaluate_plan(std::span<const Action> plan, int n_rollouts, Rng& rng) const {
    if (plan.empty()) throw ValidationError("evaluate_plan: empty plan");
    if (static_cast<int>(plan.size()) > horizon_)
      throw ValidationError("evaluate_plan: plan longer than horizon");
    if (n_rollouts < 1) throw ValidationError("evaluate_plan: n_rollouts must be >= 1");
    if (kind_ == UtilityKind::traj_variance) return trajectory_variance_score(plan, n_rollouts, rng);
    double total = 0.0;
    for (int r = 0; r < n_rollouts; ++r) {
      State s = initial_state_;
      double cum = 0.0;
      for (const auto& a : plan) {
        auto [next, u] = imagine_step(s, a, rng);
        cum += u;
        s = std::move(next);
      }
      total += cum;
    }
    return total / static_cast<double>(n_rollouts);
  }

 private:
  // Per-timestep variance across member-parallel rollouts, summed over state
  // dimensions and steps.
  double trajectory_variance_score(std::span<const Action> plan, int n_rollouts,
                                   Rng& rng) const {
    const int n = ens_.size();
    const int d = ens_.state_dim();
    double total = 0.0;
    for (int r = 0; r < n_rollouts; ++r) {
      std::vector<State> states(static_cast<std::size_t>(n), initial_state_);
      double cum = 0.0;
      for (const auto& a : plan) {
        for (int m = 0; m < n; ++m)
          states[static_cast<std::size_t>(m)] =
              ens_.sample_next(states[static_cast<std::size_t>(m)], a, m, rng);
        for (int k = 0; k < d; ++k) {
          double mean = 0.0;
          for (int m = 0; m < n; ++m) mean += states[static_cast<std::size_t>(m)][k];
          mean /= static_cast<double>(n);
          double var = 0.0;
          for (int m = 0; m < n; ++m) {
            const double e = states[static_cast<std::size_t>(m)][k] - mean;
            var += e * e;
          }
          cum += var / static_cast<double>(n);
        }
      }
      total += cum;
    }
    return total / static_cast<double>(n_rollouts);
  }

  const GaussianEnsemble& ens_;
  UtilityKind kind_;
  State initial_state_;
  int horizon_;
  std::vector<double> action_lower_;
  std::vector<double> action_upper_;
  VarianceTempering tempering_;
};

}  // namespace maxplore
