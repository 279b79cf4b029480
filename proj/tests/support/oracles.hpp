#pragma once

// Independent reference implementations used to cross-check the library:
// Simpson-rule quadrature for quadratic Renyi entropies of 1-d Gaussian
// mixtures, central finite differences for netcore gradients, and exhaustive
// enumeration for plan values and optimal actions on small deterministic
// MDPs. None of these share code with the implementation paths they verify.

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/divergence.hpp"
#include "maxplore/netcore.hpp"

namespace maxplore::oracles {

inline double gaussian_pdf(double x, double mu, double var) {
  const double z = x - mu;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * 3.14159265358979323846 * var);
}

// Simpson integration of f over [lo, hi] with n intervals (n rounded up to even).
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  if (n % 2 != 0) ++n;
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + h * i) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Quadratic Renyi entropy H2 = -ln integral p(x)^2 dx by quadrature.
inline double renyi2_entropy_grid(const std::function<double(double)>& pdf, double lo, double hi,
                                  int n = 40000) {
  const double integral = simpson([&](double x) { const double p = pdf(x); return p * p; },
                                  lo, hi, n);
  return -std::log(integral);
}

// H2(mixture) - mean member H2, both sides by quadrature. 1-d members only.
inline double jrd_gaussians_grid(const std::vector<GaussianDiag>& gs, int n = 40000) {
  double lo = 1e300;
  double hi = -1e300;
  for (const auto& g : gs) {
    const double sd = std::sqrt(g.var[0]);
    lo = std::min(lo, g.mean[0] - 12.0 * sd);
    hi = std::max(hi, g.mean[0] + 12.0 * sd);
  }
  const double inv_n = 1.0 / static_cast<double>(gs.size());
  auto mixture = [&](double x) {
    double p = 0.0;
    for (const auto& g : gs) p += gaussian_pdf(x, g.mean[0], g.var[0]);
    return p * inv_n;
  };
  const double h2_mix = renyi2_entropy_grid(mixture, lo, hi, n);
  double mean_h2 = 0.0;
  for (const auto& g : gs) {
    auto pdf = [&](double x) { return gaussian_pdf(x, g.mean[0], g.var[0]); };
    mean_h2 += renyi2_entropy_grid(pdf, g.mean[0] - 12.0 * std::sqrt(g.var[0]),
                                   g.mean[0] + 12.0 * std::sqrt(g.var[0]), n);
  }
  return h2_mix - mean_h2 * inv_n;
}

// Worst-case relative error of the analytic batch gradient against central
// finite differences with the given epsilon. Pairs where both sides are tiny
// contribute zero.
template <class Targets>
double gradient_check(Mlp& net, const std::vector<std::vector<double>>& inputs,
                      const Targets& targets, LossKind loss, double eps = 1e-5) {
  const auto analytic = net.batch_gradient(inputs, targets, loss);
  auto& params = net.params();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double save = params[i];
    params[i] = save + eps;
    const double lp = net.batch_loss(inputs, targets, loss);
    params[i] = save - eps;
    const double lm = net.batch_loss(inputs, targets, loss);
    params[i] = save;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

// Tiny deterministic MDP for planner oracle tests: utilities and successor
// states are fixed functions of (state, action). Matches the planner's MDP
// interface.
struct ToyDeterministicMdp {
  int n_states = 0;
  int n_actions = 2;
  int start = 0;
  int plan_horizon = 3;
  std::vector<double> utility_table;  // s * n_actions + a
  std::vector<int> next_table;        // s * n_actions + a

  using State = int;

  int action_count() const { return n_actions; }
  int horizon() const { return plan_horizon; }
  int initial_state() const { return start; }

  double utility(int s, int a) const {
    return utility_table[static_cast<std::size_t>(s) * n_actions + a];
  }

  std::pair<int, double> imagine_step(int s, int a, Rng&) const {
    return {next_table[static_cast<std::size_t>(s) * n_actions + a], utility(s, a)};
  }
};

// Exhaustive cumulative value of every action sequence; returns the optimum
// and the set of optimal first actions.
inline std::pair<double, std::vector<int>> exhaustive_best_first_action(
    const ToyDeterministicMdp& mdp) {
  const int h = mdp.plan_horizon;
  const int a_count = mdp.n_actions;
  long total = 1;
  for (int t = 0; t < h; ++t) total *= a_count;
  double best = -1e300;
  std::vector<double> best_by_first(static_cast<std::size_t>(a_count), -1e300);
  for (long code = 0; code < total; ++code) {
    long c = code;
    int s = mdp.start;
    double cum = 0.0;
    int first = -1;
    for (int t = 0; t < h; ++t) {
      const int a = static_cast<int>(c % a_count);
      c /= a_count;
      if (t == 0) first = a;
      cum += mdp.utility(s, a);
      s = mdp.next_table[static_cast<std::size_t>(s) * a_count + a];
    }
    best = std::max(best, cum);
    auto& b = best_by_first[static_cast<std::size_t>(first)];
    b = std::max(b, cum);
  }
  std::vector<int> argmax;
  for (int a = 0; a < a_count; ++a)
    if (best_by_first[static_cast<std::size_t>(a)] >= best - 1e-12) argmax.push_back(a);
  return {best, argmax};
}

// Exact expected cumulative utility of a plan under uniform member choice per
// step, for ensembles whose members have deterministic (point-mass)
// transitions. Enumerates all member assignments.
template <class Mdp>
double exact_plan_value_point_mass(
    const Mdp& mdp, const std::vector<int>& plan, int n_members,
    const std::function<int(int /*s*/, int /*a*/, int /*member*/)>& member_next) {
  long total = 1;
  for (std::size_t t = 0; t < plan.size(); ++t) total *= n_members;
  double acc = 0.0;
  for (long code = 0; code < total; ++code) {
    long c = code;
    int s = mdp.initial_state();
    double cum = 0.0;
    for (int a : plan) {
      const int m = static_cast<int>(c % n_members);
      c /= n_members;
      cum += mdp.utility(s, a);
      s = member_next(s, a, m);
    }
    acc += cum;
  }
  return acc / static_cast<double>(total);
}

}  // namespace maxplore::oracles
