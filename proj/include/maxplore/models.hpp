#pragma once

// Dynamics models and the bootstrap-style ensemble approximating the belief
// over transition functions: categorical predictors for discrete state spaces
// (MLP on one-hot input, or exact tabular counts) and delta-predicting
// diagonal-Gaussian predictors with input/output normalization for continuous
// spaces. Member diversity comes from independent random initialization; an
// optional bootstrap-resampling flag exists but defaults off.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/divergence.hpp"
#include "maxplore/netcore.hpp"

namespace maxplore {

struct DiscreteTransition {
  int s = 0;
  int a = 0;
  int s_next = 0;
};

class DiscreteHistory {
 public:
  void push(DiscreteTransition t) { data_.push_back(t); }
  std::span<const DiscreteTransition> transitions() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

 private:
  std::vector<DiscreteTransition> data_;
};

struct ContinuousTransition {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
};

// Per-component mean/std of states, actions and deltas; std floored at 1e-6.
struct NormStats {
  std::vector<double> state_mean, state_std;
  std::vector<double> action_mean, action_std;
  std::vector<double> delta_mean, delta_std;

  static NormStats identity(int state_dim, int action_dim) {
    NormStats n;
    n.state_mean.assign(state_dim, 0.0);
    n.state_std.assign(state_dim, 1.0);
    n.action_mean.assign(action_dim, 0.0);
    n.action_std.assign(action_dim, 1.0);
    n.delta_mean.assign(state_dim, 0.0);
    n.delta_std.assign(state_dim, 1.0);
    return n;
  }

  std::vector<double> normalize_state(std::span<const double> s) const {
    std::vector<double> z(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) z[k] = (s[k] - state_mean[k]) / state_std[k];
    return z;
  }

  std::vector<double> denormalize_state(std::span<const double> z) const {
    std::vector<double> s(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) s[k] = state_mean[k] + state_std[k] * z[k];
    return s;
  }
};

class ContinuousHistory {
 public:
  void push(ContinuousTransition t) { data_.push_back(std::move(t)); }
  std::span<const ContinuousTransition> transitions() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Stats over exactly the stored transitions.
  NormStats compute_stats(int state_dim, int action_dim) const {
    NormStats st = NormStats::identity(state_dim, action_dim);
    if (data_.empty()) return st;
    const double n = static_cast<double>(data_.size());
    auto accumulate = [&](auto&& get, std::vector<double>& mean, std::vector<double>& sd) {
      std::fill(mean.begin(), mean.end(), 0.0);
      for (const auto& t : data_) {
        const auto v = get(t);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
      }
      for (double& m : mean) m /= n;
      std::fill(sd.begin(), sd.end(), 0.0);
      for (const auto& t : data_) {
        const auto v = get(t);
        for (std::size_t k = 0; k < sd.size(); ++k) {
          const double e = v[k] - mean[k];
          sd[k] += e * e;
        }
      }
      for (double& s : sd) s = std::max(std::sqrt(s / n), 1e-6);
    };
    accumulate([](const ContinuousTransition& t) { return t.s; }, st.state_mean, st.state_std);
    accumulate([](const ContinuousTransition& t) { return t.a; }, st.action_mean, st.action_std);
    accumulate(
        [](const ContinuousTransition& t) {
          std::vector<double> d(t.s.size());
          for (std::size_t k = 0; k < d.size(); ++k) d[k] = t.s_next[k] - t.s[k];
          return d;
        },
        st.delta_mean, st.delta_std);
    return st;
  }

 private:
  std::vector<ContinuousTransition> data_;
};

// Exact transition counts with Laplace smoothing.
class TabularModel {
 public:
  TabularModel(int n_states, int n_actions, double laplace = 1e-3)
      : n_states_(n_states), n_actions_(n_actions), laplace_(laplace),
        counts_(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0) {}

  void observe(int s, int a, int s_next, double weight = 1.0) {
    counts_[index(s, a, s_next)] += weight;
  }

  void reset_counts() { std::fill(counts_.begin(), counts_.end(), 0.0); }

  CategoricalDist predict(int s, int a) const {
    CategoricalDist d;
    d.probs.resize(static_cast<std::size_t>(n_states_));
    double total = 0.0;
    for (int k = 0; k < n_states_; ++k) {
      d.probs[static_cast<std::size_t>(k)] = counts_[index(s, a, k)] + laplace_;
      total += d.probs[static_cast<std::size_t>(k)];
    }
    if (total <= 0.0)
      throw StateError("TabularModel: row has no mass (laplace=0 and no observations)");
    for (double& p : d.probs) p /= total;
    return d;
  }

  double count(int s, int a, int s_next) const { return counts_[index(s, a, s_next)]; }
  double laplace() const { return laplace_; }

 private:
  std::size_t index(int s, int a, int s_next) const {
    if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_ || s_next < 0 || s_next >= n_states_)
      throw ValidationError("TabularModel: index out of range");
    return (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_ + s_next;
  }

  int n_states_;
  int n_actions_;
  double laplace_;
  std::vector<double> counts_;
};

struct EnsembleTrainConfig {
  int iterations = 0;  // sampled minibatch steps; used when > 0
  int epochs = 0;      // full shuffled passes; used when iterations == 0
  int batch_size = 64;
  OptimizerConfig opt;
  bool bootstrap = false;  // per-member resampling of the dataset
  int threads = 1;         // members trained in parallel; results identical either way
};

namespace detail {

inline std::vector<std::size_t> training_order(std::size_t n, const EnsembleTrainConfig& cfg,
                                               Rng& rng, std::size_t* out_steps) {
  std::vector<std::size_t> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = i;
  if (cfg.bootstrap) {
    for (std::size_t i = 0; i < n; ++i)
      base[i] = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n)));
  }
  std::vector<std::size_t> order;
  if (cfg.iterations > 0) {
    const std::size_t bs = std::min<std::size_t>(cfg.batch_size, n);
    order.reserve(static_cast<std::size_t>(cfg.iterations) * bs);
    for (int it = 0; it < cfg.iterations; ++it)
      for (std::size_t b = 0; b < bs; ++b)
        order.push_back(base[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n)))]);
    *out_steps = static_cast<std::size_t>(cfg.iterations);
  } else {
    const int epochs = std::max(cfg.epochs, 1);
    std::vector<std::size_t> idx = base;
    order.reserve(static_cast<std::size_t>(epochs) * n);
    for (int e = 0; e < epochs; ++e) {
      // Fisher-Yates from the member's stream
      for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(idx[i - 1], idx[j]);
      }
      order.insert(order.end(), idx.begin(), idx.end());
    }
    const std::size_t bs = std::min<std::size_t>(cfg.batch_size, n);
    *out_steps = (static_cast<std::size_t>(epochs) * n + bs - 1) / bs;
  }
  return order;
}

inline void run_members_parallel(int n_members, int threads,
                                 const std::function<void(int)>& work) {
  if (threads <= 1 || n_members <= 1) {
    for (int m = 0; m < n_members; ++m) work(m);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const int workers = std::min(threads, n_members);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      try {
        for (int m = next.fetch_add(1); m < n_members; m = next.fetch_add(1)) work(m);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Ensemble over a finite state/action space. Members are either MLPs on
// one-hot state+action input emitting categorical logits, or exact tabular
// counts (used as reference models in oracle tests).
class DiscreteEnsemble {
 public:
  static DiscreteEnsemble mlp(int n_states, int n_actions, int n_members,
                              std::vector<int> hidden, std::uint64_t seed,
                              Activation act = Activation::tanh_fn) {
    DiscreteEnsemble e(n_states, n_actions);
    if (n_members < 1) throw ValidationError("DiscreteEnsemble: need at least one member");
    Rng root(seed);
    for (int m = 0; m < n_members; ++m) {
      MlpSpec spec;
      spec.input_dim = n_states + n_actions;
      spec.hidden = hidden;
      spec.output_dim = n_states;
      spec.activation = act;
      spec.head = HeadKind::categorical_logits;
      e.nets_.emplace_back(spec, root.stream_seed("member-init", static_cast<std::uint64_t>(m)));
      e.member_rngs_.push_back(root.stream("member-train", static_cast<std::uint64_t>(m)));
    }
    return e;
  }

  static DiscreteEnsemble tabular(int n_states, int n_actions, int n_members,
                                  double laplace = 1e-3) {
    DiscreteEnsemble e(n_states, n_actions);
    if (n_members < 1) throw ValidationError("DiscreteEnsemble: need at least one member");
    for (int m = 0; m < n_members; ++m)
      e.tables_.emplace_back(n_states, n_actions, laplace);
    e.trained_ = true;  // tabular rows are defined from the first observation on
    return e;
  }

  int size() const { return tabular_mode() ? static_cast<int>(tables_.size())
                                           : static_cast<int>(nets_.size()); }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  bool tabular_mode() const { return !tables_.empty(); }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  // Fresh parameters and optimizer state; tabular members reset counts.
  void reinitialize(std::uint64_t seed) {
    Rng root(seed);
    for (std::size_t m = 0; m < nets_.size(); ++m) {
      nets_[m].reinitialize(root.stream_seed("member-init", m));
      member_rngs_[m] = root.stream("member-train", m);
    }
    for (auto& t : tables_) t.reset_counts();
    opts_.clear();
  }

  std::vector<TabularModel>& tables() { return tables_; }
  std::vector<Mlp>& nets() { return nets_; }
  const std::vector<Mlp>& nets() const { return nets_; }

  std::vector<CategoricalDist> predict_all(int s, int a) const {
    require_trained();
    check_sa(s, a);
    std::vector<CategoricalDist> out;
    out.reserve(static_cast<std::size_t>(size()));
    if (tabular_mode()) {
      for (const auto& t : tables_) out.push_back(t.predict(s, a));
    } else {
      const auto x = encode(s, a);
      for (const auto& net : nets_) out.push_back(net.forward_categorical(x));
    }
    return out;
  }

  int sample_next(int s, int a, int member, Rng& rng) const {
    require_trained();
    check_sa(s, a);
    if (member < 0 || member >= size())
      throw ValidationError("DiscreteEnsemble: member index out of range");
    if (tabular_mode()) return tables_[static_cast<std::size_t>(member)].predict(s, a).sample(rng);
    const auto x = encode(s, a);
    return nets_[static_cast<std::size_t>(member)].forward_categorical(x).sample(rng);
  }

  // Every member trains independently on the full dataset (or its bootstrap
  // resample); diversity comes from initialization and stream order.
  void train(const DiscreteHistory& d, const EnsembleTrainConfig& cfg) {
    if (d.empty()) throw ValidationError("DiscreteEnsemble::train: empty history");
    if (tabular_mode()) {
      for (auto& t : tables_) {
        t.reset_counts();
        for (const auto& tr : d.transitions()) t.observe(tr.s, tr.a, tr.s_next);
      }
      trained_ = true;
      return;
    }
    const auto trans = d.transitions();
    if (opts_.empty()) opts_.assign(nets_.size(), Optimizer(cfg.opt));
    detail::run_members_parallel(size(), cfg.threads, [&](int m) {
      auto& net = nets_[static_cast<std::size_t>(m)];
      auto& rng = member_rngs_[static_cast<std::size_t>(m)];
      std::size_t steps = 0;
      const auto order = detail::training_order(trans.size(), cfg, rng, &steps);
      Optimizer& opt = opts_[static_cast<std::size_t>(m)];
      const std::size_t bs = std::min<std::size_t>(cfg.batch_size, trans.size());
      std::vector<std::vector<double>> X(bs);
      std::vector<int> Y(bs);
      std::size_t pos = 0;
      for (std::size_t it = 0; it < steps; ++it) {
        std::size_t take = bs;
        if (cfg.iterations == 0) take = std::min(bs, order.size() - pos);
        if (take == 0) break;
        X.resize(take);
        Y.resize(take);
        for (std::size_t b = 0; b < take; ++b) {
          const auto& tr = trans[order[pos + b]];
          X[b] = encode(tr.s, tr.a);
          Y[b] = tr.s_next;
        }
        pos += take;
        try {
          net.train_step(X, Y, LossKind::cross_entropy, opt);
        } catch (const NumericError& e) {
          throw NumericError("member " + std::to_string(m) + ": " + e.what());
        }
      }
    });
    trained_ = true;
  }

  std::vector<double> encode(int s, int a) const {
    std::vector<double> x(static_cast<std::size_t>(n_states_ + n_actions_), 0.0);
    x[static_cast<std::size_t>(s)] = 1.0;
    x[static_cast<std::size_t>(n_states_ + a)] = 1.0;
    return x;
  }

  // Checkpoint layout: "MXENS001", u32 mode (0 = categorical-mlp,
  // 2 = categorical-tabular), u32 N, u32 n_states, u32 n_actions, then per
  // member a netcore block (mlp) or f64 laplace + f64 counts (tabular).
  void save(std::ostream& os) const {
    os.write("MXENS001", 8);
    const std::uint32_t mode = tabular_mode() ? 2u : 0u;
    os.write(reinterpret_cast<const char*>(&mode), 4);
    const std::uint32_t n = static_cast<std::uint32_t>(size());
    const std::uint32_t ns = static_cast<std::uint32_t>(n_states_);
    const std::uint32_t na = static_cast<std::uint32_t>(n_actions_);
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(&ns), 4);
    os.write(reinterpret_cast<const char*>(&na), 4);
    if (tabular_mode()) {
      for (const auto& t : tables_) {
        const double lap = t.laplace();
        os.write(reinterpret_cast<const char*>(&lap), 8);
        for (int s = 0; s < n_states_; ++s)
          for (int a = 0; a < n_actions_; ++a)
            for (int k = 0; k < n_states_; ++k) {
              const double c = t.count(s, a, k);
              os.write(reinterpret_cast<const char*>(&c), 8);
            }
      }
    } else {
      for (const auto& net : nets_) net.save(os);
    }
    if (!os) throw StateError("DiscreteEnsemble::save: stream failure");
  }

  static DiscreteEnsemble load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MXENS001", 8) != 0)
      throw ValidationError("DiscreteEnsemble::load: bad magic");
    std::uint32_t mode = 0, n = 0, ns = 0, na = 0;
    is.read(reinterpret_cast<char*>(&mode), 4);
    is.read(reinterpret_cast<char*>(&n), 4);
    is.read(reinterpret_cast<char*>(&ns), 4);
    is.read(reinterpret_cast<char*>(&na), 4);
    if (!is || (mode != 0 && mode != 2))
      throw ValidationError("DiscreteEnsemble::load: bad header");
    DiscreteEnsemble e(static_cast<int>(ns), static_cast<int>(na));
    if (mode == 2) {
      for (std::uint32_t m = 0; m < n; ++m) {
        double lap = 0.0;
        is.read(reinterpret_cast<char*>(&lap), 8);
        TabularModel t(static_cast<int>(ns), static_cast<int>(na), lap);
        for (int s = 0; s < static_cast<int>(ns); ++s)
          for (int a = 0; a < static_cast<int>(na); ++a)
            for (int k = 0; k < static_cast<int>(ns); ++k) {
              double c = 0.0;
              is.read(reinterpret_cast<char*>(&c), 8);
              if (c > 0.0) t.observe(s, a, k, c);
            }
        e.tables_.push_back(std::move(t));
      }
    } else {
      for (std::uint32_t m = 0; m < n; ++m) {
        e.nets_.push_back(Mlp::load(is));
        e.member_rngs_.push_back(Rng(0).stream("member-train", m));
      }
    }
    if (!is) throw ValidationError("DiscreteEnsemble::load: truncated stream");
    e.trained_ = true;
    return e;
  }

 private:
  DiscreteEnsemble(int n_states, int n_actions) : n_states_(n_states), n_actions_(n_actions) {
    if (n_states < 1 || n_actions < 1)
      throw ValidationError("DiscreteEnsemble: state/action counts must be positive");
  }

  void require_trained() const {
    if (!trained_) throw StateError("DiscreteEnsemble: predict on untrained ensemble");
  }

  void check_sa(int s, int a) const {
    if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_)
      throw ValidationError("DiscreteEnsemble: state or action out of range");
  }

  int n_states_;
  int n_actions_;
  std::vector<Mlp> nets_;
  std::vector<TabularModel> tables_;
  std::vector<Rng> member_rngs_;
  std::vector<Optimizer> opts_;
  bool trained_ = false;
};

// Ensemble over a continuous space. Members predict the normalized state
// delta as a diagonal Gaussian; predictions are de-normalized and shifted by
// the query state. Normalization stats are frozen during a training call and
// refreshed only at its start.
class GaussianEnsemble {
 public:
  static GaussianEnsemble mlp(int state_dim, int action_dim, int n_members,
                              std::vector<int> hidden, std::uint64_t seed,
                              Activation act = Activation::swish,
                              double logvar_lo = std::log(1e-8), double logvar_hi = 0.0) {
    GaussianEnsemble e(state_dim, action_dim);
    if (n_members < 1) throw ValidationError("GaussianEnsemble: need at least one member");
    e.seed_ = seed;
    Rng root(seed);
    for (int m = 0; m < n_members; ++m) {
      MlpSpec spec;
      spec.input_dim = state_dim + action_dim;
      spec.hidden = hidden;
      spec.output_dim = state_dim;
      spec.activation = act;
      spec.head = HeadKind::gaussian_diag;
      spec.logvar_lo = logvar_lo;
      spec.logvar_hi = logvar_hi;
      e.nets_.emplace_back(spec, root.stream_seed("member-init", static_cast<std::uint64_t>(m)));
      e.member_rngs_.push_back(root.stream("member-train", static_cast<std::uint64_t>(m)));
    }
    return e;
  }

  int size() const { return static_cast<int>(nets_.size()); }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  const NormStats& stats() const { return stats_; }
  void set_stats(NormStats st) { stats_ = std::move(st); }
  std::vector<Mlp>& nets() { return nets_; }

  // Fresh parameters and optimizer state; used by retrain-from-scratch
  // schedules. Stats and trained flag are untouched.
  void reinitialize(std::uint64_t seed) {
    Rng root(seed);
    for (std::size_t m = 0; m < nets_.size(); ++m) {
      nets_[m].reinitialize(root.stream_seed("member-init", m));
      member_rngs_[m] = root.stream("member-train", m);
    }
    opts_.clear();
  }

  std::vector<GaussianDiag> predict_all(std::span<const double> s,
                                        std::span<const double> a) const {
    require_trained();
    const auto x = encode(s, a);
    std::vector<GaussianDiag> out;
    out.reserve(nets_.size());
    for (const auto& net : nets_) {
      GaussianDiag nd = net.forward_gaussian(x);
      GaussianDiag g;
      g.mean.resize(static_cast<std::size_t>(state_dim_));
      g.var.resize(static_cast<std::size_t>(state_dim_));
      for (int k = 0; k < state_dim_; ++k) {
        const double sd = stats_.delta_std[static_cast<std::size_t>(k)];
        g.mean[static_cast<std::size_t>(k)] =
            s[static_cast<std::size_t>(k)] + stats_.delta_mean[static_cast<std::size_t>(k)] +
            sd * nd.mean[static_cast<std::size_t>(k)];
        g.var[static_cast<std::size_t>(k)] = sd * sd * nd.var[static_cast<std::size_t>(k)];
      }
      out.push_back(std::move(g));
    }
    return out;
  }

  std::vector<double> sample_next(std::span<const double> s, std::span<const double> a,
                                  int member, Rng& rng) const {
    require_trained();
    if (member < 0 || member >= size())
      throw ValidationError("GaussianEnsemble: member index out of range");
    const auto x = encode(s, a);
    const GaussianDiag nd = nets_[static_cast<std::size_t>(member)].forward_gaussian(x);
    std::vector<double> next(static_cast<std::size_t>(state_dim_));
    for (int k = 0; k < state_dim_; ++k) {
      const double z = rng.normal();
      const double delta_norm = nd.mean[static_cast<std::size_t>(k)] +
                                std::sqrt(nd.var[static_cast<std::size_t>(k)]) * z;
      next[static_cast<std::size_t>(k)] =
          s[static_cast<std::size_t>(k)] + stats_.delta_mean[static_cast<std::size_t>(k)] +
          stats_.delta_std[static_cast<std::size_t>(k)] * delta_norm;
    }
    return next;
  }

  void train(const ContinuousHistory& d, const EnsembleTrainConfig& cfg) {
    if (d.empty()) throw ValidationError("GaussianEnsemble::train: empty history");
    stats_ = d.compute_stats(state_dim_, action_dim_);
    const auto trans = d.transitions();
    std::vector<std::vector<double>> inputs(trans.size());
    std::vector<std::vector<double>> targets(trans.size());
    for (std::size_t i = 0; i < trans.size(); ++i) {
      inputs[i] = encode(trans[i].s, trans[i].a);
      targets[i].resize(static_cast<std::size_t>(state_dim_));
      for (int k = 0; k < state_dim_; ++k) {
        const double delta = trans[i].s_next[static_cast<std::size_t>(k)] -
                             trans[i].s[static_cast<std::size_t>(k)];
        targets[i][static_cast<std::size_t>(k)] =
            (delta - stats_.delta_mean[static_cast<std::size_t>(k)]) /
            stats_.delta_std[static_cast<std::size_t>(k)];
      }
    }
    if (opts_.empty()) opts_.assign(nets_.size(), Optimizer(cfg.opt));
    detail::run_members_parallel(size(), cfg.threads, [&](int m) {
      auto& net = nets_[static_cast<std::size_t>(m)];
      auto& rng = member_rngs_[static_cast<std::size_t>(m)];
      Optimizer& opt = opts_[static_cast<std::size_t>(m)];
      std::size_t steps = 0;
      const auto order = detail::training_order(trans.size(), cfg, rng, &steps);
      const std::size_t bs = std::min<std::size_t>(cfg.batch_size, trans.size());
      std::vector<std::vector<double>> X;
      std::vector<std::vector<double>> Y;
      std::size_t pos = 0;
      for (std::size_t it = 0; it < steps; ++it) {
        const std::size_t take = std::min(bs, order.size() - pos);
        if (take == 0) break;
        X.resize(take);
        Y.resize(take);
        for (std::size_t b = 0; b < take; ++b) {
          X[b] = inputs[order[pos + b]];
          Y[b] = targets[order[pos + b]];
        }
        pos += take;
        try {
          net.train_step(X, Y, LossKind::nll_gaussian, opt);
        } catch (const NumericError& e) {
          throw NumericError("member " + std::to_string(m) + ": " + e.what());
        }
      }
    });
    trained_ = true;
  }

  // Image of the netcore variance upper bound under de-normalization; the
  // tempering bound must live in the same units as predict_all output.
  std::vector<double> variance_upper_denormalized() const {
    std::vector<double> up(static_cast<std::size_t>(state_dim_));
    for (int k = 0; k < state_dim_; ++k) {
      const double sd = stats_.delta_std[static_cast<std::size_t>(k)];
      up[static_cast<std::size_t>(k)] =
          sd * sd * std::exp(nets_.front().spec().logvar_hi);
    }
    return up;
  }

  // Checkpoint layout: "MXENS001", u32 mode = 1, u32 N, u32 state_dim,
  // u32 action_dim, f64 normalization stats (6 blocks in declaration order),
  // then a netcore block per member.
  void save(std::ostream& os) const {
    os.write("MXENS001", 8);
    const std::uint32_t mode = 1;
    const std::uint32_t n = static_cast<std::uint32_t>(size());
    const std::uint32_t sd = static_cast<std::uint32_t>(state_dim_);
    const std::uint32_t ad = static_cast<std::uint32_t>(action_dim_);
    os.write(reinterpret_cast<const char*>(&mode), 4);
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(&sd), 4);
    os.write(reinterpret_cast<const char*>(&ad), 4);
    for (const auto* block : stat_blocks())
      os.write(reinterpret_cast<const char*>(block->data()),
               static_cast<std::streamsize>(block->size() * sizeof(double)));
    for (const auto& net : nets_) net.save(os);
    if (!os) throw StateError("GaussianEnsemble::save: stream failure");
  }

  static GaussianEnsemble load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MXENS001", 8) != 0)
      throw ValidationError("GaussianEnsemble::load: bad magic");
    std::uint32_t mode = 0, n = 0, sd = 0, ad = 0;
    is.read(reinterpret_cast<char*>(&mode), 4);
    is.read(reinterpret_cast<char*>(&n), 4);
    is.read(reinterpret_cast<char*>(&sd), 4);
    is.read(reinterpret_cast<char*>(&ad), 4);
    if (!is || mode != 1) throw ValidationError("GaussianEnsemble::load: bad header");
    GaussianEnsemble e(static_cast<int>(sd), static_cast<int>(ad));
    for (auto* block : e.stat_blocks())
      is.read(reinterpret_cast<char*>(block->data()),
              static_cast<std::streamsize>(block->size() * sizeof(double)));
    for (std::uint32_t m = 0; m < n; ++m) {
      e.nets_.push_back(Mlp::load(is));
      e.member_rngs_.push_back(Rng(0).stream("member-train", m));
    }
    if (!is) throw ValidationError("GaussianEnsemble::load: truncated stream");
    e.trained_ = true;
    return e;
  }

  std::vector<double> encode(std::span<const double> s, std::span<const double> a) const {
    if (static_cast<int>(s.size()) != state_dim_ || static_cast<int>(a.size()) != action_dim_)
      throw ValidationError("GaussianEnsemble: state/action dimension mismatch");
    std::vector<double> x(static_cast<std::size_t>(state_dim_ + action_dim_));
    for (int k = 0; k < state_dim_; ++k)
      x[static_cast<std::size_t>(k)] = (s[static_cast<std::size_t>(k)] -
                                        stats_.state_mean[static_cast<std::size_t>(k)]) /
                                       stats_.state_std[static_cast<std::size_t>(k)];
    for (int k = 0; k < action_dim_; ++k)
      x[static_cast<std::size_t>(state_dim_ + k)] =
          (a[static_cast<std::size_t>(k)] - stats_.action_mean[static_cast<std::size_t>(k)]) /
          stats_.action_std[static_cast<std::size_t>(k)];
    return x;
  }

 private:
  GaussianEnsemble(int state_dim, int action_dim)
      : state_dim_(state_dim), action_dim_(action_dim),
        stats_(NormStats::identity(state_dim, action_dim)) {
    if (state_dim < 1 || action_dim < 1)
      throw ValidationError("GaussianEnsemble: dims must be positive");
  }

  std::array<std::vector<double>*, 6> stat_blocks() {
    return {&stats_.state_mean, &stats_.state_std, &stats_.action_mean,
            &stats_.action_std, &stats_.delta_mean, &stats_.delta_std};
  }
  std::array<const std::vector<double>*, 6> stat_blocks() const {
    return {&stats_.state_mean, &stats_.state_std, &stats_.action_mean,
            &stats_.action_std, &stats_.delta_mean, &stats_.delta_std};
  }

  void require_trained() const {
    if (!trained_) throw StateError("GaussianEnsemble: predict on untrained ensemble");
  }

  int state_dim_;
  int action_dim_;
  std::uint64_t seed_ = 0;
  NormStats stats_;
  std::vector<Mlp> nets_;
  std::vector<Rng> member_rngs_;
  std::vector<Optimizer> opts_;
  bool trained_ = false;
};

}  // namespace maxplore
