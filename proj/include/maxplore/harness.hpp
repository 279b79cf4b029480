#pragma once

// Experiment driver and orchestration: run configuration (JSON round-trip),
// the exploration loop for every agent kind, seeded sub-streams, per-episode
// metrics with incremental flushing, sweeps with percentile aggregation, and
// the 2-d coverage map for continuous runs.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "maxplore/baselines.hpp"
#include "maxplore/common.hpp"
#include "maxplore/envs.hpp"
#include "maxplore/exploration.hpp"
#include "maxplore/models.hpp"
#include "maxplore/planners.hpp"

namespace maxplore {

enum class AgentKind {
  max_agent,
  eb,
  boot,
  random_agent,
  tvax,
  reactive_jdrx,
  reactive_perx,
  reactive_tvax,
};

inline std::string to_string(AgentKind a) {
  switch (a) {
    case AgentKind::max_agent: return "max";
    case AgentKind::eb: return "eb";
    case AgentKind::boot: return "boot";
    case AgentKind::random_agent: return "random";
    case AgentKind::tvax: return "tvax";
    case AgentKind::reactive_jdrx: return "reactive-jdrx";
    case AgentKind::reactive_perx: return "reactive-perx";
    case AgentKind::reactive_tvax: return "reactive-tvax";
  }
  return "max";
}

inline AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "max") return AgentKind::max_agent;
  if (s == "eb") return AgentKind::eb;
  if (s == "boot") return AgentKind::boot;
  if (s == "random") return AgentKind::random_agent;
  if (s == "tvax") return AgentKind::tvax;
  if (s == "reactive-jdrx") return AgentKind::reactive_jdrx;
  if (s == "reactive-perx") return AgentKind::reactive_perx;
  if (s == "reactive-tvax") return AgentKind::reactive_tvax;
  throw ValidationError("unknown agent kind: " + s);
}

struct EnvSpec {
  enum class Kind { chain, mountain_car };
  Kind kind = Kind::chain;
  ChainConfig chain;
  MountainCarConfig mcar;
};

struct EnsembleSpec {
  int members = 3;
  std::vector<int> hidden = {64, 64};
  bool tabular = false;   // discrete reference mode
  double laplace = 1e-3;
  double lambda = 0.1;    // variance tempering for the jrd utility
  double logvar_lo = std::log(1e-8);
  double logvar_hi = 0.0;
};

struct ScheduleSpec {
  int warmup_episodes = 3;        // discrete
  int warmup_steps = 256;         // continuous
  int train_every_steps = 1;      // discrete: every step; continuous: every 25
  int iterations_per_train = 1;   // discrete minibatch steps per training call
  int post_warmup_iterations = 150;  // discrete, right after warm-up
  int episode_scratch_iterations = 250;  // discrete: fresh-init retrain at episode start
  int scratch_every_episodes = 1;        // cadence of the fresh-init retrain
  int epochs_per_train = 50;      // continuous
  bool retrain_from_scratch = false;  // continuous: true
  int batch_size = 64;
  OptimizerConfig opt{OptimizerKind::adam, 1e-3, 1e-6, 0.0};
  int threads = 1;
};

enum class ChainSolver { exact, mcts };

struct PlannerSpec {
  ChainSolver chain_solver = ChainSolver::exact;
  MctsConfig mcts;                // iterations 25, trajectories 5
  int mcts_horizon_cap = 200;
  ShootingConfig shooting;
  int reactive_candidates = 32;
};

struct RunConfig {
  EnvSpec env;
  AgentKind agent = AgentKind::max_agent;
  EnsembleSpec ensemble;
  ScheduleSpec schedule;
  PlannerSpec planner;
  int episodes = 60;        // discrete runs
  int total_steps = 800;    // continuous exploration steps after warm-up
  int coverage_bins = 20;
  std::uint64_t master_seed = 0;
  std::string out_dir;

  // Paper-style chain setup: 3 models, MCTS 25x5, 3 warm-up episodes.
  static RunConfig chain_defaults(int length, bool trap, AgentKind agent) {
    RunConfig cfg;
    cfg.env.kind = EnvSpec::Kind::chain;
    cfg.env.chain.length = length;
    cfg.env.chain.trap = trap;
    cfg.agent = agent;
    cfg.ensemble.members = 3;
    cfg.ensemble.hidden = {64, 64, 64, 64};
    cfg.schedule.warmup_episodes = 3;
    cfg.schedule.train_every_steps = 1;
    cfg.schedule.iterations_per_train = 1;
    cfg.schedule.post_warmup_iterations = 150;
    cfg.schedule.episode_scratch_iterations = 250;
    cfg.schedule.batch_size = 64;
    cfg.schedule.opt = OptimizerConfig{OptimizerKind::adam, 1e-3, 1e-6, 0.0};
    cfg.episodes = 60;
    return cfg;
  }

  static RunConfig mcar_defaults(AgentKind agent) {
    RunConfig cfg;
    cfg.env.kind = EnvSpec::Kind::mountain_car;
    cfg.agent = agent;
    cfg.ensemble.members = 32;
    cfg.ensemble.hidden = {32, 32};
    cfg.schedule.warmup_steps = 256;
    cfg.schedule.train_every_steps = 25;
    cfg.schedule.epochs_per_train = 50;
    cfg.schedule.retrain_from_scratch = true;
    cfg.schedule.batch_size = 256;
    cfg.schedule.opt = OptimizerConfig{OptimizerKind::adam, 1e-3, 1e-6, 0.0};
    cfg.planner.shooting.candidates = 64;
    cfg.planner.shooting.horizon = 12;
    cfg.planner.shooting.cem_iterations = 2;
    cfg.total_steps = 800;
    return cfg;
  }
};

// ---- JSON round-trip -------------------------------------------------------

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"env",
       {{"kind", c.env.kind == EnvSpec::Kind::chain ? "chain" : "mountain_car"},
        {"length", c.env.chain.length},
        {"trap", c.env.chain.trap},
        {"noise_std", c.env.mcar.noise_std},
        {"episode_horizon", c.env.mcar.episode_horizon},
        {"noise_on_dynamics", c.env.mcar.noise_on_dynamics}}},
      {"agent", to_string(c.agent)},
      {"ensemble",
       {{"members", c.ensemble.members},
        {"hidden", c.ensemble.hidden},
        {"tabular", c.ensemble.tabular},
        {"laplace", c.ensemble.laplace},
        {"lambda", c.ensemble.lambda},
        {"logvar_lo", c.ensemble.logvar_lo},
        {"logvar_hi", c.ensemble.logvar_hi}}},
      {"schedule",
       {{"warmup_episodes", c.schedule.warmup_episodes},
        {"warmup_steps", c.schedule.warmup_steps},
        {"train_every_steps", c.schedule.train_every_steps},
        {"iterations_per_train", c.schedule.iterations_per_train},
        {"post_warmup_iterations", c.schedule.post_warmup_iterations},
        {"episode_scratch_iterations", c.schedule.episode_scratch_iterations},
        {"scratch_every_episodes", c.schedule.scratch_every_episodes},
        {"epochs_per_train", c.schedule.epochs_per_train},
        {"retrain_from_scratch", c.schedule.retrain_from_scratch},
        {"batch_size", c.schedule.batch_size},
        {"optimizer", c.schedule.opt.kind == OptimizerKind::adam ? "adam" : "rmsprop"},
        {"learning_rate", c.schedule.opt.learning_rate},
        {"weight_decay", c.schedule.opt.weight_decay},
        {"grad_clip", c.schedule.opt.grad_clip},
        {"threads", c.schedule.threads}}},
      {"planner",
       {{"chain_solver", c.planner.chain_solver == ChainSolver::exact ? "exact" : "mcts"},
        {"mcts_iterations", c.planner.mcts.iterations},
        {"mcts_trajectories", c.planner.mcts.trajectories},
        {"mcts_horizon_cap", c.planner.mcts_horizon_cap},
        {"mcts_expand_full_path", c.planner.mcts.expand_full_path},
        {"shooting_candidates", c.planner.shooting.candidates},
        {"shooting_horizon", c.planner.shooting.horizon},
        {"cem_iterations", c.planner.shooting.cem_iterations},
        {"elite_fraction", c.planner.shooting.elite_fraction},
        {"shooting_rollouts", c.planner.shooting.n_rollouts},
        {"reactive_candidates", c.planner.reactive_candidates}}},
      {"episodes", c.episodes},
      {"total_steps", c.total_steps},
      {"coverage_bins", c.coverage_bins},
      {"seed", c.master_seed},
      {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  auto get = [](const nlohmann::json& o, const char* key, auto& field) {
    if (o.contains(key)) o.at(key).get_to(field);
  };
  if (j.contains("env")) {
    const auto& e = j.at("env");
    std::string kind = c.env.kind == EnvSpec::Kind::chain ? "chain" : "mountain_car";
    get(e, "kind", kind);
    if (kind == "chain")
      c.env.kind = EnvSpec::Kind::chain;
    else if (kind == "mountain_car" || kind == "mcar")
      c.env.kind = EnvSpec::Kind::mountain_car;
    else
      throw ValidationError("config: unknown env kind " + kind);
    get(e, "length", c.env.chain.length);
    get(e, "trap", c.env.chain.trap);
    get(e, "noise_std", c.env.mcar.noise_std);
    get(e, "episode_horizon", c.env.mcar.episode_horizon);
    get(e, "noise_on_dynamics", c.env.mcar.noise_on_dynamics);
  }
  if (j.contains("agent")) c.agent = agent_kind_from_string(j.at("agent").get<std::string>());
  if (j.contains("ensemble")) {
    const auto& e = j.at("ensemble");
    get(e, "members", c.ensemble.members);
    get(e, "hidden", c.ensemble.hidden);
    get(e, "tabular", c.ensemble.tabular);
    get(e, "laplace", c.ensemble.laplace);
    get(e, "lambda", c.ensemble.lambda);
    get(e, "logvar_lo", c.ensemble.logvar_lo);
    get(e, "logvar_hi", c.ensemble.logvar_hi);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    get(s, "warmup_episodes", c.schedule.warmup_episodes);
    get(s, "warmup_steps", c.schedule.warmup_steps);
    get(s, "train_every_steps", c.schedule.train_every_steps);
    get(s, "iterations_per_train", c.schedule.iterations_per_train);
    get(s, "post_warmup_iterations", c.schedule.post_warmup_iterations);
    get(s, "episode_scratch_iterations", c.schedule.episode_scratch_iterations);
    get(s, "scratch_every_episodes", c.schedule.scratch_every_episodes);
    get(s, "epochs_per_train", c.schedule.epochs_per_train);
    get(s, "retrain_from_scratch", c.schedule.retrain_from_scratch);
    get(s, "batch_size", c.schedule.batch_size);
    std::string opt = c.schedule.opt.kind == OptimizerKind::adam ? "adam" : "rmsprop";
    get(s, "optimizer", opt);
    c.schedule.opt.kind = opt == "adam" ? OptimizerKind::adam : OptimizerKind::rmsprop_momentum;
    get(s, "learning_rate", c.schedule.opt.learning_rate);
    get(s, "weight_decay", c.schedule.opt.weight_decay);
    get(s, "grad_clip", c.schedule.opt.grad_clip);
    get(s, "threads", c.schedule.threads);
  }
  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    std::string solver = c.planner.chain_solver == ChainSolver::exact ? "exact" : "mcts";
    get(p, "chain_solver", solver);
    if (solver == "exact")
      c.planner.chain_solver = ChainSolver::exact;
    else if (solver == "mcts")
      c.planner.chain_solver = ChainSolver::mcts;
    else
      throw ValidationError("config: unknown chain solver " + solver);
    get(p, "mcts_iterations", c.planner.mcts.iterations);
    get(p, "mcts_trajectories", c.planner.mcts.trajectories);
    get(p, "mcts_expand_full_path", c.planner.mcts.expand_full_path);
    get(p, "mcts_horizon_cap", c.planner.mcts_horizon_cap);
    get(p, "shooting_candidates", c.planner.shooting.candidates);
    get(p, "shooting_horizon", c.planner.shooting.horizon);
    get(p, "cem_iterations", c.planner.shooting.cem_iterations);
    get(p, "elite_fraction", c.planner.shooting.elite_fraction);
    get(p, "shooting_rollouts", c.planner.shooting.n_rollouts);
    get(p, "reactive_candidates", c.planner.reactive_candidates);
  }
  get(j, "episodes", c.episodes);
  get(j, "total_steps", c.total_steps);
  get(j, "coverage_bins", c.coverage_bins);
  get(j, "seed", c.master_seed);
  get(j, "out_dir", c.out_dir);
}

// ---- Records ---------------------------------------------------------------

struct EpisodeRow {
  int episode = 0;      // 1-based, warm-up included
  long env_steps = 0;   // cumulative external steps
  double metric = 0.0;  // explored fraction (chain) / grid coverage (continuous)
  double mean_plan_utility = 0.0;
  double wall_clock_s = 0.0;
};

struct RunSummary {
  double final_metric = 0.0;
  int episodes_to_full = -1;   // first episode at explored fraction 1.0
  double max_position = 0.0;   // continuous runs: best true position reached
  long total_env_steps = 0;
  std::map<std::string, std::uint64_t> sub_seeds;
};

struct RunRecord {
  std::vector<EpisodeRow> rows;
  RunSummary summary;

  // Deterministic payload: everything except wall-clock timing, which is
  // measurement metadata rather than run output.
  std::string canonical_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
      rows_j.push_back({{"episode", r.episode},
                        {"env_steps", r.env_steps},
                        {"metric", r.metric},
                        {"mean_plan_utility", r.mean_plan_utility}});
    nlohmann::json j{{"rows", rows_j},
                     {"summary",
                      {{"final_metric", summary.final_metric},
                       {"episodes_to_full", summary.episodes_to_full},
                       {"max_position", summary.max_position},
                       {"total_env_steps", summary.total_env_steps},
                       {"sub_seeds", summary.sub_seeds}}}};
    return j.dump();
  }
};

// 2-d occupancy grid over [lo, hi] with the fraction of nonempty cells.
struct CoverageGrid {
  int bins = 0;
  std::vector<int> counts;  // row-major, bins x bins
  int nonempty = 0;
  double fraction = 0.0;

  int& at(int i, int k) { return counts[static_cast<std::size_t>(i) * bins + k]; }
  int at(int i, int k) const { return counts[static_cast<std::size_t>(i) * bins + k]; }
};

inline CoverageGrid coverage_map(const ContinuousHistory& d, int bins,
                                 std::array<double, 2> lo = {MountainCarEnv::kPosMin,
                                                             MountainCarEnv::kVelMin},
                                 std::array<double, 2> hi = {MountainCarEnv::kPosMax,
                                                             MountainCarEnv::kVelMax}) {
  if (bins < 1) throw ValidationError("coverage_map: bins must be >= 1");
  CoverageGrid g;
  g.bins = bins;
  g.counts.assign(static_cast<std::size_t>(bins) * bins, 0);
  auto bin_of = [&](double v, int axis) {
    const double t = (v - lo[static_cast<std::size_t>(axis)]) /
                     (hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]);
    int b = static_cast<int>(t * bins);
    return std::min(std::max(b, 0), bins - 1);
  };
  auto add = [&](const std::vector<double>& s) {
    if (s.size() != 2) throw ValidationError("coverage_map: 2-d states required");
    ++g.at(bin_of(s[0], 0), bin_of(s[1], 1));
  };
  for (const auto& t : d.transitions()) {
    add(t.s);
    add(t.s_next);
  }
  for (int c : g.counts)
    if (c > 0) ++g.nonempty;
  g.fraction = static_cast<double>(g.nonempty) / static_cast<double>(bins * bins);
  return g;
}

// Linear-interpolation percentile of an unsorted sample, p in [0, 100].
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw ValidationError("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double rank = (p / 100.0) * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

namespace detail {

class RunOutput {
 public:
  explicit RunOutput(const std::string& dir) : dir_(dir) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    metrics_.open(dir_ + "/metrics.ndjson", std::ios::trunc);
  }

  bool active() const { return !dir_.empty(); }

  void echo_config(const RunConfig& cfg, const std::map<std::string, std::uint64_t>& seeds) {
    if (!active()) return;
    nlohmann::json j = cfg;
    j["sub_seeds"] = seeds;
    std::ofstream f(dir_ + "/config.json", std::ios::trunc);
    f << j.dump(2) << "\n";
  }

  // One line per row, flushed immediately so a crash leaves a valid prefix.
  void write_row(const EpisodeRow& r) {
    if (!active()) return;
    nlohmann::json j{{"episode", r.episode},
                     {"env_steps", r.env_steps},
                     {"metric", r.metric},
                     {"mean_plan_utility", r.mean_plan_utility},
                     {"wall_clock_s", r.wall_clock_s}};
    metrics_ << j.dump() << "\n";
    metrics_.flush();
  }

  void write_summary(const RunSummary& s) {
    if (!active()) return;
    std::ofstream f(dir_ + "/summary.csv", std::ios::trunc);
    f << "final_metric,episodes_to_full,max_position,total_env_steps\n";
    f << s.final_metric << "," << s.episodes_to_full << "," << s.max_position << ","
      << s.total_env_steps << "\n";
  }

  void write_coverage(const CoverageGrid& g) {
    if (!active()) return;
    std::ofstream f(dir_ + "/coverage.csv", std::ios::trunc);
    for (int i = 0; i < g.bins; ++i) {
      for (int k = 0; k < g.bins; ++k) f << (k ? "," : "") << g.at(i, k);
      f << "\n";
    }
  }

  void write_error(const std::string& what) {
    if (!active()) return;
    std::ofstream f(dir_ + "/error.json", std::ios::trunc);
    f << nlohmann::json{{"error", what}}.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::ofstream metrics_;
};

struct Wallclock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

inline EnsembleTrainConfig train_config(const ScheduleSpec& s, bool continuous,
                                        int iterations_override = -1) {
  EnsembleTrainConfig t;
  if (continuous) {
    t.epochs = s.epochs_per_train;
    t.iterations = 0;
  } else {
    t.iterations = iterations_override >= 0 ? iterations_override : s.iterations_per_train;
  }
  t.batch_size = s.batch_size;
  t.opt = s.opt;
  t.threads = s.threads;
  return t;
}

// ---- Chain runs ------------------------------------------------------------

inline RunRecord run_chain(const RunConfig& cfg) {
  const Rng master(cfg.master_seed);
  RunRecord rec;
  rec.summary.sub_seeds = {
      {"env", master.stream_seed("env")},
      {"warmup", master.stream_seed("warmup")},
      {"planner", master.stream_seed("planner")},
      {"ensemble", master.stream_seed("ensemble")},
      {"agent", master.stream_seed("agent")},
  };
  RunOutput out(cfg.out_dir);
  out.echo_config(cfg, rec.summary.sub_seeds);
  Wallclock clock;

  ChainEnv env(cfg.env.chain, master.stream_seed("env"));
  const TransitionTable table = env.transition_table();
  DiscreteHistory hist;
  std::set<std::pair<int, int>> visited;

  Rng warmup_rng = master.stream("warmup");
  Rng planner_rng = master.stream("planner");

  const int L = cfg.env.chain.length;
  std::optional<DiscreteEnsemble> ens;
  std::optional<EbAgent> eb;
  std::optional<BootAgent> boot;
  switch (cfg.agent) {
    case AgentKind::max_agent:
      if (cfg.ensemble.tabular)
        ens = DiscreteEnsemble::tabular(L, 2, cfg.ensemble.members, cfg.ensemble.laplace);
      else
        ens = DiscreteEnsemble::mlp(L, 2, cfg.ensemble.members, cfg.ensemble.hidden,
                                    master.stream_seed("ensemble"));
      break;
    case AgentKind::eb: {
      // table-tuned setup: 3x64 tanh net, rmsprop momentum 0.9, huber with
      // clip 5, bonus 0.1, replay 256, sync every 256 updates
      QAgentConfig qc;
      qc.repr = QRepr::mlp;
      qc.hidden = {64, 64, 64};
      qc.opt = OptimizerConfig{OptimizerKind::rmsprop_momentum, 1e-2, 0.0, 5.0};
      qc.discount = 0.975;
      qc.batch_size = 32;
      qc.target_sync_period = 256;
      qc.replay_capacity = 256;
      eb.emplace(qc, 0.1, L, 2, master.stream_seed("agent"));
      break;
    }
    case AgentKind::boot: {
      // 10 thermometer-encoded heads of one 32-wide layer, trained 64
      // iterations after each episode on the full shared replay
      QAgentConfig qc;
      qc.repr = QRepr::mlp;
      qc.hidden = {32};
      qc.opt = OptimizerConfig{OptimizerKind::rmsprop_momentum, 1e-4, 0.0, 5.0};
      qc.discount = 0.95;
      qc.batch_size = 32;
      qc.target_sync_period = 16;
      qc.replay_capacity = 1u << 30;  // full history
      boot.emplace(qc, 10, 64, L, 2, master.stream_seed("agent"));
      break;
    }
    case AgentKind::random_agent:
      break;
    default:
      throw ValidationError("run_exploration: agent " + to_string(cfg.agent) +
                            " is not available on the chain");
  }

  auto note = [&](const DiscreteTransition& t) {
    hist.push(t);
    visited.insert({t.s, t.a});
  };

  auto finish_episode = [&](int episode, double mean_utility) {
    EpisodeRow row;
    row.episode = episode;
    row.env_steps = static_cast<long>(env.total_steps());
    row.metric = explored_fraction(table, visited);
    row.mean_plan_utility = mean_utility;
    row.wall_clock_s = clock.seconds();
    rec.rows.push_back(row);
    out.write_row(row);
    if (rec.summary.episodes_to_full < 0 && row.metric >= 1.0)
      rec.summary.episodes_to_full = episode;
  };

  const EnsembleTrainConfig step_train = train_config(cfg.schedule, false);

  std::uint64_t scratch_index = 0;
  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    const bool warmup = episode <= cfg.schedule.warmup_episodes;
    double utility_sum = 0.0;
    int utility_count = 0;

    // fresh-initialization retrain restores out-of-sample member diversity
    const int cadence = std::max(cfg.schedule.scratch_every_episodes, 1);
    if (cfg.agent == AgentKind::max_agent && !warmup && !cfg.ensemble.tabular &&
        cfg.schedule.episode_scratch_iterations > 0 &&
        (episode - cfg.schedule.warmup_episodes - 1) % cadence == 0) {
      ens->reinitialize(master.stream_seed("episode-scratch", scratch_index++));
      ens->train(hist,
                 train_config(cfg.schedule, false, cfg.schedule.episode_scratch_iterations));
    }

    if (cfg.agent == AgentKind::boot) {
      DiscreteHistory ep = boot->run_episode(env, warmup);
      for (const auto& t : ep.transitions()) note(t);
      finish_episode(episode, 0.0);
      continue;
    }

    env.reset();
    while (!env.done()) {
      if (cfg.agent == AgentKind::eb) {
        note(eb->step(env, warmup));
        continue;
      }
      if (warmup || cfg.agent == AgentKind::random_agent) {
        const int s = env.state();
        const int a = warmup ? warmup_rng.uniform_int(2) : planner_rng.uniform_int(2);
        const auto res = env.step(a);
        note({s, a, res.next});
        continue;
      }
      // active exploration
      const int remaining = env.episode_length() - env.steps_in_episode();
      const int horizon = std::min(cfg.planner.mcts_horizon_cap, remaining);
      DiscreteExplorationMdp mdp(*ens, UtilityKind::jsd_categorical, env.state(), horizon);
      const std::uint64_t steps_before = env.total_steps();
      double plan_value = 0.0;
      int a = 0;
      if (cfg.planner.chain_solver == ChainSolver::exact) {
        a = exact_plan(mdp, planner_rng, &plan_value);
      } else {
        MctsConfig mc = cfg.planner.mcts;
        mc.horizon = horizon;
        a = mcts_search(mdp, mc, planner_rng, &plan_value);
      }
      if (env.total_steps() != steps_before)
        throw StateError("planner touched the external environment");
      utility_sum += plan_value / horizon;
      ++utility_count;
      const int s = env.state();
      const auto res = env.step(a);
      note({s, a, res.next});
      if ((env.total_steps() %
           static_cast<std::uint64_t>(std::max(cfg.schedule.train_every_steps, 1))) == 0)
        ens->train(hist, step_train);
    }

    if (cfg.agent == AgentKind::max_agent && warmup &&
        episode == cfg.schedule.warmup_episodes) {
      // one-off training right after the random warm-up
      ens->train(hist, train_config(cfg.schedule, false, cfg.schedule.post_warmup_iterations));
    }
    finish_episode(episode, utility_count ? utility_sum / utility_count : 0.0);
  }

  rec.summary.final_metric = rec.rows.empty() ? 0.0 : rec.rows.back().metric;
  rec.summary.total_env_steps = static_cast<long>(env.total_steps());
  out.write_summary(rec.summary);
  return rec;
}

// ---- Mountain-car runs -----------------------------------------------------

inline RunRecord run_mcar(const RunConfig& cfg) {
  const Rng master(cfg.master_seed);
  RunRecord rec;
  rec.summary.sub_seeds = {
      {"env", master.stream_seed("env")},
      {"warmup", master.stream_seed("warmup")},
      {"planner", master.stream_seed("planner")},
      {"ensemble", master.stream_seed("ensemble")},
      {"noise", master.stream_seed("noise")},
  };
  RunOutput out(cfg.out_dir);
  out.echo_config(cfg, rec.summary.sub_seeds);
  Wallclock clock;

  MountainCarEnv env(cfg.env.mcar, master.stream_seed("env"));
  ContinuousHistory hist;

  Rng warmup_rng = master.stream("warmup");
  Rng planner_rng = master.stream("planner");

  const bool needs_ensemble = cfg.agent != AgentKind::random_agent;
  std::optional<GaussianEnsemble> ens;
  if (needs_ensemble)
    ens = GaussianEnsemble::mlp(2, 1, cfg.ensemble.members, cfg.ensemble.hidden,
                                master.stream_seed("ensemble"), Activation::swish,
                                cfg.ensemble.logvar_lo, cfg.ensemble.logvar_hi);

  UtilityKind kind = UtilityKind::jrd_gaussian;
  bool active_planning = false;
  switch (cfg.agent) {
    case AgentKind::max_agent: kind = UtilityKind::jrd_gaussian; active_planning = true; break;
    case AgentKind::tvax: kind = UtilityKind::traj_variance; active_planning = true; break;
    case AgentKind::reactive_jdrx: kind = UtilityKind::jrd_gaussian; break;
    case AgentKind::reactive_perx: kind = UtilityKind::pred_error; break;
    case AgentKind::reactive_tvax: kind = UtilityKind::traj_variance; break;
    case AgentKind::random_agent: break;
    default:
      throw ValidationError("run_exploration: agent " + to_string(cfg.agent) +
                            " is not available on mountain car");
  }

  std::vector<double> obs = env.reset();
  rec.summary.max_position = env.true_state()[0];
  int episode = 1;
  double utility_sum = 0.0;
  int utility_count = 0;

  auto finish_episode = [&]() {
    EpisodeRow row;
    row.episode = episode;
    row.env_steps = static_cast<long>(env.total_steps());
    row.metric = coverage_map(hist, cfg.coverage_bins).fraction;
    row.mean_plan_utility = utility_count ? utility_sum / utility_count : 0.0;
    row.wall_clock_s = clock.seconds();
    rec.rows.push_back(row);
    out.write_row(row);
    utility_sum = 0.0;
    utility_count = 0;
    ++episode;
  };

  auto do_step = [&](double action) {
    const auto res = env.step(action);
    ContinuousTransition t;
    t.s = obs;
    t.a = {action};
    t.s_next = res.obs;
    hist.push(std::move(t));
    obs = res.obs;
    rec.summary.max_position = std::max(rec.summary.max_position, env.true_state()[0]);
    if (res.done) {
      finish_episode();
      obs = env.reset();
    }
  };

  const int total = cfg.schedule.warmup_steps + cfg.total_steps;
  const EnsembleTrainConfig tc = train_config(cfg.schedule, true);
  std::vector<std::vector<double>> warm_start;
  std::uint64_t retrain_index = 0;

  for (int step = 0; step < total; ++step) {
    const bool in_warmup = step < cfg.schedule.warmup_steps;
    if (in_warmup) {
      do_step(warmup_rng.uniform(MountainCarEnv::kActMin, MountainCarEnv::kActMax));
      continue;
    }
    const int explore_step = step - cfg.schedule.warmup_steps;
    if (needs_ensemble &&
        explore_step % std::max(cfg.schedule.train_every_steps, 1) == 0) {
      if (cfg.schedule.retrain_from_scratch)
        ens->reinitialize(master.stream_seed("retrain", retrain_index++));
      ens->train(hist, tc);
    }
    if (cfg.agent == AgentKind::random_agent) {
      do_step(planner_rng.uniform(MountainCarEnv::kActMin, MountainCarEnv::kActMax));
      continue;
    }

    const int remaining = env.episode_length() - env.steps_in_episode();
    const int horizon = std::max(1, std::min(cfg.planner.shooting.horizon, remaining));
    ContinuousExplorationMdp mdp(*ens, kind, cfg.ensemble.lambda, obs, horizon,
                                 {MountainCarEnv::kActMin}, {MountainCarEnv::kActMax});
    double action = 0.0;
    const std::uint64_t steps_before = env.total_steps();
    if (active_planning) {
      ShootingConfig sc = cfg.planner.shooting;
      sc.horizon = horizon;
      std::vector<std::vector<double>> best_seq;
      double plan_value = 0.0;
      const auto first = shooting_plan(mdp, sc, planner_rng,
                                       std::span<const std::vector<double>>(warm_start),
                                       &best_seq, &plan_value);
      action = first[0];
      utility_sum += plan_value / horizon;
      ++utility_count;
      // shift-by-one warm start for the next receding-horizon call
      warm_start.assign(best_seq.begin() + 1, best_seq.end());
      if (!best_seq.empty()) warm_start.push_back(best_seq.back());
    } else {
      // reactive: score single actions under the current ensemble only
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < cfg.planner.reactive_candidates; ++c) {
        const double cand =
            planner_rng.uniform(MountainCarEnv::kActMin, MountainCarEnv::kActMax);
        double score = 0.0;
        if (kind == UtilityKind::traj_variance) {
          const std::vector<std::vector<double>> plan{{cand}};
          score = mdp.evaluate_plan(std::span<const std::vector<double>>(plan), 1, planner_rng);
        } else {
          score = mdp.utility(obs, std::vector<double>{cand});
        }
        if (score > best_score) {
          best_score = score;
          action = cand;
        }
      }
      utility_sum += best_score;
      ++utility_count;
    }
    if (env.total_steps() != steps_before)
      throw StateError("planner touched the external environment");
    do_step(action);
  }
  if (env.steps_in_episode() > 0) finish_episode();

  rec.summary.final_metric = coverage_map(hist, cfg.coverage_bins).fraction;
  rec.summary.total_env_steps = static_cast<long>(env.total_steps());
  out.write_summary(rec.summary);
  out.write_coverage(coverage_map(hist, cfg.coverage_bins));
  return rec;
}

}  // namespace detail

// Algorithm driver: warm-up with random actions, then the plan / act /
// record / retrain loop. Reactive agents skip planning and score candidate
// actions by the utility of current predictions alone.
inline RunRecord run_exploration(const RunConfig& cfg) {
  detail::RunOutput guard(cfg.out_dir);
  try {
    switch (cfg.env.kind) {
      case EnvSpec::Kind::chain: return detail::run_chain(cfg);
      case EnvSpec::Kind::mountain_car: return detail::run_mcar(cfg);
    }
    throw ValidationError("run_exploration: unknown environment kind");
  } catch (const std::exception& e) {
    guard.write_error(e.what());
    throw;
  }
}

// ---- Sweeps ----------------------------------------------------------------

struct AggregateRow {
  int episode = 0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

struct SweepResult {
  std::vector<std::optional<RunRecord>> records;  // nullopt on failure
  std::vector<std::string> errors;                // empty string when ok
  std::vector<AggregateRow> aggregate;
  int completed = 0;
};

inline SweepResult run_sweep(const std::vector<RunConfig>& cfgs, int parallelism) {
  if (cfgs.empty()) throw ValidationError("run_sweep: no configs");
  SweepResult result;
  result.records.resize(cfgs.size());
  result.errors.assign(cfgs.size(), "");

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < cfgs.size(); i = next.fetch_add(1)) {
      try {
        result.records[i] = run_exploration(cfgs[i]);
      } catch (const std::exception& e) {
        result.errors[i] = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(cfgs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::size_t min_rows = std::numeric_limits<std::size_t>::max();
  for (const auto& r : result.records) {
    if (r.has_value()) {
      ++result.completed;
      min_rows = std::min(min_rows, r->rows.size());
    }
  }
  if (result.completed == 0) return result;
  for (std::size_t i = 0; i < min_rows; ++i) {
    std::vector<double> metrics;
    for (const auto& r : result.records)
      if (r.has_value()) metrics.push_back(r->rows[i].metric);
    AggregateRow a;
    a.episode = static_cast<int>(i) + 1;
    a.median = percentile(metrics, 50.0);
    a.p25 = percentile(metrics, 25.0);
    a.p75 = percentile(metrics, 75.0);
    result.aggregate.push_back(a);
  }
  return result;
}

// One sweep group: a resolved config replicated over seeds.
struct SweepGroup {
  std::string name;
  std::vector<RunConfig> runs;
};

// Sweep file schema: {"base": <run config>, "vary": {<dotted.path>: [values]},
// "seeds": n, "seed_base": s}. Groups are the cartesian product of the vary
// axes; each group runs `seeds` master seeds starting at seed_base.
inline std::vector<SweepGroup> expand_sweep(const nlohmann::json& spec) {
  nlohmann::json base = spec.contains("base") ? spec.at("base") : nlohmann::json::object();
  const int seeds = spec.contains("seeds") ? spec.at("seeds").get<int>() : 1;
  const std::uint64_t seed_base =
      spec.contains("seed_base") ? spec.at("seed_base").get<std::uint64_t>() : 0;
  if (seeds < 1) throw ValidationError("expand_sweep: seeds must be >= 1");

  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  if (spec.contains("vary")) {
    for (const auto& [key, values] : spec.at("vary").items()) {
      if (!values.is_array() || values.empty())
        throw ValidationError("expand_sweep: vary values must be non-empty arrays");
      axes.emplace_back(key, std::vector<nlohmann::json>(values.begin(), values.end()));
    }
  }

  auto set_path = [](nlohmann::json& j, const std::string& dotted, const nlohmann::json& v) {
    nlohmann::json* cur = &j;
    std::size_t pos = 0;
    while (true) {
      const std::size_t dot = dotted.find('.', pos);
      const std::string key = dotted.substr(pos, dot - pos);
      if (dot == std::string::npos) {
        (*cur)[key] = v;
        return;
      }
      cur = &(*cur)[key];
      pos = dot + 1;
    }
  };

  std::vector<SweepGroup> groups;
  std::vector<std::size_t> index(axes.size(), 0);
  while (true) {
    nlohmann::json j = base;
    std::string name;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_path(j, axes[a].first, axes[a].second[index[a]]);
      if (!name.empty()) name += ",";
      const std::string short_key = axes[a].first.substr(axes[a].first.rfind('.') + 1);
      name += short_key + "=" + axes[a].second[index[a]].dump();
    }
    if (name.empty()) name = "base";
    SweepGroup g;
    g.name = name;
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg;
      from_json(j, cfg);
      cfg.master_seed = seed_base + static_cast<std::uint64_t>(s);
      g.runs.push_back(cfg);
    }
    groups.push_back(std::move(g));
    // odometer increment
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++index[a] < axes[a].second.size()) break;
      index[a] = 0;
    }
    if (axes.empty() || a == axes.size()) break;
  }
  return groups;
}

inline void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  f << "episode,median,p25,p75\n";
  for (const auto& r : rows)
    f << r.episode << "," << r.median << "," << r.p25 << "," << r.p75 << "\n";
}

}  // namespace maxplore
