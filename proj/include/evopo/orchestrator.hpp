#ifndef EVOPO_ORCHESTRATOR_HPP
#define EVOPO_ORCHESTRATOR_HPP

// The evolutionary loop: each iteration samples one rollout group under frozen
// policy parameters, evaluates and archives the candidates, then takes at most
// one policy-gradient step at the group boundary.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "evopo/archive.hpp"
#include "evopo/config.hpp"
#include "evopo/error.hpp"
#include "evopo/estimators.hpp"
#include "evopo/numeric.hpp"
#include "evopo/policy.hpp"
#include "evopo/reward_shaping.hpp"
#include "evopo/tasks/task.hpp"

namespace evopo {

struct RunState {
  long long t = 0;
  long long total = 0;  // T
  std::uint64_t seed = 0;
  policy::PolicyParams params;
  policy::AdamWState opt;
  FrontierArchive archive;
  ShapingConfig shaping;
  Candidate seed_candidate;
  std::int64_t next_id = 1;
  std::deque<bool> recent_improvements;  // last few iterations: did the best score improve?
};

/// One rollout group's scores and rewards, in candidate order.
struct RewardBatch {
  std::vector<std::int64_t> ids;
  std::vector<EvalStatus> status;
  std::vector<double> raw_scores;  // NaN for failures
  std::vector<double> rewards;

  std::size_t size() const { return rewards.size(); }
};

struct RolloutGroup {
  long long iteration = 0;
  RewardBatch batch;
  std::vector<Candidate> candidates;
  std::vector<policy::Context> contexts;
  std::uint64_t hash_start = 0;
  std::uint64_t hash_end = 0;
};

struct StepDiagnostics {
  long long iteration = 0;
  EstimatorMode mode = EstimatorMode::PhaseAdaptive;
  double alpha = std::numeric_limits<double>::quiet_NaN();  // effective mixture weight on the best-of-k branch
  std::optional<estimators::BranchOutcome<double>> g_branch;
  std::optional<estimators::BranchOutcome<double>> k_branch;
  std::optional<double> beta;     // entropic mode
  bool skipped = false;           // no usable advantages, no update
  bool rejected = false;          // numeric failure; parameters left unchanged
  std::string error;
  std::vector<double> advantages;  // per candidate; empty when skipped
  double loss = std::numeric_limits<double>::quiet_NaN();
  double entropy = 0.0;
  double grad_norm = 0.0;
  int optimizer_steps = 0;
  std::uint64_t hash_start = 0;
  std::uint64_t hash_end = 0;
  std::uint64_t hash_after = 0;
  std::optional<double> cumulative_max;
};

/// Receives trace records as the run progresses.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void header(const RunConfig& cfg, const tasks::Task& task, const RunState& state) = 0;
  virtual void candidate(const Candidate& c, std::optional<double> cumulative_max, double wall_time) = 0;
  virtual void step(const StepDiagnostics& d, double wall_time) = 0;
};

/// The run's shaping: the task's defaults, overridden by whatever the config sets.
inline ShapingConfig resolve_shaping(const RunConfig& cfg, const tasks::Task& task) {
  ShapingConfig s = task.default_shaping();
  if (cfg.direction) s.direction = *cfg.direction;
  if (cfg.y_min) s.y_min = *cfg.y_min;
  if (cfg.y_max) s.y_max = *cfg.y_max;
  s.c = cfg.shaping_c;
  s.alpha_r = cfg.shaping_alpha_r;
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError("shaping.y_min", std::string("resolved shaping is invalid: ") + e.what());
  }
  return s;
}

namespace detail {

inline EvaluationOutcome guarded_evaluate(const tasks::Task& task, const tasks::Program& program, long long t,
                                          std::uint64_t seed, double timeout) {
  const auto start = std::chrono::steady_clock::now();
  EvaluationOutcome out;
  try {
    out = task.evaluate(program, t, seed);
  } catch (...) {
    out = EvaluationOutcome::failure(EvalStatus::EvaluatorError);
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (timeout > 0 && out.wall_time > timeout && out.status == EvalStatus::Parsed) {
    const double wall = out.wall_time;
    out = EvaluationOutcome::failure(EvalStatus::Timeout);
    out.wall_time = wall;
  }
  if (out.status == EvalStatus::Parsed && !std::isfinite(out.y)) out.status = EvalStatus::ParseFailure;
  return out;
}

inline std::uint64_t stream_seed(std::uint64_t seed, long long t, std::uint64_t stream, std::uint64_t index = 0) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(t), stream), index);
}

enum : std::uint64_t { kParentStream = 1, kSampleStream = 2, kEvalStream = 3, kInitStream = 4 };

}  // namespace detail

/// Initial state: random policy, the seed program evaluated and archived.
inline RunState init_run(const RunConfig& cfg, const tasks::Task& task) {
  cfg.validate();
  if (task.token_count() > cfg.dims.max_length)
    throw ConfigError("policy.max_length", "policy.max_length must be >= " + std::to_string(task.token_count()) +
                                               " for task " + task.name());
  RunState s;
  s.total = cfg.iterations;
  s.seed = cfg.seed;
  s.params = policy::PolicyParams::random(cfg.dims, cfg.init_scale, detail::stream_seed(cfg.seed, 0, detail::kInitStream));
  s.opt = policy::AdamWState::for_params(s.params);
  s.shaping = resolve_shaping(cfg, task);
  s.archive = FrontierArchive(cfg.archive_capacity, s.shaping.direction);

  Candidate& seed = s.seed_candidate;
  seed.id = 0;
  seed.program = task.seed_program();
  seed.outcome = detail::guarded_evaluate(task, seed.program, 0, detail::stream_seed(cfg.seed, 0, detail::kInitStream, 1),
                                          cfg.eval_timeout);
  seed.reward = shape_reward(seed.outcome, s.shaping);
  s.archive.update(seed);
  return s;
}

/// Search-state features for one parent: parent progress, t/T, frontier best and
/// mean progress, recent improvement rate, archive fill, parent rank, bias.
inline policy::Context make_context(const RunState& s, const Candidate& parent, std::size_t parent_rank) {
  auto u = [&](const Candidate& c) { return c.outcome.ok() ? progress(c.outcome.y, s.shaping) : 0.0; };
  policy::Context ctx(kContextFeatures, 0.0);
  ctx[0] = u(parent);
  ctx[1] = s.total > 0 ? static_cast<double>(s.t) / static_cast<double>(s.total) : 0.0;
  const auto& entries = s.archive.entries();
  if (!entries.empty()) {
    ctx[2] = u(entries.front());
    double m = 0.0;
    for (const auto& e : entries) m += u(e);
    ctx[3] = m / static_cast<double>(entries.size());
    ctx[6] = static_cast<double>(parent_rank) / static_cast<double>(entries.size());
  }
  if (!s.recent_improvements.empty()) {
    double k = 0;
    for (bool b : s.recent_improvements) k += b ? 1.0 : 0.0;
    ctx[4] = k / static_cast<double>(s.recent_improvements.size());
  }
  ctx[5] = static_cast<double>(entries.size()) / static_cast<double>(s.archive.capacity());
  ctx[7] = 1.0;
  return ctx;
}

/// Samples and evaluates one group under the current (frozen) parameters.
inline RolloutGroup rollout_group(RunState& s, const tasks::Task& task, const RunConfig& cfg) {
  const int n = cfg.samples_per_group;
  if (n < 2) throw InvalidGroup("rollout_group: need at least 2 samples per group");
  RolloutGroup g;
  g.iteration = s.t;
  g.hash_start = s.params.fingerprint();

  std::mt19937_64 parent_rng(detail::stream_seed(s.seed, s.t, detail::kParentStream));
  auto pick_parent = [&]() -> std::pair<const Candidate*, std::size_t> {
    const Candidate* p = s.archive.select(parent_rng, cfg.tau_sel);
    if (!p) return {&s.seed_candidate, 0};
    return {p, static_cast<std::size_t>(p - s.archive.entries().data())};
  };
  auto shared = pick_parent();

  g.candidates.resize(static_cast<std::size_t>(n));
  g.contexts.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto [parent, rank] = cfg.per_sample_parent ? pick_parent() : shared;
    auto& c = g.candidates[static_cast<std::size_t>(i)];
    g.contexts[static_cast<std::size_t>(i)] = make_context(s, *parent, rank);
    std::mt19937_64 rng(detail::stream_seed(s.seed, s.t, detail::kSampleStream, static_cast<std::uint64_t>(i)));
    c.tokens = policy::sample_sequence(s.params, g.contexts[static_cast<std::size_t>(i)], rng, task.token_count());
    c.program = task.realize(parent->program, c.tokens);
    c.id = s.next_id++;
    c.parent_id = parent->id;
    c.iteration_born = s.t;
  }

  auto eval_one = [&](std::size_t i) {
    auto& c = g.candidates[i];
    c.outcome = detail::guarded_evaluate(task, c.program, s.t,
                                         detail::stream_seed(s.seed, s.t, detail::kEvalStream, i), cfg.eval_timeout);
  };
  const auto workers = static_cast<std::size_t>(std::min(cfg.workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < g.candidates.size(); ++i) eval_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < g.candidates.size(); i = next++) eval_one(i);
      });
    for (auto& th : pool) th.join();
  }

  for (auto& c : g.candidates) {
    c.reward = shape_reward(c.outcome, s.shaping);
    g.batch.ids.push_back(c.id);
    g.batch.status.push_back(c.outcome.status);
    g.batch.raw_scores.push_back(c.outcome.ok() ? c.outcome.y : std::numeric_limits<double>::quiet_NaN());
    g.batch.rewards.push_back(c.reward);
  }
  g.hash_end = s.params.fingerprint();
  return g;
}

/// Advantages for one group under the configured estimator; nullopt means skip.
inline std::optional<std::vector<double>> compute_advantages(const RunConfig& cfg, long long t, long long total,
                                                             const std::vector<double>& rewards, StepDiagnostics& d) {
  const int k = std::min<int>(cfg.top_k, static_cast<int>(rewards.size()));
  switch (cfg.estimator) {
    case EstimatorMode::PhaseAdaptive: {
      d.alpha = estimators::phase_alpha(t, std::max<long long>(total, 1));
      d.g_branch = estimators::standardize(estimators::group_relative_raw(rewards), cfg.eps_num, cfg.eps_skip);
      d.k_branch = estimators::standardize(estimators::sloo_weights(rewards, k), cfg.eps_num, cfg.eps_skip);
      return estimators::mix_advantages(*d.g_branch, *d.k_branch, d.alpha);
    }
    case EstimatorMode::GRPO:
      d.alpha = 0.0;
      return estimators::grpo_advantage(rewards, cfg.eps_num);
    case EstimatorMode::MaxAtK: {
      d.alpha = 1.0;
      d.k_branch = estimators::standardize(estimators::sloo_weights(rewards, k), cfg.eps_num, cfg.eps_skip);
      if (d.k_branch->skipped()) return std::nullopt;
      return d.k_branch->values;
    }
    case EstimatorMode::Entropic: {
      try {
        const auto b = estimators::entropic_beta(rewards, cfg.gamma, cfg.beta_max, cfg.beta_tol);
        d.beta = b.beta;
        return estimators::entropic_advantage(rewards, b.beta, cfg.eps_num);
      } catch (const UnreachableBudget&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

/// At most one optimizer step for the group. Skips leave parameters untouched;
/// a numeric failure rejects the step and also leaves them untouched.
inline StepDiagnostics training_step(RunState& s, const RolloutGroup& g, const RunConfig& cfg) {
  if (g.batch.size() < 2) throw InvalidGroup("training_step: need at least 2 rewards");
  StepDiagnostics d;
  d.iteration = g.iteration;
  d.mode = cfg.estimator;
  d.hash_start = g.hash_start;
  d.hash_end = g.hash_end;

  double ent = 0.0;
  for (std::size_t i = 0; i < g.candidates.size(); ++i)
    ent += policy::token_entropy(s.params, g.contexts[i], g.candidates[i].tokens);
  d.entropy = ent / static_cast<double>(g.candidates.size());

  const auto adv = compute_advantages(cfg, g.iteration, s.total, g.batch.rewards, d);
  if (!adv) {
    d.skipped = true;
  } else {
    d.advantages = *adv;
    std::vector<policy::TrainingExample> batch;
    batch.reserve(g.candidates.size());
    for (std::size_t i = 0; i < g.candidates.size(); ++i)
      batch.push_back({g.contexts[i], g.candidates[i].tokens, policy::broadcast_advantage((*adv)[i], g.candidates[i].tokens)});
    try {
      auto lg = policy::loss_and_gradient(s.params, batch, cfg.clip);
      d.loss = lg.loss;
      d.grad_norm = policy::grad_norm(lg.grad);
      if (policy::optimizer_step(s.params, lg.grad, s.opt, cfg.optim)) {
        d.optimizer_steps = 1;
      } else {
        d.rejected = true;
        d.error = "non-finite gradient";
      }
    } catch (const NumericFailure& e) {
      d.rejected = true;
      d.error = e.what();
      d.grad_norm = std::numeric_limits<double>::quiet_NaN();
    }
  }
  d.hash_after = s.params.fingerprint();
  return d;
}

struct RunResult {
  FrontierArchive archive;
  std::vector<std::optional<double>> cumulative_max;  // after each iteration
  std::vector<StepDiagnostics> steps;
  std::optional<double> best_score;
  long long best_iteration = -1;  // -1: the seed program
  std::size_t skipped_steps = 0;
  std::size_t optimizer_steps = 0;
  policy::PolicyParams params;
};

/// Runs T iterations of rollout, archival and training.
inline RunResult run_evolution(const RunConfig& cfg, const tasks::Task& task, TraceSink* sink = nullptr) {
  RunState s = init_run(cfg, task);
  const auto run_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count(); };
  if (sink) sink->header(cfg, task, s);

  RunResult r{FrontierArchive(cfg.archive_capacity, s.shaping.direction), {}, {}, {}, -1, 0, 0, {}};
  for (s.t = 0; s.t < s.total; ++s.t) {
    const auto before = s.archive.cumulative_best();
    RolloutGroup g = rollout_group(s, task, cfg);
    for (const auto& c : g.candidates) {
      s.archive.update(c);
      if (sink) sink->candidate(c, s.archive.cumulative_best(), elapsed());
    }
    StepDiagnostics d = training_step(s, g, cfg);
    d.cumulative_max = s.archive.cumulative_best();
    if (sink) sink->step(d, elapsed());

    s.recent_improvements.push_back(before != s.archive.cumulative_best());
    if (s.recent_improvements.size() > 10) s.recent_improvements.pop_front();
    r.cumulative_max.push_back(d.cumulative_max);
    r.skipped_steps += d.skipped ? 1 : 0;
    r.optimizer_steps += static_cast<std::size_t>(d.optimizer_steps);
    r.steps.push_back(std::move(d));
  }
  if (!s.archive.empty()) {
    const auto& best = s.archive.entries().front();
    r.best_score = best.outcome.y;
    r.best_iteration = best.iteration_born;
  }
  r.archive = std::move(s.archive);
  r.params = std::move(s.params);
  return r;
}

/// Best raw score among `budget` uniformly random programs (the random-search baseline).
inline std::optional<double> random_search_best(const tasks::Task& task, std::size_t budget, std::uint64_t seed,
                                                Direction direction = Direction::Maximize) {
  std::mt19937_64 rng(seed);
  std::optional<double> best;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto out = detail::guarded_evaluate(task, task.random_program(rng), 0, mix_seed(seed, i), 0.0);
    if (!out.ok()) continue;
    const bool better = direction == Direction::Maximize ? out.y > best.value_or(-INFINITY) : out.y < best.value_or(INFINITY);
    if (!best || better) best = out.y;
  }
  return best;
}

}  // namespace evopo

#endif  // EVOPO_ORCHESTRATOR_HPP
