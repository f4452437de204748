#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <random>
#include <sstream>

#include "evopo/config.hpp"
#include "evopo/orchestrator.hpp"
#include "evopo/tasks/synthetic.hpp"
#include "evopo/trace.hpp"

using namespace evopo;

namespace {

Candidate parsed_candidate(std::int64_t id, double y) {
  Candidate c;
  c.id = id;
  c.outcome = EvaluationOutcome::parsed(y);
  c.reward = 0.0;
  return c;
}

RunConfig small_config(long long iterations, std::uint64_t seed = 5) {
  RunConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = seed;
  return cfg;
}

/// Synthetic genomes, but some programs fail in every way an evaluator can.
class FlakyTask final : public tasks::Task {
 public:
  std::string name() const override { return "flaky"; }
  tasks::Program seed_program() const override { return inner_.seed_program(); }
  int token_count() const override { return inner_.token_count(); }
  tasks::Program realize(const tasks::Program& p, const policy::TokenSequence& s) const override { return inner_.realize(p, s); }
  EvaluationOutcome evaluate(const tasks::Program& program, long long t, std::uint64_t seed) const override {
    const int h = std::accumulate(program.begin(), program.end(), 0) % 7;
    if (h == 1) throw std::runtime_error("evaluator crashed");
    if (h == 2) return EvaluationOutcome::failure(EvalStatus::Timeout);
    if (h == 3) return EvaluationOutcome::parsed(std::nan(""));
    return inner_.evaluate(program, t, seed);
  }
  tasks::Program random_program(std::mt19937_64& rng) const override { return inner_.random_program(rng); }
  ShapingConfig default_shaping() const override { return inner_.default_shaping(); }
  std::string describe(const tasks::Program& p) const override { return inner_.describe(p); }

 private:
  tasks::SyntheticTask inner_{tasks::SyntheticLandscape{}};
};

class TimeoutTask final : public tasks::Task {
 public:
  std::string name() const override { return "always_timeout"; }
  tasks::Program seed_program() const override { return {0}; }
  int token_count() const override { return 3; }
  tasks::Program realize(const tasks::Program& p, const policy::TokenSequence&) const override { return p; }
  EvaluationOutcome evaluate(const tasks::Program&, long long, std::uint64_t) const override {
    return EvaluationOutcome::failure(EvalStatus::Timeout);
  }
  tasks::Program random_program(std::mt19937_64&) const override { return {0}; }
  ShapingConfig default_shaping() const override { return {}; }
  std::string describe(const tasks::Program&) const override { return "-"; }
};

std::string run_to_trace(const RunConfig& cfg, const tasks::Task& task, RunResult* result = nullptr) {
  std::ostringstream os;
  JsonlTraceWriter writer(os, cfg.trace_wall_time);
  auto r = run_evolution(cfg, task, &writer);
  if (result) *result = std::move(r);
  return os.str();
}

}  // namespace

TEST(FrontierArchive, UpdateRules) {
  FrontierArchive a(3);
  EXPECT_TRUE(a.update(parsed_candidate(1, 0.4)));
  EXPECT_EQ(a.cumulative_best(), 0.4);
  Candidate failed;
  failed.id = 2;
  failed.outcome = EvaluationOutcome::failure(EvalStatus::ParseFailure);
  EXPECT_FALSE(a.update(failed));
  EXPECT_FALSE(a.update(parsed_candidate(9, std::nan(""))));
  EXPECT_TRUE(a.update(parsed_candidate(3, 0.9)));
  EXPECT_TRUE(a.update(parsed_candidate(4, 0.6)));
  EXPECT_FALSE(a.update(parsed_candidate(5, 0.1)));  // full, below the minimum
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(a.update(parsed_candidate(6, 0.5)));
  EXPECT_EQ(a.entries().front().id, 3);
  EXPECT_EQ(a.entries().back().id, 6);
  EXPECT_TRUE(a.is_sorted());
  EXPECT_EQ(a.cumulative_best(), 0.9);
  EXPECT_THROW(a.update(parsed_candidate(3, 2.0)), InvalidInput);
}

TEST(FrontierArchive, MinimizeOrdersAscending) {
  FrontierArchive a(4, Direction::Minimize);
  for (auto [id, y] : std::vector<std::pair<int, double>>{{1, 3.0}, {2, 1.0}, {3, 2.0}}) a.update(parsed_candidate(id, y));
  EXPECT_EQ(a.entries().front().outcome.y, 1.0);
  EXPECT_EQ(a.cumulative_best(), 1.0);
  EXPECT_TRUE(a.is_sorted());
}

TEST(SelectParent, Examples) {
  std::mt19937_64 rng(1);
  FrontierArchive empty;
  EXPECT_EQ(empty.select(rng, 0.5), nullptr);

  FrontierArchive one;
  one.update(parsed_candidate(7, 0.3));
  EXPECT_EQ(one.select(rng, 0.5)->id, 7);

  FrontierArchive two;
  two.update(parsed_candidate(1, 0.2));
  two.update(parsed_candidate(2, 0.8));
  EXPECT_EQ(two.select(rng, 0.0)->id, 2);
  int best = 0;
  for (int i = 0; i < 1000; ++i) best += two.select(rng, 1e-3)->id == 2;
  EXPECT_EQ(best, 1000);

  FrontierArchive tied;
  tied.update(parsed_candidate(1, 0.5));
  tied.update(parsed_candidate(2, 0.5));
  int first = 0;
  for (int i = 0; i < 1000; ++i) first += tied.select(rng, 0.5)->id == 1;
  EXPECT_NEAR(first / 1000.0, 0.5, 0.05);
}

TEST(Config, DefaultsMatchReferenceHyperparameters) {
  RunConfig cfg;
  EXPECT_EQ(cfg.iterations, 1000);
  EXPECT_EQ(cfg.samples_per_group, 8);
  EXPECT_EQ(cfg.top_k, 4);
  EXPECT_EQ(cfg.optim.lr, 1e-6);
  EXPECT_EQ(cfg.optim.weight_decay, 0.1);
  EXPECT_EQ(cfg.optim.beta1, 0.9);
  EXPECT_EQ(cfg.optim.beta2, 0.98);
  EXPECT_EQ(cfg.clip.eps_lo, 0.2);
  EXPECT_EQ(cfg.clip.eps_hi, 0.28);
  EXPECT_EQ(cfg.eps_num, 1e-8);
  EXPECT_EQ(cfg.eps_skip, 1e-6);
  EXPECT_EQ(cfg.archive_capacity, 16u);
  EXPECT_EQ(cfg.tau_sel, 0.5);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ParseOverridesAndErrors) {
  const auto cfg = parse_config_string(
      "# comment\n task = eplb \nseed=42\nshaping.c = 3.5 # trailing\nestimator = maxatk\narchive.per_sample_parent = true\n\n");
  EXPECT_EQ(cfg.task, "eplb");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.shaping_c, 3.5);
  EXPECT_EQ(cfg.estimator, EstimatorMode::MaxAtK);
  EXPECT_TRUE(cfg.per_sample_parent);

  try {
    parse_config_string("optim.learning_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "optim.learning_rate");
  }
  try {
    parse_config_string("top_k = 9\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "top_k");
  }
  EXPECT_THROW(parse_config_string("seed = abc\n"), ConfigError);
  EXPECT_THROW(parse_config_string("just a line\n"), ConfigError);
  EXPECT_THROW(parse_config_string("est.eps_skip = 1e-12\n"), ConfigError);
}

TEST(Config, EchoRoundTrips) {
  RunConfig cfg;
  cfg.task = "eplb";
  cfg.y_min = 0.25;
  cfg.direction = Direction::Minimize;
  cfg.optim.lr = 3.3e-4;
  std::string text;
  for (const auto& [k, v] : config_entries(cfg)) text += k + " = " + v + "\n";
  EXPECT_EQ(config_entries(parse_config_string(text)), config_entries(cfg));
}

TEST(RolloutGroup, FirstGroupUsesSeedAndFreezesParams) {
  auto cfg = small_config(10);
  tasks::SyntheticTask task(cfg.synthetic);
  auto s = init_run(cfg, task);
  ASSERT_EQ(s.archive.size(), 1u);
  const auto g = rollout_group(s, task, cfg);
  ASSERT_EQ(g.candidates.size(), 8u);
  ASSERT_EQ(g.batch.size(), 8u);
  EXPECT_EQ(g.hash_start, g.hash_end);
  EXPECT_EQ(g.hash_start, s.params.fingerprint());
  for (const auto& c : g.candidates) {
    EXPECT_EQ(c.parent_id, 0);
    EXPECT_EQ(c.iteration_born, 0);
    EXPECT_EQ(c.tokens.size(), static_cast<std::size_t>(task.token_count()));
    EXPECT_EQ(c.reward, shape_reward(c.outcome, s.shaping));
  }
}

TEST(RolloutGroup, AllTimeoutsGiveFailureRewards) {
  auto cfg = small_config(1);
  TimeoutTask task;
  auto s = init_run(cfg, task);
  EXPECT_TRUE(s.archive.empty());
  const auto g = rollout_group(s, task, cfg);
  EXPECT_EQ(g.batch.rewards, std::vector<double>(8, -1.0));
  for (auto st : g.batch.status) EXPECT_EQ(st, EvalStatus::Timeout);
  // parent falls back to the seed program when nothing is archived
  for (const auto& c : g.candidates) EXPECT_EQ(c.parent_id, 0);
  const auto d = training_step(s, g, cfg);
  EXPECT_TRUE(d.skipped);
  EXPECT_EQ(d.hash_after, d.hash_start);
}

TEST(RolloutGroup, EvaluatorCrashBecomesEvaluatorError) {
  auto cfg = small_config(30);
  FlakyTask task;
  RunResult r;
  const auto trace = run_to_trace(cfg, task, &r);
  std::istringstream is(trace);
  std::map<std::string, int> statuses;
  for (const auto& rec : read_trace(is)) {
    if (rec["kind"] != "candidate") continue;
    const auto st = rec["status"].get<std::string>();
    ++statuses[st];
    if (st != "parsed") {
      EXPECT_EQ(rec["reward"].get<double>(), -1.0);
      EXPECT_TRUE(rec["raw_score"].is_null());
    }
  }
  EXPECT_GT(statuses["evaluator_error"], 0);
  EXPECT_GT(statuses["timeout"], 0);
  EXPECT_GT(statuses["parse_failure"], 0);
  for (const auto& e : r.archive.entries()) EXPECT_TRUE(e.outcome.ok());
}

TEST(RolloutGroup, ParallelEvaluationMatchesSerial) {
  auto cfg = small_config(20);
  cfg.synthetic.noise = 0.05;
  tasks::SyntheticTask task(cfg.synthetic);
  const auto serial = run_to_trace(cfg, task);
  cfg.workers = 4;
  const auto parallel = run_to_trace(cfg, task);
  // the header echoes eval.workers; every other line must match
  EXPECT_EQ(serial.substr(serial.find('\n')), parallel.substr(parallel.find('\n')));
}

TEST(TrainingStep, ConstantRewardsSkip) {
  auto cfg = small_config(10);
  tasks::SyntheticTask task(cfg.synthetic);
  auto s = init_run(cfg, task);
  auto g = rollout_group(s, task, cfg);
  std::fill(g.batch.rewards.begin(), g.batch.rewards.end(), 2.5);
  const auto before = s.params.fingerprint();
  const auto d = training_step(s, g, cfg);
  EXPECT_TRUE(d.skipped);
  EXPECT_TRUE(d.g_branch->skipped());
  EXPECT_TRUE(d.k_branch->skipped());
  EXPECT_EQ(d.optimizer_steps, 0);
  EXPECT_EQ(d.grad_norm, 0.0);
  EXPECT_EQ(s.params.fingerprint(), before);
  EXPECT_EQ(s.opt.step, 0);
}

TEST(TrainingStep, ScheduleEndpoints) {
  RunConfig cfg;
  const std::vector<double> r{0.5, 3.0, 1.0, 4.5, 2.0, 0.0, 3.5, 1.5};
  StepDiagnostics d0;
  const auto a0 = compute_advantages(cfg, 0, 100, r, d0);
  ASSERT_TRUE(a0);
  EXPECT_EQ(*a0, d0.g_branch->values);
  StepDiagnostics d1;
  const auto a1 = compute_advantages(cfg, 100, 100, r, d1);
  ASSERT_TRUE(a1);
  EXPECT_EQ(*a1, d1.k_branch->values);
  EXPECT_EQ(d1.alpha, 1.0);
}

TEST(TrainingStep, BaselineModes) {
  RunConfig cfg;
  const std::vector<double> constant(8, 1.0);
  StepDiagnostics d;
  cfg.estimator = EstimatorMode::GRPO;
  ASSERT_TRUE(compute_advantages(cfg, 3, 10, constant, d));
  cfg.estimator = EstimatorMode::MaxAtK;
  EXPECT_FALSE(compute_advantages(cfg, 3, 10, constant, d));
  cfg.estimator = EstimatorMode::Entropic;
  EXPECT_FALSE(compute_advantages(cfg, 3, 10, constant, d));
  const std::vector<double> r{0.0, 1.0, 2.0, 5.0};
  const auto e = compute_advantages(cfg, 3, 10, r, d);
  ASSERT_TRUE(e);
  ASSERT_TRUE(d.beta);
  EXPECT_EQ(*e, estimators::entropic_advantage(r, *d.beta, cfg.eps_num));
  cfg.estimator = EstimatorMode::MaxAtK;
  const auto m = compute_advantages(cfg, 3, 10, r, d);
  EXPECT_EQ(*m, estimators::standardize(estimators::sloo_weights(r, 4), cfg.eps_num, cfg.eps_skip).values);
}

TEST(TrainingStep, NumericFailureRollsBack) {
  auto cfg = small_config(10);
  tasks::SyntheticTask task(cfg.synthetic);
  auto s = init_run(cfg, task);
  auto g = rollout_group(s, task, cfg);
  for (std::size_t i = 0; i < g.batch.size(); ++i) g.batch.rewards[i] = static_cast<double>(i);
  g.candidates[2].tokens.old_logprobs[1] = -1e308;  // ratio overflows
  const auto before = s.params.fingerprint();
  const auto d = training_step(s, g, cfg);
  EXPECT_TRUE(d.rejected);
  EXPECT_FALSE(d.error.empty());
  EXPECT_EQ(d.optimizer_steps, 0);
  EXPECT_EQ(s.params.fingerprint(), before);
  EXPECT_EQ(s.opt.step, 0);
}

TEST(RunEvolution, ZeroIterations) {
  auto cfg = small_config(0);
  tasks::SyntheticTask task(cfg.synthetic);
  RunResult r;
  const auto trace = run_to_trace(cfg, task, &r);
  EXPECT_TRUE(r.steps.empty());
  ASSERT_EQ(r.archive.size(), 1u);
  EXPECT_EQ(r.archive.entries().front().id, 0);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 1);
}

TEST(RunEvolution, DeterministicTraceAndInvariants) {
  auto cfg = small_config(50, 21);
  cfg.synthetic.noise = 0.01;
  tasks::SyntheticTask task(cfg.synthetic);
  RunResult r;
  const auto a = run_to_trace(cfg, task, &r);
  const auto b = run_to_trace(cfg, task);
  EXPECT_EQ(a, b);

  std::istringstream is(a);
  const auto records = read_trace(is);
  ASSERT_EQ(records.size(), 1u + 50u + 50u * 8u);
  EXPECT_EQ(records[0]["kind"], "header");

  std::optional<double> replay;
  if (!records[0]["seed_raw_score"].is_null()) replay = records[0]["seed_raw_score"].get<double>();
  std::set<std::int64_t> ids;
  double last = -INFINITY;
  long long opt_steps = 0;
  for (const auto& rec : records) {
    if (rec["kind"] == "candidate") {
      EXPECT_TRUE(ids.insert(rec["id"].get<std::int64_t>()).second);
      if (!rec["raw_score"].is_null()) replay = std::max(replay.value_or(-INFINITY), rec["raw_score"].get<double>());
      EXPECT_EQ(rec["cumulative_max"].get<double>(), *replay);
    } else if (rec["kind"] == "step") {
      const double cm = rec["cumulative_max"].get<double>();
      EXPECT_GE(cm, last);
      last = cm;
      EXPECT_EQ(rec["hash_start"], rec["hash_end"]);
      const int steps = rec["optimizer_steps"].get<int>();
      EXPECT_LE(steps, 1);
      EXPECT_EQ(steps == 0, rec["hash_after"] == rec["hash_start"]);
      opt_steps += steps;
    }
  }
  EXPECT_EQ(opt_steps, static_cast<long long>(r.optimizer_steps));
  EXPECT_TRUE(r.archive.is_sorted());
  EXPECT_LE(r.archive.size(), cfg.archive_capacity);

  // exported series reproduce the logged values exactly
  const auto alpha = extract_series(records, "alpha");
  const auto entropy = extract_series(records, "entropy");
  ASSERT_EQ(alpha.size(), 50u);
  for (std::size_t t = 0; t < 50; ++t) {
    EXPECT_EQ(alpha[t].second, r.steps[t].alpha);
    EXPECT_EQ(entropy[t].second, r.steps[t].entropy);
    EXPECT_EQ(alpha[t].second, static_cast<double>(t) / 50.0);
  }
}

TEST(RunEvolution, SeedChangesTrace) {
  tasks::SyntheticTask task(tasks::SyntheticLandscape{});
  EXPECT_NE(run_to_trace(small_config(5, 1), task), run_to_trace(small_config(5, 2), task));
}

TEST(RunEvolution, PerSampleParentsAndBaselineModesRun) {
  tasks::SyntheticTask task(tasks::SyntheticLandscape{});
  for (auto mode : {EstimatorMode::PhaseAdaptive, EstimatorMode::GRPO, EstimatorMode::Entropic, EstimatorMode::MaxAtK}) {
    auto cfg = small_config(20);
    cfg.estimator = mode;
    cfg.per_sample_parent = true;
    const auto r = run_evolution(cfg, task);
    ASSERT_EQ(r.steps.size(), 20u);
    for (std::size_t t = 1; t < r.cumulative_max.size(); ++t) EXPECT_GE(*r.cumulative_max[t], *r.cumulative_max[t - 1]);
  }
}

TEST(RunEvolution, LearnsWithLargerStepSize) {
  // with a usable learning rate the policy's entropy should fall over the run
  auto cfg = small_config(150, 4);
  cfg.optim.lr = 3e-2;
  tasks::SyntheticTask task(cfg.synthetic);
  const auto r = run_evolution(cfg, task);
  EXPECT_LT(r.steps.back().entropy, r.steps.front().entropy);
  EXPECT_EQ(r.optimizer_steps + r.skipped_steps, 150u);
}
