#ifndef EVOPO_CLI_HPP
#define EVOPO_CLI_HPP

// Subcommand implementations behind the evopo executable. Each returns a
// process exit code and writes to the given streams, so they are testable
// without spawning processes.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evopo/checkpoint.hpp"
#include "evopo/config.hpp"
#include "evopo/error.hpp"
#include "evopo/estimators.hpp"
#include "evopo/estimators_bruteforce.hpp"
#include "evopo/numeric.hpp"
#include "evopo/orchestrator.hpp"
#include "evopo/tasks/eplb.hpp"
#include "evopo/tasks/synthetic.hpp"
#include "evopo/trace.hpp"

namespace evopo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr const char* kOutDirEnv = "EVOPO_OUT_DIR";

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"synthetic", "eplb"};
  return names;
}

/// Builds the task named by the config; throws ConfigError("task") for unknown names.
inline std::unique_ptr<tasks::Task> make_task(const RunConfig& cfg) {
  if (cfg.task == "synthetic") return std::make_unique<tasks::SyntheticTask>(cfg.synthetic, cfg.dims.max_length);
  if (cfg.task == "eplb") {
    auto w = cfg.eplb.profiles.empty()
                 ? tasks::generate_profiles(cfg.eplb.num_profiles, cfg.eplb.experts, cfg.eplb.devices, cfg.eplb.profile_seed)
                 : tasks::load_profiles(cfg.eplb.profiles);
    return std::make_unique<tasks::EplbTask>(std::move(w),
                                             cfg.eplb.wall_clock_speed ? tasks::SpeedMode::WallClock : tasks::SpeedMode::OpCount);
  }
  std::string known;
  for (const auto& n : task_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("task", "unknown task '" + cfg.task + "' (registered: " + known + ")");
}

inline std::filesystem::path resolve_out_dir(const std::optional<std::string>& out_dir) {
  if (out_dir) return *out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "evopo_out";
}

inline Json archive_json(const FrontierArchive& archive, const tasks::Task& task) {
  Json entries = Json::array();
  for (const auto& c : archive.entries())
    entries.push_back({{"id", c.id},
                       {"parent_id", c.parent_id},
                       {"iteration", c.iteration_born},
                       {"raw_score", c.outcome.y},
                       {"reward", c.reward},
                       {"program", c.program},
                       {"describe", task.describe(c.program)}});
  return {{"capacity", archive.capacity()}, {"entries", std::move(entries)}};
}

/// `run --config <path> [--seed N] [--out <dir>]`
inline int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
                   const std::optional<std::string>& out_dir, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::unique_ptr<tasks::Task> task;
  try {
    cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    task = make_task(cfg);
  } catch (const ConfigError& e) {
    err << "config error";
    if (!e.key().empty()) err << " [" << e.key() << "]";
    err << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const auto dir = resolve_out_dir(out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
    if (!trace) throw Error("cannot open " + (dir / "trace.jsonl").string());
    JsonlTraceWriter writer(trace, cfg.trace_wall_time);
    RunResult r;
    try {
      r = run_evolution(cfg, *task, &writer);
    } catch (...) {
      trace.flush();
      throw;
    }

    std::ofstream(dir / "archive.json") << archive_json(r.archive, *task).dump(2) << '\n';
    save_checkpoint((dir / "policy.ckpt").string(), r.params);
    Json summary{{"task", task->name()},
                 {"seed", cfg.seed},
                 {"iterations", cfg.iterations},
                 {"best_score", r.best_score ? Json(*r.best_score) : Json(nullptr)},
                 {"best_iteration", r.best_iteration},
                 {"best_program", r.archive.empty() ? Json(nullptr) : Json(task->describe(r.archive.entries().front().program))},
                 {"skipped_steps", r.skipped_steps},
                 {"optimizer_steps", r.optimizer_steps}};
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';

    out << "best_score " << (r.best_score ? format_double(*r.best_score) : "none") << '\n'
        << "best_iteration " << r.best_iteration << '\n'
        << "skipped_steps " << r.skipped_steps << '\n'
        << "optimizer_steps " << r.optimizer_steps << '\n'
        << "trace " << (dir / "trace.jsonl").string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error [" << e.key() << "]: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

struct EstimateOptions {
  std::string file;
  std::string mode;
  std::optional<int> k;
  double gamma = 0.3;
  double alpha = 0.5;
  double eps_num = 1e-8;
  double eps_skip = 1e-6;
  double beta_max = 50.0;
  double tol = 1e-6;
};

inline const std::vector<std::string>& estimate_modes() {
  static const std::vector<std::string> modes{"grpo", "raw", "entropic", "pkpo", "sloo", "sloo-brute", "phase"};
  return modes;
}

/// Newline-separated reals; blank lines are ignored. Throws InvalidInput naming the line.
inline std::vector<double> read_rewards(std::istream& is) {
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto s = evopo::detail::trim(line);
    if (s.empty()) continue;
    double x = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(x))
      throw InvalidInput("line " + std::to_string(lineno) + ": not a finite number: '" + s + "'");
    out.push_back(x);
  }
  return out;
}

/// `estimate --file <path> --mode <mode> ...`: one value per line, or SKIP.
inline int cmd_estimate(const EstimateOptions& o, std::ostream& out, std::ostream& err) {
  bool known = false;
  for (const auto& m : estimate_modes()) known = known || m == o.mode;
  if (!known) {
    err << "unknown mode '" << o.mode << "'; valid modes: grpo raw entropic pkpo sloo sloo-brute phase\n";
    return kExitConfig;
  }
  std::vector<double> r;
  try {
    std::ifstream is(o.file);
    if (!is) throw InvalidInput("cannot open " + o.file);
    r = read_rewards(is);
    if (r.size() < 2) throw InvalidInput("need at least 2 rewards, got " + std::to_string(r.size()));
  } catch (const Error& e) {
    err << o.file << ": " << e.what() << '\n';
    return kExitConfig;
  }
  const int n = static_cast<int>(r.size());
  const int k = o.k.value_or(std::min(4, n));

  try {
    std::optional<std::vector<double>> values;
    if (o.mode == "grpo") {
      values = estimators::grpo_advantage(r, o.eps_num);
    } else if (o.mode == "raw") {
      values = estimators::group_relative_raw(r);
    } else if (o.mode == "entropic") {
      try {
        const auto b = estimators::entropic_beta(r, o.gamma, o.beta_max, o.tol);
        values = estimators::entropic_advantage(r, b.beta, o.eps_num);
      } catch (const UnreachableBudget&) {
      }
    } else if (o.mode == "pkpo") {
      values = estimators::pkpo_weights(r, k);
    } else if (o.mode == "sloo") {
      values = estimators::sloo_weights(r, k);
    } else if (o.mode == "sloo-brute") {
      values = estimators::sloo_weights_bruteforce(r, k);
    } else {
      const auto g = estimators::standardize(estimators::group_relative_raw(r), o.eps_num, o.eps_skip);
      const auto kb = estimators::standardize(estimators::sloo_weights(r, std::max(2, k)), o.eps_num, o.eps_skip);
      values = estimators::mix_advantages(g, kb, o.alpha);
    }
    if (!values) {
      out << "SKIP\n";
    } else {
      for (double v : *values) out << format_double(v) << '\n';
    }
    return kExitOk;
  } catch (const InvalidK& e) {
    err << "invalid k: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

/// `export --trace <path> --series <name>`: "iteration,<name>" CSV.
inline int cmd_export(const std::string& trace_path, const std::string& series, std::ostream& out, std::ostream& err) {
  bool known = false;
  std::string valid;
  for (const auto& n : trace_series_names()) {
    known = known || n == series;
    valid += (valid.empty() ? "" : ", ") + n;
  }
  if (!known) {
    err << "unknown series '" << series << "'; valid series: " << valid << '\n';
    return kExitConfig;
  }
  try {
    std::ifstream is(trace_path);
    if (!is) throw Error("cannot open trace " + trace_path);
    const auto records = read_trace(is);
    const auto rows = extract_series(records, series);
    out << "iteration," << series << '\n';
    for (const auto& [t, v] : rows) out << t << ',' << (std::isfinite(v) ? format_double(v) : "nan") << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace evopo::cli

#endif  // EVOPO_CLI_HPP
