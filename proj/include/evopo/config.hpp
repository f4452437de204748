#ifndef EVOPO_CONFIG_HPP
#define EVOPO_CONFIG_HPP

// Run configuration: a flat "key = value" text file with dotted section
// prefixes. '#' starts a comment. Unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"
#include "evopo/policy.hpp"
#include "evopo/reward_shaping.hpp"
#include "evopo/tasks/synthetic.hpp"

namespace evopo {

enum class EstimatorMode { PhaseAdaptive, GRPO, Entropic, MaxAtK };

inline std::string_view to_string(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::PhaseAdaptive: return "phase";
    case EstimatorMode::GRPO: return "grpo";
    case EstimatorMode::Entropic: return "entropic";
    case EstimatorMode::MaxAtK: return "maxatk";
  }
  return "phase";
}

/// Number of search-state features fed to the policy.
inline constexpr int kContextFeatures = 8;

struct EplbConfig {
  std::string profiles;  // path; empty means generated profiles
  int num_profiles = 8;
  int experts = 32;
  int devices = 4;
  std::uint64_t profile_seed = 11;
  bool wall_clock_speed = false;
};

struct RunConfig {
  std::string task = "synthetic";
  std::uint64_t seed = 0;
  long long iterations = 1000;
  int samples_per_group = 8;
  int top_k = 4;
  EstimatorMode estimator = EstimatorMode::PhaseAdaptive;
  double gamma = 0.3;
  double beta_max = 50.0;
  double beta_tol = 1e-6;
  double eps_num = 1e-8;
  double eps_skip = 1e-6;

  policy::AdamWConfig optim{};
  policy::ClipConfig clip{};
  policy::PolicyDims dims{};
  double init_scale = 0.1;

  // shaping; unset bounds and direction fall back to the task's defaults
  std::optional<Direction> direction;
  std::optional<double> y_min;
  std::optional<double> y_max;
  double shaping_c = 5.0;
  double shaping_alpha_r = 1.0;

  std::size_t archive_capacity = 16;
  double tau_sel = 0.5;
  bool per_sample_parent = false;

  int workers = 1;
  double eval_timeout = 0.0;  // seconds; 0 disables
  bool trace_wall_time = false;

  tasks::SyntheticLandscape synthetic{};
  EplbConfig eplb{};

  void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key, key + ": expected a real number, got '" + v + "'");
  return x;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key, key + ": expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// members are reached through accessor lambdas; getters only read through them
template <typename Member>
Field real_field(std::string key, Member m) {
  return {key, [key, m](RunConfig& c, const std::string& v) { std::invoke(m, c) = parse_real(key, v); },
          [m](const RunConfig& c) { return format_double(std::invoke(m, const_cast<RunConfig&>(c))); }};
}

template <typename Int, typename Member>
Field int_field(std::string key, Member m) {
  return {key, [key, m](RunConfig& c, const std::string& v) { std::invoke(m, c) = parse_int<Int>(key, v); },
          [m](const RunConfig& c) { return std::to_string(std::invoke(m, const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field bool_field(std::string key, Member m) {
  return {key, [key, m](RunConfig& c, const std::string& v) { std::invoke(m, c) = parse_bool(key, v); },
          [m](const RunConfig& c) { return std::string(std::invoke(m, const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Member>
Field optional_real_field(std::string key, Member m) {
  return {key,
          [key, m](RunConfig& c, const std::string& v) {
            if (v == "auto") std::invoke(m, c).reset();
            else std::invoke(m, c) = parse_real(key, v);
          },
          [m](const RunConfig& c) {
            const auto& v = std::invoke(m, const_cast<RunConfig&>(c));
            return v ? format_double(*v) : std::string("auto");
          }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"task", [](RunConfig& c, const std::string& v) { c.task = v; }, [](const RunConfig& c) { return c.task; }});
    f.push_back(int_field<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    f.push_back(int_field<long long>("iterations", [](RunConfig& c) -> auto& { return c.iterations; }));
    f.push_back(int_field<int>("samples_per_group", [](RunConfig& c) -> auto& { return c.samples_per_group; }));
    f.push_back(int_field<int>("top_k", [](RunConfig& c) -> auto& { return c.top_k; }));
    f.push_back({"estimator",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "phase") c.estimator = EstimatorMode::PhaseAdaptive;
                   else if (v == "grpo") c.estimator = EstimatorMode::GRPO;
                   else if (v == "entropic") c.estimator = EstimatorMode::Entropic;
                   else if (v == "maxatk") c.estimator = EstimatorMode::MaxAtK;
                   else throw ConfigError("estimator", "estimator: expected phase|grpo|entropic|maxatk, got '" + v + "'");
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.estimator)); }});
    f.push_back(real_field("entropic.gamma", [](RunConfig& c) -> auto& { return c.gamma; }));
    f.push_back(real_field("entropic.beta_max", [](RunConfig& c) -> auto& { return c.beta_max; }));
    f.push_back(real_field("entropic.tol", [](RunConfig& c) -> auto& { return c.beta_tol; }));
    f.push_back(real_field("est.eps_num", [](RunConfig& c) -> auto& { return c.eps_num; }));
    f.push_back(real_field("est.eps_skip", [](RunConfig& c) -> auto& { return c.eps_skip; }));
    f.push_back(real_field("optim.lr", [](RunConfig& c) -> auto& { return c.optim.lr; }));
    f.push_back(real_field("optim.weight_decay", [](RunConfig& c) -> auto& { return c.optim.weight_decay; }));
    f.push_back(real_field("optim.beta1", [](RunConfig& c) -> auto& { return c.optim.beta1; }));
    f.push_back(real_field("optim.beta2", [](RunConfig& c) -> auto& { return c.optim.beta2; }));
    f.push_back(real_field("optim.eps", [](RunConfig& c) -> auto& { return c.optim.eps; }));
    f.push_back(real_field("clip.eps_lo", [](RunConfig& c) -> auto& { return c.clip.eps_lo; }));
    f.push_back(real_field("clip.eps_hi", [](RunConfig& c) -> auto& { return c.clip.eps_hi; }));
    f.push_back(int_field<int>("policy.context_dim", [](RunConfig& c) -> auto& { return c.dims.context_dim; }));
    f.push_back(int_field<int>("policy.hidden", [](RunConfig& c) -> auto& { return c.dims.hidden; }));
    f.push_back(int_field<int>("policy.vocab", [](RunConfig& c) -> auto& { return c.dims.vocab; }));
    f.push_back(int_field<int>("policy.max_length", [](RunConfig& c) -> auto& { return c.dims.max_length; }));
    f.push_back(real_field("policy.init_scale", [](RunConfig& c) -> auto& { return c.init_scale; }));
    f.push_back({"shaping.direction",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "maximize") c.direction = Direction::Maximize;
                   else if (v == "minimize") c.direction = Direction::Minimize;
                   else if (v == "auto") c.direction.reset();
                   else throw ConfigError("shaping.direction", "shaping.direction: expected maximize|minimize|auto, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   if (!c.direction) return std::string("auto");
                   return std::string(*c.direction == Direction::Maximize ? "maximize" : "minimize");
                 }});
    f.push_back(optional_real_field("shaping.y_min", [](RunConfig& c) -> auto& { return c.y_min; }));
    f.push_back(optional_real_field("shaping.y_max", [](RunConfig& c) -> auto& { return c.y_max; }));
    f.push_back(real_field("shaping.c", [](RunConfig& c) -> auto& { return c.shaping_c; }));
    f.push_back(real_field("shaping.alpha_r", [](RunConfig& c) -> auto& { return c.shaping_alpha_r; }));
    f.push_back(int_field<std::size_t>("archive.capacity", [](RunConfig& c) -> auto& { return c.archive_capacity; }));
    f.push_back(real_field("archive.tau_sel", [](RunConfig& c) -> auto& { return c.tau_sel; }));
    f.push_back(bool_field("archive.per_sample_parent", [](RunConfig& c) -> auto& { return c.per_sample_parent; }));
    f.push_back(int_field<int>("eval.workers", [](RunConfig& c) -> auto& { return c.workers; }));
    f.push_back(real_field("eval.timeout", [](RunConfig& c) -> auto& { return c.eval_timeout; }));
    f.push_back(bool_field("trace.wall_time", [](RunConfig& c) -> auto& { return c.trace_wall_time; }));
    f.push_back(real_field("synthetic.c", [](RunConfig& c) -> auto& { return c.synthetic.base; }));
    f.push_back(real_field("synthetic.delta0", [](RunConfig& c) -> auto& { return c.synthetic.delta0; }));
    f.push_back(real_field("synthetic.delta_decay", [](RunConfig& c) -> auto& { return c.synthetic.delta_decay; }));
    f.push_back(real_field("synthetic.noise", [](RunConfig& c) -> auto& { return c.synthetic.noise; }));
    f.push_back(int_field<int>("synthetic.genes", [](RunConfig& c) -> auto& { return c.synthetic.genes; }));
    f.push_back(int_field<int>("synthetic.values", [](RunConfig& c) -> auto& { return c.synthetic.values; }));
    f.push_back(int_field<std::uint64_t>("synthetic.target_seed", [](RunConfig& c) -> auto& { return c.synthetic.target_seed; }));
    f.push_back({"eplb.profiles", [](RunConfig& c, const std::string& v) { c.eplb.profiles = v; },
                 [](const RunConfig& c) { return c.eplb.profiles; }});
    f.push_back(int_field<int>("eplb.num_profiles", [](RunConfig& c) -> auto& { return c.eplb.num_profiles; }));
    f.push_back(int_field<int>("eplb.experts", [](RunConfig& c) -> auto& { return c.eplb.experts; }));
    f.push_back(int_field<int>("eplb.devices", [](RunConfig& c) -> auto& { return c.eplb.devices; }));
    f.push_back(int_field<std::uint64_t>("eplb.profile_seed", [](RunConfig& c) -> auto& { return c.eplb.profile_seed; }));
    f.push_back({"eplb.speed",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "ops") c.eplb.wall_clock_speed = false;
                   else if (v == "wallclock") c.eplb.wall_clock_speed = true;
                   else throw ConfigError("eplb.speed", "eplb.speed: expected ops|wallclock, got '" + v + "'");
                 },
                 [](const RunConfig& c) { return std::string(c.eplb.wall_clock_speed ? "wallclock" : "ops"); }});
    return f;
  }();
  return table;
}

}  // namespace detail

/// Sets one key from its textual value. Throws ConfigError naming the key.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError(key, "unknown config key '" + key + "'");
}

/// Every key with its resolved value, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

inline void RunConfig::validate() const {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, std::string(key) + ": " + what); };
  if (iterations < 0) fail("iterations", "must be >= 0");
  if (samples_per_group < 2) fail("samples_per_group", "must be >= 2");
  if (top_k < 2 || top_k > samples_per_group) fail("top_k", "must lie in [2, samples_per_group]");
  if (!(gamma >= 0)) fail("entropic.gamma", "must be >= 0");
  if (!(beta_max > 0)) fail("entropic.beta_max", "must be > 0");
  if (!(beta_tol > 0)) fail("entropic.tol", "must be > 0");
  if (!(eps_num > 0)) fail("est.eps_num", "must be > 0");
  if (!(eps_skip >= eps_num)) fail("est.eps_skip", "must be >= est.eps_num");
  if (!(optim.lr > 0)) fail("optim.lr", "must be > 0");
  if (!(optim.weight_decay >= 0)) fail("optim.weight_decay", "must be >= 0");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1)) fail("optim.beta1", "must lie in [0, 1)");
  if (!(optim.beta2 >= 0 && optim.beta2 < 1)) fail("optim.beta2", "must lie in [0, 1)");
  if (!(optim.eps > 0)) fail("optim.eps", "must be > 0");
  if (!(clip.eps_lo > 0 && clip.eps_lo < 1)) fail("clip.eps_lo", "must lie in (0, 1)");
  if (!(clip.eps_hi > 0)) fail("clip.eps_hi", "must be > 0");
  if (dims.context_dim != kContextFeatures) fail("policy.context_dim", "must be " + std::to_string(kContextFeatures));
  if (dims.hidden < 1) fail("policy.hidden", "must be >= 1");
  if (dims.vocab < 2) fail("policy.vocab", "must be >= 2");
  if (dims.max_length < 1) fail("policy.max_length", "must be >= 1");
  if (!(init_scale >= 0)) fail("policy.init_scale", "must be >= 0");
  if (y_min && y_max && !(*y_min < *y_max)) fail("shaping.y_max", "must exceed shaping.y_min");
  if (!(shaping_c > 0)) fail("shaping.c", "must be > 0");
  if (!(shaping_alpha_r > 0)) fail("shaping.alpha_r", "must be > 0");
  if (archive_capacity < 1) fail("archive.capacity", "must be >= 1");
  if (!std::isfinite(tau_sel)) fail("archive.tau_sel", "must be finite");
  if (workers < 1) fail("eval.workers", "must be >= 1");
  if (!(eval_timeout >= 0)) fail("eval.timeout", "must be >= 0");
  if (!(synthetic.delta0 > 0)) fail("synthetic.delta0", "must be > 0");
  if (!(synthetic.noise >= 0)) fail("synthetic.noise", "must be >= 0");
  if (synthetic.genes < 1) fail("synthetic.genes", "must be >= 1");
  if (synthetic.values < 2) fail("synthetic.values", "must be >= 2");
  if (eplb.num_profiles < 1) fail("eplb.num_profiles", "must be >= 1");
  if (eplb.devices < 1 || eplb.experts < eplb.devices) fail("eplb.experts", "must be >= eplb.devices >= 1");
}

/// Parses "key = value" lines on top of the defaults and validates the result.
inline RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(body, "line " + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(cfg, detail::trim(std::string_view(body).substr(0, eq)),
                     detail::trim(std::string_view(body).substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open config file " + path);
  return parse_config(is);
}

}  // namespace evopo

#endif  // EVOPO_CONFIG_HPP
