#ifndef EVOPO_TRACE_HPP
#define EVOPO_TRACE_HPP

// JSON Lines trace: a header record (format version, resolved config, seed
// program), then one record per candidate and one per training step.
// Wall-clock fields are written only when trace.wall_time is enabled, so
// traces of identical runs are byte-identical by default.

#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"
#include "evopo/orchestrator.hpp"

namespace evopo {

using Json = nlohmann::ordered_json;

inline constexpr int kTraceVersion = 1;

namespace detail {

inline Json real_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json optional_real(const std::optional<double>& x) { return x ? real_or_null(*x) : Json(nullptr); }

}  // namespace detail

class JsonlTraceWriter final : public TraceSink {
 public:
  JsonlTraceWriter(std::ostream& os, bool wall_time) : os_(os), wall_time_(wall_time) {}

  void header(const RunConfig& cfg, const tasks::Task& task, const RunState& state) override {
    Json j;
    j["kind"] = "header";
    j["format"] = "evopo-trace";
    j["version"] = kTraceVersion;
    j["task"] = task.name();
    Json c = Json::object();
    for (const auto& [k, v] : config_entries(cfg)) c[k] = v;
    j["config"] = std::move(c);
    j["shaping"] = {{"direction", state.shaping.direction == Direction::Maximize ? "maximize" : "minimize"},
                    {"y_min", state.shaping.y_min},
                    {"y_max", state.shaping.y_max},
                    {"c", state.shaping.c},
                    {"alpha_r", state.shaping.alpha_r}};
    const auto& seed = state.seed_candidate;
    j["seed_program"] = seed.program;
    j["seed_describe"] = task.describe(seed.program);
    j["seed_status"] = std::string(to_string(seed.outcome.status));
    j["seed_raw_score"] = seed.outcome.ok() ? Json(seed.outcome.y) : Json(nullptr);
    j["seed_reward"] = seed.reward;
    j["params_hash"] = hex64(state.params.fingerprint());
    j["entropy_units"] = "nats, mean over masked-in tokens";
    write(j);
  }

  void candidate(const Candidate& c, std::optional<double> cumulative_max, double wall_time) override {
    Json j;
    j["kind"] = "candidate";
    j["iteration"] = c.iteration_born;
    j["id"] = c.id;
    j["parent_id"] = c.parent_id;
    j["tokens"] = c.tokens.tokens;
    j["mask"] = c.tokens.mask;
    j["program"] = c.program;
    j["status"] = std::string(to_string(c.outcome.status));
    j["raw_score"] = c.outcome.ok() ? Json(c.outcome.y) : Json(nullptr);
    j["reward"] = c.reward;
    Json m = Json::object();
    for (const auto& [k, v] : c.outcome.metrics) m[k] = detail::real_or_null(v);
    j["metrics"] = std::move(m);
    j["cumulative_max"] = detail::optional_real(cumulative_max);
    if (wall_time_) {
      j["eval_wall_time"] = c.outcome.wall_time;
      j["wall_time"] = wall_time;
    }
    write(j);
  }

  void step(const StepDiagnostics& d, double wall_time) override {
    Json j;
    j["kind"] = "step";
    j["iteration"] = d.iteration;
    j["mode"] = std::string(to_string(d.mode));
    j["alpha"] = detail::real_or_null(d.alpha);
    j["skipped"] = d.skipped;
    auto branch = [&](const char* prefix, const std::optional<estimators::BranchOutcome<double>>& b) {
      const std::string p(prefix);
      j[p + "_skipped"] = b ? Json(b->skipped()) : Json(nullptr);
      j[p + "_mean"] = b ? detail::real_or_null(b->mean) : Json(nullptr);
      j[p + "_std"] = b ? detail::real_or_null(b->std) : Json(nullptr);
      j[p + "_values"] = b && !b->skipped() ? Json(b->values) : Json(nullptr);
    };
    branch("g", d.g_branch);
    branch("k", d.k_branch);
    j["beta"] = detail::optional_real(d.beta);
    j["advantages"] = d.advantages;
    j["loss"] = detail::real_or_null(d.loss);
    j["entropy"] = detail::real_or_null(d.entropy);
    j["grad_norm"] = detail::real_or_null(d.grad_norm);
    j["optimizer_steps"] = d.optimizer_steps;
    j["rejected"] = d.rejected;
    if (!d.error.empty()) j["error"] = d.error;
    j["hash_start"] = hex64(d.hash_start);
    j["hash_end"] = hex64(d.hash_end);
    j["hash_after"] = hex64(d.hash_after);
    j["cumulative_max"] = detail::optional_real(d.cumulative_max);
    if (wall_time_) j["wall_time"] = wall_time;
    write(j);
  }

 private:
  void write(const Json& j) {
    os_ << j.dump() << '\n';
    os_.flush();
    if (!os_) throw Error("trace: write failed");
  }

  std::ostream& os_;
  bool wall_time_;
};

/// Parses every non-empty line of a trace.
inline std::vector<Json> read_trace(std::istream& is) {
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw InvalidInput("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline const std::vector<std::string>& trace_series_names() {
  static const std::vector<std::string> names{"cumulative_max", "entropy", "grad_norm", "alpha"};
  return names;
}

/// (iteration, value) pairs of one step-record series, sorted by iteration. Null values read as NaN.
inline std::vector<std::pair<long long, double>> extract_series(const std::vector<Json>& records, const std::string& series) {
  bool known = false;
  for (const auto& n : trace_series_names()) known = known || n == series;
  if (!known) throw InvalidInput("unknown series '" + series + "'");
  std::vector<std::pair<long long, double>> out;
  for (const auto& r : records) {
    if (r.value("kind", "") != "step") continue;
    const auto& v = r.at(series);
    out.emplace_back(r.at("iteration").get<long long>(),
                     v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace evopo

#endif  // EVOPO_TRACE_HPP
