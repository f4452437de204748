#ifndef EVOPO_REWARD_SHAPING_HPP
#define EVOPO_REWARD_SHAPING_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "evopo/error.hpp"

namespace evopo {

enum class Direction { Maximize, Minimize };

inline constexpr double kFailureReward = -1.0;

struct ShapingConfig {
  Direction direction = Direction::Maximize;
  double y_min = 0.0;
  double y_max = 1.0;
  double c = 5.0;
  double alpha_r = 1.0;

  void validate() const {
    if (!(y_min < y_max)) throw DegenerateBounds("shaping: y_min must be < y_max");
    if (!(c > 0)) throw InvalidInput("shaping: multiplier c must be > 0");
    if (!(alpha_r > 0)) throw InvalidInput("shaping: exponent alpha_r must be > 0");
  }
};

enum class EvalStatus { Parsed, ParseFailure, EvaluatorError, Timeout };

inline std::string_view to_string(EvalStatus s) {
  switch (s) {
    case EvalStatus::Parsed: return "parsed";
    case EvalStatus::ParseFailure: return "parse_failure";
    case EvalStatus::EvaluatorError: return "evaluator_error";
    case EvalStatus::Timeout: return "timeout";
  }
  return "unknown";
}

struct EvaluationOutcome {
  EvalStatus status = EvalStatus::ParseFailure;
  double y = 0.0;  // meaningful only when status == Parsed
  double wall_time = 0.0;
  std::map<std::string, double> metrics;

  /// A parsed score; non-finite values are reclassified as parse failures.
  static EvaluationOutcome parsed(double y, std::map<std::string, double> metrics = {}) {
    EvaluationOutcome o;
    if (std::isfinite(y)) {
      o.status = EvalStatus::Parsed;
      o.y = y;
    }
    o.metrics = std::move(metrics);
    return o;
  }

  static EvaluationOutcome failure(EvalStatus status) {
    EvaluationOutcome o;
    o.status = status == EvalStatus::Parsed ? EvalStatus::ParseFailure : status;
    return o;
  }

  bool ok() const { return status == EvalStatus::Parsed && std::isfinite(y); }
};

/// Normalisation bounds from a task's initial and target scores.
inline std::pair<double, double> default_bounds(double y_init, double y_target) {
  if (y_init == y_target) throw DegenerateBounds("default_bounds: y_init equals y_target");
  return {std::min(y_init, y_target), std::max(y_init, y_target)};
}

/// Direction-aware progress u(y) in [0, 1].
inline double progress(double y, const ShapingConfig& cfg) {
  const double span = cfg.y_max - cfg.y_min;
  const double num = cfg.direction == Direction::Maximize ? y - cfg.y_min : cfg.y_max - y;
  return std::clamp(num / span, 0.0, 1.0);
}

/// c * u(y)^alpha_r for a parsed finite score, kFailureReward otherwise.
inline double shape_reward(const EvaluationOutcome& outcome, const ShapingConfig& cfg) {
  if (!outcome.ok()) return kFailureReward;
  const double u = progress(outcome.y, cfg);
  return cfg.alpha_r == 1.0 ? cfg.c * u : cfg.c * std::pow(u, cfg.alpha_r);
}

}  // namespace evopo

#endif  // EVOPO_REWARD_SHAPING_HPP
