#ifndef EVOPO_TASKS_TASK_HPP
#define EVOPO_TASKS_TASK_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evopo/policy.hpp"
#include "evopo/reward_shaping.hpp"

namespace evopo::tasks {

/// A candidate program: a task-specific integer encoding.
using Program = std::vector<int>;

/// An evolvable task. Implementations must be safe to evaluate concurrently
/// (evaluate is const and draws randomness only from the seed it is given).
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual Program seed_program() const = 0;
  /// Number of mutation tokens the policy emits per candidate.
  virtual int token_count() const = 0;
  /// Applies a sampled token sequence to the parent, producing the child program.
  virtual Program realize(const Program& parent, const policy::TokenSequence& seq) const = 0;
  virtual EvaluationOutcome evaluate(const Program& program, long long iteration, std::uint64_t seed) const = 0;
  /// A uniformly random program, used by the random-search baseline.
  virtual Program random_program(std::mt19937_64& rng) const = 0;
  virtual ShapingConfig default_shaping() const = 0;
  virtual std::string describe(const Program& program) const = 0;
};

}  // namespace evopo::tasks

#endif  // EVOPO_TASKS_TASK_HPP
