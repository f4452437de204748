#ifndef EVOPO_ARCHIVE_HPP
#define EVOPO_ARCHIVE_HPP

// Bounded frontier of the best evaluated programs, ordered best first.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/policy.hpp"
#include "evopo/reward_shaping.hpp"
#include "evopo/tasks/task.hpp"

namespace evopo {

struct Candidate {
  std::int64_t id = -1;
  std::int64_t parent_id = -1;  // -1 for the seed program
  policy::TokenSequence tokens;
  tasks::Program program;
  EvaluationOutcome outcome;
  double reward = kFailureReward;
  long long iteration_born = -1;
};

class FrontierArchive {
 public:
  explicit FrontierArchive(std::size_t capacity = 16, Direction direction = Direction::Maximize)
      : capacity_(capacity), direction_(direction) {
    if (capacity_ == 0) throw InvalidInput("archive capacity must be positive");
  }

  /// Larger is better regardless of the task's direction.
  double oriented(double y) const { return direction_ == Direction::Maximize ? y : -y; }

  /// Inserts an evaluated candidate if it qualifies. Failed candidates are never archived.
  /// Returns true when the candidate was inserted.
  bool update(const Candidate& c) {
    if (!c.outcome.ok()) return false;
    const double y = c.outcome.y;
    if (!best_ || oriented(y) > oriented(*best_)) best_ = y;
    if (entries_.size() >= capacity_ && !(oriented(y) > oriented(entries_.back().outcome.y))) return false;
    for (const auto& e : entries_)
      if (e.id == c.id) throw InvalidInput("archive: duplicate candidate id " + std::to_string(c.id));
    // after existing entries with an equal score, so earlier discoveries keep precedence
    auto pos = std::find_if(entries_.begin(), entries_.end(),
                            [&](const Candidate& e) { return oriented(y) > oriented(e.outcome.y); });
    entries_.insert(pos, c);
    if (entries_.size() > capacity_) entries_.pop_back();
    return true;
  }

  /// Softmax over oriented raw scores at temperature tau (tau <= 0 picks the best entry).
  /// Returns nullptr when empty.
  const Candidate* select(std::mt19937_64& rng, double tau) const {
    if (entries_.empty()) return nullptr;
    if (tau <= 0 || entries_.size() == 1) return &entries_.front();
    const double top = oriented(entries_.front().outcome.y);
    std::vector<double> w(entries_.size());
    double z = 0.0;
    for (std::size_t i = 0; i < entries_.size(); ++i) z += (w[i] = std::exp((oriented(entries_[i].outcome.y) - top) / tau));
    double u = policy::detail::unit_uniform(rng) * z;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (u < w[i]) return &entries_[i];
      u -= w[i];
    }
    return &entries_.back();
  }

  const std::vector<Candidate>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  Direction direction() const { return direction_; }
  /// Best raw score ever archived (survives truncation); empty before the first success.
  std::optional<double> cumulative_best() const { return best_; }

  bool is_sorted() const {
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (oriented(entries_[i].outcome.y) > oriented(entries_[i - 1].outcome.y)) return false;
    return true;
  }

 private:
  std::size_t capacity_;
  Direction direction_;
  std::vector<Candidate> entries_;
  std::optional<double> best_;
};

}  // namespace evopo

#endif  // EVOPO_ARCHIVE_HPP
