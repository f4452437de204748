#ifndef EVOPO_TASKS_EPLB_HPP
#define EVOPO_TASKS_EPLB_HPP

// Expert-to-device load balancing. A candidate program is a short descriptor of
// a placement heuristic; it is scored on a fixed set of workload profiles by
// balancedness (mean device load / max device load) and by a speed term derived
// from a deterministic operation count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/tasks/task.hpp"

namespace evopo::tasks {

struct WorkloadProfile {
  int num_experts = 0;
  int num_devices = 1;
  std::vector<std::vector<double>> loads;  // one row per profile

  void validate() const {
    if (num_devices < 1 || num_experts < num_devices)
      throw InvalidInput("workload: need num_experts >= num_devices >= 1");
    if (loads.empty()) throw InvalidInput("workload: no profiles");
    for (const auto& row : loads) {
      if (row.size() != static_cast<std::size_t>(num_experts)) throw InvalidInput("workload: ragged profile row");
      bool positive = false;
      for (double x : row) {
        if (!std::isfinite(x) || x < 0) throw InvalidInput("workload: loads must be finite and nonnegative");
        positive = positive || x > 0;
      }
      if (!positive) throw DegenerateProfile("workload: profile has no positive load");
    }
  }
};

enum class SortMode { DescendingLoad, AscendingLoad, Unsorted };
enum class Placement { GreedyLeastLoaded, RoundRobin, Blocked };

struct HeuristicDescriptor {
  SortMode sort_mode = SortMode::DescendingLoad;
  Placement placement = Placement::GreedyLeastLoaded;
  int rebalance_passes = 0;  // [0, 3]
  int swap_window = 1;       // [1, 4]

  friend bool operator==(const HeuristicDescriptor&, const HeuristicDescriptor&) = default;
};

inline constexpr int kEplbTokens = 4;

/// Positional decoding; a missing or masked-out position reads as token 0.
inline HeuristicDescriptor eplb_decode(std::span<const int> tokens, std::span<const std::uint8_t> mask = {}) {
  auto at = [&](std::size_t i) -> int {
    if (i >= tokens.size()) return 0;
    if (!mask.empty() && (i >= mask.size() || !mask[i])) return 0;
    return std::abs(tokens[i]);
  };
  HeuristicDescriptor h;
  h.sort_mode = static_cast<SortMode>(at(0) % 3);
  h.placement = static_cast<Placement>(at(1) % 3);
  h.rebalance_passes = at(2) % 4;
  h.swap_window = at(3) % 4 + 1;
  return h;
}

inline HeuristicDescriptor eplb_decode(const policy::TokenSequence& seq) { return eplb_decode(seq.tokens, seq.mask); }

inline std::string describe(const HeuristicDescriptor& h) {
  static constexpr const char* sorts[] = {"desc", "asc", "unsorted"};
  static constexpr const char* places[] = {"greedy", "round_robin", "blocked"};
  return std::string("sort=") + sorts[static_cast<int>(h.sort_mode)] +
         " placement=" + places[static_cast<int>(h.placement)] +
         " passes=" + std::to_string(h.rebalance_passes) + " window=" + std::to_string(h.swap_window);
}

struct Assignment {
  std::vector<int> device_of;  // expert -> device
  std::uint64_t op_count = 0;
};

namespace detail {

// Stable merge sort of indices, counting comparisons.
inline void counted_merge_sort(std::vector<int>& idx, std::span<const double> key, bool descending,
                               std::uint64_t& comparisons) {
  std::vector<int> buf(idx.size());
  for (std::size_t width = 1; width < idx.size(); width *= 2) {
    for (std::size_t lo = 0; lo < idx.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, idx.size());
      const std::size_t hi = std::min(lo + 2 * width, idx.size());
      std::size_t a = lo, b = mid, o = lo;
      while (a < mid && b < hi) {
        ++comparisons;
        const double ka = key[static_cast<std::size_t>(idx[a])], kb = key[static_cast<std::size_t>(idx[b])];
        const bool take_b = descending ? kb > ka : kb < ka;
        buf[o++] = take_b ? idx[b++] : idx[a++];
      }
      while (a < mid) buf[o++] = idx[a++];
      while (b < hi) buf[o++] = idx[b++];
    }
    idx.swap(buf);
  }
}

}  // namespace detail

inline std::vector<double> device_loads(const Assignment& a, std::span<const double> loads, int num_devices) {
  std::vector<double> dev(static_cast<std::size_t>(num_devices), 0.0);
  for (std::size_t e = 0; e < loads.size(); ++e) dev[static_cast<std::size_t>(a.device_of[e])] += loads[e];
  return dev;
}

/// Runs the heuristic on one profile. op_count counts comparisons and moves.
inline Assignment eplb_assign(const HeuristicDescriptor& h, std::span<const double> loads, int num_devices) {
  const int E = static_cast<int>(loads.size());
  const int D = num_devices;
  if (D < 1 || E < 1) throw InvalidInput("eplb_assign: need at least one expert and one device");
  Assignment out;
  out.device_of.assign(static_cast<std::size_t>(E), -1);

  std::vector<int> order(static_cast<std::size_t>(E));
  std::iota(order.begin(), order.end(), 0);
  if (h.sort_mode != SortMode::Unsorted)
    detail::counted_merge_sort(order, loads, h.sort_mode == SortMode::DescendingLoad, out.op_count);

  std::vector<double> dev(static_cast<std::size_t>(D), 0.0);
  const int block = (E + D - 1) / D;
  for (int pos = 0; pos < E; ++pos) {
    const int e = order[static_cast<std::size_t>(pos)];
    int d = 0;
    switch (h.placement) {
      case Placement::GreedyLeastLoaded:
        for (int c = 1; c < D; ++c) {
          ++out.op_count;
          if (dev[static_cast<std::size_t>(c)] < dev[static_cast<std::size_t>(d)]) d = c;
        }
        break;
      case Placement::RoundRobin:
        d = pos % D;
        break;
      case Placement::Blocked:
        d = std::min(pos / block, D - 1);
        break;
    }
    ++out.op_count;
    out.device_of[static_cast<std::size_t>(e)] = d;
    dev[static_cast<std::size_t>(d)] += loads[static_cast<std::size_t>(e)];
  }

  for (int pass = 0; pass < h.rebalance_passes; ++pass) {
    int hi = 0, lo = 0;
    for (int c = 1; c < D; ++c) {
      out.op_count += 2;
      if (dev[static_cast<std::size_t>(c)] > dev[static_cast<std::size_t>(hi)]) hi = c;
      if (dev[static_cast<std::size_t>(c)] < dev[static_cast<std::size_t>(lo)]) lo = c;
    }
    if (hi == lo) break;
    const double l_hi = dev[static_cast<std::size_t>(hi)], l_lo = dev[static_cast<std::size_t>(lo)];
    std::vector<int> on_lo;
    for (int e : order)
      if (out.device_of[static_cast<std::size_t>(e)] == lo) on_lo.push_back(e);

    double best = l_hi;
    int best_x = -1, best_y = -1;
    int seen = 0;
    for (int x : order) {
      if (out.device_of[static_cast<std::size_t>(x)] != hi) continue;
      if (seen++ >= h.swap_window) break;
      const double lx = loads[static_cast<std::size_t>(x)];
      ++out.op_count;
      if (const double m = std::max(l_hi - lx, l_lo + lx); m < best) {
        best = m;
        best_x = x;
        best_y = -1;
      }
      for (int y : on_lo) {
        ++out.op_count;
        const double ly = loads[static_cast<std::size_t>(y)];
        if (const double m = std::max(l_hi - lx + ly, l_lo + lx - ly); m < best) {
          best = m;
          best_x = x;
          best_y = y;
        }
      }
    }
    if (best_x < 0) break;
    const double lx = loads[static_cast<std::size_t>(best_x)];
    out.device_of[static_cast<std::size_t>(best_x)] = lo;
    dev[static_cast<std::size_t>(hi)] -= lx;
    dev[static_cast<std::size_t>(lo)] += lx;
    ++out.op_count;
    if (best_y >= 0) {
      const double ly = loads[static_cast<std::size_t>(best_y)];
      out.device_of[static_cast<std::size_t>(best_y)] = hi;
      dev[static_cast<std::size_t>(lo)] -= ly;
      dev[static_cast<std::size_t>(hi)] += ly;
      ++out.op_count;
    }
  }
  return out;
}

/// Mean device load over max device load, in (0, 1].
inline double balancedness(std::span<const double> dev_loads) {
  const double mx = *std::max_element(dev_loads.begin(), dev_loads.end());
  if (!(mx > 0)) throw DegenerateProfile("balancedness: max device load is zero");
  const double total = std::accumulate(dev_loads.begin(), dev_loads.end(), 0.0);
  return std::min(1.0, total / static_cast<double>(dev_loads.size()) / mx);
}

struct EplbScore {
  double balancedness = 0.0;
  double speed = 0.0;
  double score = 0.0;
  std::uint64_t op_count = 0;
};

/// Scores one assignment per profile; speed = min(1, c_ref / total op count).
inline EplbScore eplb_score(std::span<const Assignment> assignments, const WorkloadProfile& w, double c_ref) {
  if (assignments.size() != w.loads.size()) throw InvalidInput("eplb_score: one assignment per profile required");
  if (!(c_ref > 0)) throw InvalidInput("eplb_score: reference op count must be positive");
  EplbScore s;
  for (std::size_t p = 0; p < assignments.size(); ++p) {
    const auto& a = assignments[p];
    if (a.device_of.size() != w.loads[p].size()) throw InvalidInput("eplb_score: assignment is not total");
    for (int d : a.device_of)
      if (d < 0 || d >= w.num_devices) throw InvalidInput("eplb_score: expert assigned to no valid device");
    s.balancedness += balancedness(device_loads(a, w.loads[p], w.num_devices));
    s.op_count += a.op_count;
  }
  s.balancedness /= static_cast<double>(assignments.size());
  s.speed = std::min(1.0, c_ref / static_cast<double>(std::max<std::uint64_t>(s.op_count, 1)));
  s.score = 0.5 * (s.balancedness + s.speed);
  return s;
}

inline std::uint64_t total_op_count(const HeuristicDescriptor& h, const WorkloadProfile& w) {
  std::uint64_t ops = 0;
  for (const auto& row : w.loads) ops += eplb_assign(h, row, w.num_devices).op_count;
  return ops;
}

inline constexpr int kBruteForceExpertLimit = 12;

/// Exact minimum achievable max device load (branch and bound over all assignments).
inline double brute_force_balance(std::span<const double> loads, int num_devices) {
  if (loads.size() > static_cast<std::size_t>(kBruteForceExpertLimit))
    throw EnumerationGuard("brute_force_balance: more than " + std::to_string(kBruteForceExpertLimit) + " experts");
  if (num_devices < 1 || loads.empty()) throw InvalidInput("brute_force_balance: empty instance");
  std::vector<double> sorted(loads.begin(), loads.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<double> dev(static_cast<std::size_t>(num_devices), 0.0);
  double best = std::accumulate(sorted.begin(), sorted.end(), 0.0);

  auto rec = [&](auto&& self, std::size_t i, double current_max) -> void {
    if (current_max >= best) return;
    if (i == sorted.size()) {
      best = current_max;
      return;
    }
    bool tried_empty = false;
    for (auto& d : dev) {
      if (d == 0.0) {
        if (tried_empty) continue;  // empty devices are interchangeable
        tried_empty = true;
      }
      d += sorted[i];
      self(self, i + 1, std::max(current_max, d));
      d -= sorted[i];
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

/// Heavy-tailed (lognormal) per-expert demand, seeded.
inline WorkloadProfile generate_profiles(int num_profiles, int num_experts, int num_devices, std::uint64_t seed) {
  WorkloadProfile w;
  w.num_experts = num_experts;
  w.num_devices = num_devices;
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> dist(0.0, 1.0);
  w.loads.assign(static_cast<std::size_t>(num_profiles), std::vector<double>(static_cast<std::size_t>(num_experts)));
  for (auto& row : w.loads)
    for (double& x : row) x = dist(rng);
  w.validate();
  return w;
}

/// Text format: first line "E D P", then P rows of E nonnegative reals.
inline WorkloadProfile parse_profiles(std::istream& is) {
  WorkloadProfile w;
  long long e = 0, d = 0, p = 0;
  if (!(is >> e >> d >> p) || e < 1 || d < 1 || p < 1) throw InvalidInput("workload file: bad header, expected 'E D P'");
  w.num_experts = static_cast<int>(e);
  w.num_devices = static_cast<int>(d);
  w.loads.assign(static_cast<std::size_t>(p), std::vector<double>(static_cast<std::size_t>(e)));
  for (auto& row : w.loads)
    for (double& x : row)
      if (!(is >> x)) throw InvalidInput("workload file: expected " + std::to_string(e * p) + " load values");
  w.validate();
  return w;
}

inline WorkloadProfile load_profiles(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open workload file " + path);
  return parse_profiles(is);
}

enum class SpeedMode { OpCount, WallClock };

class EplbTask final : public Task {
 public:
  explicit EplbTask(WorkloadProfile w, SpeedMode mode = SpeedMode::OpCount) : w_(std::move(w)), mode_(mode) {
    w_.validate();
    c_ref_ = static_cast<double>(total_op_count(HeuristicDescriptor{}, w_));
    if (mode_ == SpeedMode::WallClock) t_ref_ = time_heuristic(HeuristicDescriptor{});
    seed_score_ = score(seed_program()).score;
  }

  std::string name() const override { return "eplb"; }
  // unsorted round-robin: a deliberately weak starting point
  Program seed_program() const override { return {2, 1, 0, 0}; }
  int token_count() const override { return kEplbTokens; }

  Program realize(const Program&, const policy::TokenSequence& seq) const override {
    Program prog(kEplbTokens, 0);
    for (std::size_t i = 0; i < prog.size() && i < seq.size(); ++i)
      if (seq.mask[i]) prog[i] = seq.tokens[i];
    return prog;
  }

  EplbScore score(const Program& program) const {
    const auto h = eplb_decode(program);
    std::vector<Assignment> as;
    as.reserve(w_.loads.size());
    for (const auto& row : w_.loads) as.push_back(eplb_assign(h, row, w_.num_devices));
    auto s = eplb_score(as, w_, c_ref_);
    if (mode_ == SpeedMode::WallClock) {
      s.speed = std::clamp(t_ref_ / std::max(time_heuristic(h), 1e-12), std::numeric_limits<double>::min(), 1.0);
      s.score = 0.5 * (s.balancedness + s.speed);
    }
    return s;
  }

  EvaluationOutcome evaluate(const Program& program, long long, std::uint64_t) const override {
    const auto s = score(program);
    return EvaluationOutcome::parsed(
        s.score, {{"balancedness", s.balancedness}, {"speed", s.speed}, {"op_count", static_cast<double>(s.op_count)}});
  }

  Program random_program(std::mt19937_64& rng) const override {
    return {static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), static_cast<int>(rng() % 4),
            static_cast<int>(rng() % 4)};
  }

  ShapingConfig default_shaping() const override {
    ShapingConfig cfg;
    if (seed_score_ < 1.0) std::tie(cfg.y_min, cfg.y_max) = default_bounds(seed_score_, 1.0);
    return cfg;
  }

  std::string describe(const Program& program) const override { return tasks::describe(eplb_decode(program)); }

  const WorkloadProfile& profiles() const { return w_; }
  double reference_op_count() const { return c_ref_; }
  double seed_score() const { return seed_score_; }

 private:
  double time_heuristic(const HeuristicDescriptor& h) const {
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 5; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (const auto& row : w_.loads) (void)eplb_assign(h, row, w_.num_devices);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return best;
  }

  WorkloadProfile w_;
  SpeedMode mode_;
  double c_ref_ = 1.0;
  double t_ref_ = 0.0;
  double seed_score_ = 0.0;
};

}  // namespace evopo::tasks

#endif  // EVOPO_TASKS_EPLB_HPP
