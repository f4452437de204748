#ifndef EVOPO_TASKS_SYNTHETIC_HPP
#define EVOPO_TASKS_SYNTHETIC_HPP

// Synthetic landscape with controllable reward compression: a program is a
// genome of G genes over Q circular values, its latent quality q in [0, 1] is
// one minus the mean circular distance to a hidden target, and the observed
// score is c + delta(t) * q + noise.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"
#include "evopo/tasks/task.hpp"

namespace evopo::tasks {

struct SyntheticLandscape {
  double base = 0.0;         // c
  double delta0 = 1.0;
  double delta_decay = 0.0;  // T_delta; <= 0 keeps delta constant
  double noise = 0.0;        // std of additive Gaussian noise on the score
  int genes = 8;
  int values = 16;
  std::uint64_t target_seed = 7;

  void validate() const {
    if (!(delta0 > 0) || !std::isfinite(delta0)) throw InvalidInput("synthetic: delta0 must be positive");
    if (!(noise >= 0)) throw InvalidInput("synthetic: noise must be nonnegative");
    if (genes < 1 || values < 2) throw InvalidInput("synthetic: need genes >= 1 and values >= 2");
  }

  double delta(long long t) const {
    if (t < 0) throw InvalidIteration("synthetic: negative iteration");
    if (delta_decay <= 0) return delta0;
    return delta0 * std::exp(-static_cast<double>(t) / delta_decay);
  }

  std::vector<int> target() const {
    std::mt19937_64 rng(target_seed);
    std::vector<int> g(static_cast<std::size_t>(genes));
    for (int& x : g) x = static_cast<int>(rng() % static_cast<std::uint64_t>(values));
    return g;
  }
};

/// Latent quality: 1 - mean circular distance to the target / (Q/2), in [0, 1].
inline double latent_quality(const Program& genome, const std::vector<int>& target, int values) {
  if (genome.size() != target.size()) throw InvalidInput("synthetic: genome length mismatch");
  const double half = static_cast<double>(values / 2);
  double dist = 0.0;
  for (std::size_t i = 0; i < genome.size(); ++i) {
    int d = std::abs(genome[i] - target[i]) % values;
    dist += std::min(d, values - d);
  }
  return 1.0 - dist / (half * static_cast<double>(genome.size()));
}

/// Applies edit tokens: token v edits gene v % G with op (v / G) % 3 (0 none, 1 +1, 2 -1), modulo Q.
inline Program apply_edits(const Program& parent, const policy::TokenSequence& seq, int genes, int values) {
  Program child = parent;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (!seq.mask[t]) continue;
    const int v = seq.tokens[t];
    const int op = (v / genes) % 3;
    auto& g = child[static_cast<std::size_t>(v % genes)];
    if (op == 1) g = (g + 1) % values;
    if (op == 2) g = (g + values - 1) % values;
  }
  return child;
}

inline EvaluationOutcome synthetic_eval(const Program& genome, long long t, const SyntheticLandscape& land,
                                        const std::vector<int>& target, std::uint64_t seed) {
  const double q = latent_quality(genome, target, land.values);
  double y = land.base + land.delta(t) * q;
  if (land.noise > 0) {
    std::mt19937_64 rng(mix_seed(seed));
    y += std::normal_distribution<double>(0.0, land.noise)(rng);
  }
  return EvaluationOutcome::parsed(y, {{"quality", q}, {"delta", land.delta(t)}});
}

class SyntheticTask final : public Task {
 public:
  explicit SyntheticTask(SyntheticLandscape land, int edit_tokens = 8)
      : land_(land), target_(land.target()), edit_tokens_(edit_tokens) {
    land_.validate();
    if (edit_tokens_ < 1) throw InvalidInput("synthetic: need at least one edit token");
  }

  std::string name() const override { return "synthetic"; }
  Program seed_program() const override { return Program(static_cast<std::size_t>(land_.genes), 0); }
  int token_count() const override { return edit_tokens_; }

  Program realize(const Program& parent, const policy::TokenSequence& seq) const override {
    return apply_edits(parent, seq, land_.genes, land_.values);
  }

  EvaluationOutcome evaluate(const Program& program, long long t, std::uint64_t seed) const override {
    return synthetic_eval(program, t, land_, target_, seed);
  }

  Program random_program(std::mt19937_64& rng) const override {
    Program g(static_cast<std::size_t>(land_.genes));
    for (int& x : g) x = static_cast<int>(rng() % static_cast<std::uint64_t>(land_.values));
    return g;
  }

  ShapingConfig default_shaping() const override {
    ShapingConfig cfg;
    cfg.y_min = land_.base;
    cfg.y_max = land_.base + land_.delta0;
    return cfg;
  }

  std::string describe(const Program& program) const override {
    std::string s;
    for (int g : program) s += (s.empty() ? "" : " ") + std::to_string(g);
    return s;
  }

  const SyntheticLandscape& landscape() const { return land_; }
  double quality(const Program& program) const { return latent_quality(program, target_, land_.values); }

 private:
  SyntheticLandscape land_;
  std::vector<int> target_;
  int edit_tokens_;
};

}  // namespace evopo::tasks

#endif  // EVOPO_TASKS_SYNTHETIC_HPP
