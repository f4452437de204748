#ifndef EVOPO_ESTIMATORS_HPP
#define EVOPO_ESTIMATORS_HPP

// Advantage and credit-assignment estimators for one rollout group.
//
// Every function here is a pure function of its arguments. Rewards arrive as a
// span of finite values, one per rollout; failures must already be mapped to
// the failure reward by reward shaping.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"

namespace evopo::estimators {

struct EstimatorConfig {
  double eps_num = 1e-8;
  double eps_skip = 1e-6;
  int k = 4;
  double gamma = 0.3;
  double beta_max = 50.0;
  double tol = 1e-6;
};

namespace detail {

inline void require_group(std::size_t n, const char* who) {
  if (n < 2) throw InvalidGroup(std::string(who) + ": group size must be at least 2, got " + std::to_string(n));
}

/// Indices sorted by descending value; equal values keep ascending index order.
template <std::floating_point T>
std::vector<std::size_t> descending_order(std::span<const T> g) {
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
  return order;
}

}  // namespace detail

/// GRPO z-score: (R_i - mean) / (population std + eps_num).
template <std::floating_point T>
std::vector<T> grpo_advantage(std::span<const T> rewards, T eps_num) {
  detail::require_group(rewards.size(), "grpo_advantage");
  const T mu = mean(rewards);
  const T denom = population_std(rewards, mu) + eps_num;
  std::vector<T> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const T centered = rewards[i] - mu;
    out[i] = centered == T{0} ? T{0} : centered / denom;
  }
  return out;
}

/// Raw group-relative baseline R_i - mean(R).
template <std::floating_point T>
std::vector<T> group_relative_raw(std::span<const T> rewards) {
  detail::require_group(rewards.size(), "group_relative_raw");
  const T mu = mean(rewards);
  std::vector<T> out(rewards.size());
  std::transform(rewards.begin(), rewards.end(), out.begin(), [mu](T r) { return r - mu; });
  return out;
}

/// KL(q_beta || uniform) with q_beta = softmax(beta * R), evaluated in log space.
template <std::floating_point T>
T entropic_kl(std::span<const T> rewards, T beta) {
  const T top = *std::max_element(rewards.begin(), rewards.end());
  T z{0};
  for (T r : rewards) z += std::exp(beta * (r - top));
  const T lse = std::log(z);
  T kl = std::log(static_cast<T>(rewards.size()));
  for (T r : rewards) {
    const T log_q = beta * (r - top) - lse;
    kl += std::exp(log_q) * log_q;
  }
  return std::max(kl, T{0});
}

template <std::floating_point T>
struct EntropicBeta {
  T beta{0};
  /// True when even beta_max cannot reach the budget; beta is then beta_max.
  bool saturated = false;
  T kl{0};
};

/// Inverse temperature meeting KL(q_beta || uniform) = gamma, found by bisection on [0, beta_max].
///
/// KL is non-decreasing in beta >= 0 (its derivative is beta * Var_q(R)), so the
/// bracket [0, beta_max] contains the root whenever KL(beta_max) >= gamma.
template <std::floating_point T>
EntropicBeta<T> entropic_beta(std::span<const T> rewards, T gamma, T beta_max, T tol) {
  detail::require_group(rewards.size(), "entropic_beta");
  if (!(gamma >= 0) || !(beta_max > 0) || !(tol > 0))
    throw InvalidInput("entropic_beta: need gamma >= 0, beta_max > 0, tol > 0");
  if (gamma == T{0}) return {T{0}, false, T{0}};

  const auto [lo_it, hi_it] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo_it == *hi_it) {
    if (gamma > tol) throw UnreachableBudget("entropic_beta: constant rewards have zero KL for every beta");
    return {T{0}, false, T{0}};
  }

  const T kl_max = entropic_kl(rewards, beta_max);
  if (kl_max < gamma - tol) return {beta_max, true, kl_max};

  T lo{0};
  T hi = beta_max;
  for (int it = 0; it < 200 && hi - lo > std::numeric_limits<T>::epsilon() * std::max(T{1}, hi); ++it) {
    const T mid = lo + (hi - lo) / 2;
    if (entropic_kl(rewards, mid) < gamma)
      lo = mid;
    else
      hi = mid;
  }
  const T beta = lo + (hi - lo) / 2;
  return {beta, false, entropic_kl(rewards, beta)};
}

/// Leave-one-out entropic advantage exp(beta (R_i - R_max)) / (Z_{-i} + eps_num) - 1.
template <std::floating_point T>
std::vector<T> entropic_advantage(std::span<const T> rewards, T beta, T eps_num) {
  const std::size_t n = rewards.size();
  detail::require_group(n, "entropic_advantage");
  if (!(beta >= 0)) throw InvalidInput("entropic_advantage: beta must be >= 0");
  const T top = *std::max_element(rewards.begin(), rewards.end());
  std::vector<T> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = std::exp(beta * (rewards[i] - top));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T z_loo{0};
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) z_loo += e[j];
    z_loo /= static_cast<T>(n - 1);
    out[i] = e[i] / (z_loo + eps_num) - T{1};
  }
  return out;
}

/// Best-of-k (PKPO) weights: average over size-k subsets containing i of the subset max,
/// normalised by C(N, k).
///
/// Closed form over the descending order: for the element at position p, the subsets
/// it wins number C(N-p-1, k-1), and for each higher-ranked q the subsets won by q
/// that also contain p number C(N-q-2, k-2).
template <std::floating_point T>
std::vector<T> pkpo_weights(std::span<const T> rewards, int k) {
  const auto n = static_cast<std::int64_t>(rewards.size());
  if (n < 1 || k < 1 || k > n)
    throw InvalidK("pkpo_weights: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const auto order = detail::descending_order(rewards);
  const double total = binomial(n, k);
  std::vector<T> out(rewards.size());
  // prefix accumulates sum over higher-ranked q of g_q * C(N-q-2, k-2)
  T prefix{0};
  for (std::int64_t p = 0; p < n; ++p) {
    const T g = rewards[order[static_cast<std::size_t>(p)]];
    const T own = g * static_cast<T>(binomial(n - p - 1, k - 1));
    out[order[static_cast<std::size_t>(p)]] = (own + prefix) / static_cast<T>(total);
    prefix += g * static_cast<T>(binomial(n - p - 2, k - 2));
  }
  return out;
}

/// SLOO_{k-1} weights: the average, over size-k subsets containing i, of the margin
/// by which i raises the subset max above the best of the other k-1 members.
///
/// O(N^2) order-statistics form. With ordinal descending ranks (ties broken by
/// index), i wins exactly the subsets whose other members rank below it, and the
/// runner-up j fixes the margin; there are C(N - rank_j, k-2) such subsets.
/// Tied values contribute a zero margin, so the result is value-based.
template <std::floating_point T>
std::vector<T> sloo_weights(std::span<const T> rewards, int k) {
  const auto n = static_cast<std::int64_t>(rewards.size());
  if (k < 2 || k > n)
    throw InvalidK("sloo_weights: k=" + std::to_string(k) + " outside [2, " + std::to_string(n) + "]");
  const auto order = detail::descending_order(rewards);
  const double total = binomial(n, k);
  std::vector<T> out(rewards.size(), T{0});
  for (std::int64_t p = 0; p < n; ++p) {
    const T gi = rewards[order[static_cast<std::size_t>(p)]];
    T acc{0};
    // ranks are 1-based: element at position q has rank q+1 and N-(q+1) elements below it
    for (std::int64_t q = p + 1; q < n; ++q) {
      const double count = binomial(n - (q + 1), k - 2);
      if (count == 0.0) break;
      acc += static_cast<T>(count) * (gi - rewards[order[static_cast<std::size_t>(q)]]);
    }
    out[order[static_cast<std::size_t>(p)]] = acc / static_cast<T>(total);
  }
  return out;
}

enum class BranchKind { Standardized, Skipped };

template <std::floating_point T>
struct BranchOutcome {
  BranchKind kind = BranchKind::Skipped;
  std::vector<T> values;  // empty when Skipped
  T mean{0};
  T std{0};

  bool skipped() const { return kind == BranchKind::Skipped; }
};

/// Within-group z-score of one estimator branch, or Skipped when its spread has
/// collapsed (std non-finite or below eps_skip).
template <std::floating_point T>
BranchOutcome<T> standardize(std::span<const T> branch, T eps_num, T eps_skip) {
  detail::require_group(branch.size(), "standardize");
  BranchOutcome<T> out;
  out.mean = mean(branch);
  out.std = population_std(branch, out.mean);
  if (!std::isfinite(out.std) || !std::isfinite(out.mean) || out.std < eps_skip) {
    out.kind = BranchKind::Skipped;
    return out;
  }
  out.kind = BranchKind::Standardized;
  out.values.resize(branch.size());
  const T denom = out.std + eps_num;
  for (std::size_t i = 0; i < branch.size(); ++i) out.values[i] = (branch[i] - out.mean) / denom;
  return out;
}

/// Phase-adaptive mixture (1 - alpha) * G + alpha * K of two standardized branches.
///
/// A skipped branch contributes nothing; the survivor keeps its own coefficient
/// (no renormalisation). Returns nullopt when no branch contributes.
template <std::floating_point T>
std::optional<std::vector<T>> mix_advantages(const BranchOutcome<T>& g_std, const BranchOutcome<T>& k_std, T alpha) {
  if (!(alpha >= 0 && alpha <= 1)) throw InvalidInput("mix_advantages: alpha must lie in [0, 1]");
  if (!g_std.skipped() && !k_std.skipped() && g_std.values.size() != k_std.values.size())
    throw InvalidInput("mix_advantages: branch lengths differ");

  const T wg = T{1} - alpha;
  const T wk = alpha;
  const bool use_g = !g_std.skipped() && wg > 0;
  const bool use_k = !k_std.skipped() && wk > 0;
  if (!use_g && !use_k) return std::nullopt;

  const std::size_t n = use_g ? g_std.values.size() : k_std.values.size();
  std::vector<T> out(n, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (use_g) out[i] += wg * g_std.values[i];
    if (use_k) out[i] += wk * k_std.values[i];
  }
  return out;
}

/// Linear phase schedule alpha_t = t / T.
inline double phase_alpha(long long t, long long total) {
  if (total < 1) throw InvalidIteration("phase_alpha: total iterations must be >= 1");
  if (t < 0 || t > total)
    throw InvalidIteration("phase_alpha: t=" + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");
  return static_cast<double>(t) / static_cast<double>(total);
}

/// Convenience overloads for the common std::vector<double> case.
inline std::vector<double> grpo_advantage(const std::vector<double>& r, double eps_num) {
  return grpo_advantage(std::span<const double>(r), eps_num);
}
inline std::vector<double> group_relative_raw(const std::vector<double>& r) {
  return group_relative_raw(std::span<const double>(r));
}
inline std::vector<double> pkpo_weights(const std::vector<double>& r, int k) {
  return pkpo_weights(std::span<const double>(r), k);
}
inline std::vector<double> sloo_weights(const std::vector<double>& r, int k) {
  return sloo_weights(std::span<const double>(r), k);
}
inline BranchOutcome<double> standardize(const std::vector<double>& b, double eps_num, double eps_skip) {
  return standardize(std::span<const double>(b), eps_num, eps_skip);
}
inline EntropicBeta<double> entropic_beta(const std::vector<double>& r, double gamma, double beta_max, double tol) {
  return entropic_beta(std::span<const double>(r), gamma, beta_max, tol);
}
inline std::vector<double> entropic_advantage(const std::vector<double>& r, double beta, double eps_num) {
  return entropic_advantage(std::span<const double>(r), beta, eps_num);
}

}  // namespace evopo::estimators

#endif  // EVOPO_ESTIMATORS_HPP
