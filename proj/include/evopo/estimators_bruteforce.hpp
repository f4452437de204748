#ifndef EVOPO_ESTIMATORS_BRUTEFORCE_HPP
#define EVOPO_ESTIMATORS_BRUTEFORCE_HPP

// Literal subset-enumeration forms of the best-of-k estimators. These exist as
// oracles for the closed forms in estimators.hpp and are exponential in N.

#include <bit>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"

namespace evopo::estimators {

inline constexpr std::size_t kEnumerationLimit = 20;

namespace detail {

template <typename Fn>
void for_each_subset(std::size_t n, int k, Fn&& fn) {
  const std::uint32_t end = std::uint32_t{1} << n;
  for (std::uint32_t mask = 0; mask < end; ++mask)
    if (std::popcount(mask) == k) fn(mask);
}

inline void require_enumerable(std::size_t n, int k, int k_min, const char* who) {
  if (n > kEnumerationLimit)
    throw EnumerationGuard(std::string(who) + ": N=" + std::to_string(n) + " exceeds enumeration limit " +
                           std::to_string(kEnumerationLimit));
  if (k < k_min || static_cast<std::size_t>(k) > n)
    throw InvalidK(std::string(who) + ": k=" + std::to_string(k) + " out of range for N=" + std::to_string(n));
}

}  // namespace detail

template <std::floating_point T>
std::vector<T> sloo_weights_bruteforce(std::span<const T> g, int k) {
  const std::size_t n = g.size();
  detail::require_enumerable(n, k, 2, "sloo_weights_bruteforce");
  std::vector<T> out(n, T{0});
  detail::for_each_subset(n, k, [&](std::uint32_t mask) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask >> i & 1U)) continue;
      T best = -std::numeric_limits<T>::infinity();
      T best_without = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!(mask >> j & 1U)) continue;
        best = std::max(best, g[j]);
        if (j != i) best_without = std::max(best_without, g[j]);
      }
      out[i] += best - best_without;
    }
  });
  const T total = static_cast<T>(binomial(static_cast<std::int64_t>(n), k));
  for (T& w : out) w /= total;
  return out;
}

template <std::floating_point T>
std::vector<T> pkpo_weights_bruteforce(std::span<const T> g, int k) {
  const std::size_t n = g.size();
  detail::require_enumerable(n, k, 1, "pkpo_weights_bruteforce");
  std::vector<T> out(n, T{0});
  detail::for_each_subset(n, k, [&](std::uint32_t mask) {
    T best = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask >> j & 1U) best = std::max(best, g[j]);
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) out[i] += best;
  });
  const T total = static_cast<T>(binomial(static_cast<std::int64_t>(n), k));
  for (T& w : out) w /= total;
  return out;
}

/// Exact E[max over a uniformly random size-k subset].
template <std::floating_point T>
T expected_best_of_k_bruteforce(std::span<const T> g, int k) {
  const std::size_t n = g.size();
  detail::require_enumerable(n, k, 1, "expected_best_of_k_bruteforce");
  T sum{0};
  std::size_t count = 0;
  detail::for_each_subset(n, k, [&](std::uint32_t mask) {
    T best = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask >> j & 1U) best = std::max(best, g[j]);
    sum += best;
    ++count;
  });
  return sum / static_cast<T>(count);
}

inline std::vector<double> sloo_weights_bruteforce(const std::vector<double>& g, int k) {
  return sloo_weights_bruteforce(std::span<const double>(g), k);
}

}  // namespace evopo::estimators

#endif  // EVOPO_ESTIMATORS_BRUTEFORCE_HPP
