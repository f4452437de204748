#ifndef EVOPO_NUMERIC_HPP
#define EVOPO_NUMERIC_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <system_error>

namespace evopo {

template <std::floating_point T>
T mean(std::span<const T> xs) {
  return std::accumulate(xs.begin(), xs.end(), T{0}) / static_cast<T>(xs.size());
}

/// Population (1/N) standard deviation about a precomputed mean.
template <std::floating_point T>
T population_std(std::span<const T> xs, T mu) {
  T ss{0};
  for (T x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<T>(xs.size()));
}

template <std::floating_point T>
T population_std(std::span<const T> xs) {
  return population_std(xs, mean(xs));
}

/// Binomial coefficient as a double; exact for every value below 2^53.
inline double binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::int64_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c < 9.0e15 ? std::round(c) : c;
}

/// Shortest decimal string that round-trips to the same double. Negative zero prints as "0".
inline std::string format_double(double x) {
  if (x == 0.0) x = 0.0;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

/// 64-bit FNV-1a, used to fingerprint parameter snapshots.
class Fnv1a {
 public:
  void update(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }

  template <typename T>
  void update(std::span<const T> xs) {
    update(xs.data(), xs.size_bytes());
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

/// SplitMix64 step; derives independent, reproducible seeds for rng streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ (b + 0x632be59bd9b4e019ULL)); }

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix_seed(mix_seed(a, b), c); }

}  // namespace evopo

#endif  // EVOPO_NUMERIC_HPP
