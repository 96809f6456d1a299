#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dynpoint {

/// Counter-based generator: draw n of stream `key` is splitmix64(key + n·γ).
/// Uniforms take the top 53 bits; normals use Box–Muller on two consecutive
/// uniforms. Output depends only on (key, counter), so streams are
/// reproducible across platforms and independent of draw order elsewhere.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Key for a named sub-stream, e.g. stream_key(seed, kNoiseTag, frame).
  template <typename... Tags>
  static std::uint64_t stream_key(std::uint64_t seed, Tags... tags) {
    std::uint64_t k = mix(seed + kGamma);
    ((k = mix(k ^ (mix(static_cast<std::uint64_t>(tags) + kGamma)))), ...);
    return k;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace dynpoint
