#pragma once

#include <cstdint>
#include <utility>

namespace hedgebench {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: draw k (k = 1, 2, ...) of stream `s` under seed
/// `seed` is splitmix64(key + (k - 1) * 0x9E3779B97F4A7C15) with
/// key = splitmix64(seed ^ splitmix64(s + 0x632BE59BD9B4E019)). Every stream is
/// addressable without touching any other, so per-path streams make simulation
/// results independent of scheduling.
///
/// uniform() maps the top 53 bits to ((x >> 11) + 0.5) * 2^-53, which lies
/// strictly inside (0, 1). normal_pair() is the Box-Muller transform on two
/// consecutive uniforms u1, u2:
///   z1 = sqrt(-2 ln u1) cos(2 pi u2),  z2 = sqrt(-2 ln u1) sin(2 pi u2).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  std::pair<double, double> normal_pair() noexcept;
  /// Single normal; consumes a Box-Muller pair every other call.
  double normal() noexcept;
  /// Uniform integer in [0, bound). Rejection sampling, so unbiased.
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream tags used to carve independent streams out of a single seed.
namespace streams {
inline constexpr std::uint64_t kInitBase = 0x494E495400000000ULL;     // "INIT"
inline constexpr std::uint64_t kShuffleBase = 0x5348554600000000ULL;  // "SHUF"
}  // namespace streams

}  // namespace hedgebench
