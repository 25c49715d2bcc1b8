#include "hedgebench/rng.hpp"

#include <cmath>
#include <numbers>

namespace hedgebench {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamSalt = 0x632BE59BD9B4E019ULL;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;
}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(splitmix64(seed ^ splitmix64(stream + kStreamSalt))) {}

std::uint64_t CounterRng::next_u64() noexcept {
  // splitmix64 adds the gamma itself, so draw k sees key + (k - 1) * gamma.
  const std::uint64_t x = splitmix64(key_ + counter_ * kGamma);
  ++counter_;
  return x;
}

double CounterRng::uniform() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * kTwoPow53Inv;
}

std::pair<double, double> CounterRng::normal_pair() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(angle), r * std::sin(angle)};
}

double CounterRng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const auto [z1, z2] = normal_pair();
  spare_ = z2;
  has_spare_ = true;
  return z1;
}

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % bound;
  }
}

}  // namespace hedgebench
