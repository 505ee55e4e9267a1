#pragma once

// Counter-style seed derivation and a small portable random stream.
//
// Every random quantity in the library is a pure function of a master seed
// and an index tuple, so replications can run in any order on any number of
// workers and still reproduce bit-identical panels.

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>

namespace nashevt {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer (Stafford "mix13"). Full avalanche on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a 64-bit seed from a master seed and an ordered index tuple.
///
///   h_0     = mix64(master + G)
///   h_k     = mix64(h_{k-1} ^ mix64(index_k + G * k))      k = 1..n
///   result  = mix64(h_n + n)
///
/// with G the golden-ratio increment. Position k is folded into every index so
/// permuted tuples differ, and the final length tag separates (s, 0) from (s).
/// Only integer arithmetic is used, so the value is identical on every
/// platform.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::span<const std::uint64_t> indices) noexcept {
  std::uint64_t h = mix64(master + kGoldenGamma);
  std::uint64_t pos = 0;
  for (std::uint64_t idx : indices) {
    ++pos;
    h = mix64(h ^ mix64(idx + kGoldenGamma * pos));
  }
  return mix64(h + pos);
}

template <std::integral... Ix>
constexpr std::uint64_t derive_seed(std::uint64_t master, Ix... indices) noexcept {
  const std::array<std::uint64_t, sizeof...(Ix)> tuple{static_cast<std::uint64_t>(indices)...};
  return derive_seed(master, std::span<const std::uint64_t>(tuple));
}

/// Stream tags used as the second index of derive_seed. Keeping them in one
/// place prevents two consumers from sharing a substream by accident.
enum class StreamTag : std::uint64_t {
  kInitialState = 1,
  kIncrements = 2,
  kLimitSampler = 3,
  kLampertiPanel = 4,
  kPilot = 5,
  kSynthetic = 6,
};

/// xoshiro256** seeded from a single 64-bit value through SplitMix64.
/// Satisfies UniformRandomBitGenerator; the distribution helpers below are
/// implemented here (not with <random> distributions) so the produced values
/// do not depend on the standard library vendor.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s += kGoldenGamma;
      word = mix64(s);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a logarithm argument.
  double uniform_open_zero() noexcept { return 1.0 - uniform(); }

  /// Standard normal by Box-Muller; the sine branch is cached for the next call.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform_open_zero()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double exponential() noexcept { return -std::log(uniform_open_zero()); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nashevt
