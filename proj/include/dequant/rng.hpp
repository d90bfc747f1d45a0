#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace dequant {

// A (seed, stream) pair fully determines a sample sequence. Distinct streams
// give statistically independent sequences, so parallel Monte Carlo hands out
// disjoint stream ids and stays reproducible regardless of scheduling.
struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Consumers that need several independent estimates from one base seed space
// their stream ids by this stride; a single blocked Monte Carlo run never
// consumes more streams than this.
inline constexpr std::uint64_t kStreamStride = std::uint64_t{1} << 20;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace detail

// xoshiro256** seeded from (seed, stream) through splitmix64. Satisfies
// UniformRandomBitGenerator. Normal variates come from the Marsaglia polar
// method so the byte-for-byte sample sequence is owned by this library and
// does not depend on the standard library's distribution internals.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(RngSeed s) {
    std::uint64_t x = s.seed;
    std::uint64_t mix = detail::splitmix64(x) ^
                        detail::rotl64(detail::splitmix64(x) + s.stream, 17);
    mix ^= s.stream * 0xD1342543DE82EF95ULL;
    for (auto& word : state_) word = detail::splitmix64(mix);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const std::uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform in (0, 1), 53-bit resolution, never exactly 0.
  double uniform01() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  void fill_normal(std::span<double> out) {
    for (double& x : out) x = normal();
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dequant
