#pragma once

#include <cstdint>
#include <random>

namespace pulse {

/// SplitMix64 finaliser, used to turn structured seeds into well-mixed ones.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of repetition `rep` inside the stream `seed` (seed XOR rep, mixed).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t rep) noexcept {
  return splitmix64(seed ^ rep);
}

/// mt19937_64 with a fixed Box-Muller normal generator. The standard
/// library distributions are implementation-defined, so draws would differ
/// between toolchains; this class pins the transformation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pulse
