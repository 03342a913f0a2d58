#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace redqueen {

/// SplitMix64 finalizer; used to derive independent stream seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

/// Seeded generator with platform-independent variates.
///
/// std::*_distribution output is implementation-defined, so uniforms are built
/// from the raw 64-bit engine output to keep report files byte-identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Exponential waiting time; rate 0 never fires.
  double exponential(double rate) {
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return -std::log(uniform_open()) / rate;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace redqueen
