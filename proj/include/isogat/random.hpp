#pragma once

// Portable random streams. Every stream is a std::mt19937_64 whose seed is
// derived with splitmix64 from (root seed, tag, index...), so a stream depends
// only on its coordinates and never on how many draws other streams made.
// Uniform and Gaussian variates are produced here rather than through the
// <random> distributions, whose output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace isogat {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Folds a list of coordinates into one seed: h = splitmix64(h ^ c) per coordinate.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(root);
  for (std::uint64_t c : coords) h = splitmix64(h ^ c);
  return h;
}

// Stream tags.
enum class StreamTag : std::uint64_t {
  kSpeakerCentroid = 1,
  kUtteranceNoise = 2,
  kLayerMix = 3,
  kLayerNoise = 4,
  kParamInit = 5,
  kShuffle = 6,
  kCrop = 7,
  kRandomPool = 8,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, StreamTag tag, std::initializer_list<std::uint64_t> coords = {})
      : engine_(derive(root, tag, coords)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t derive(std::uint64_t root, StreamTag tag,
                              std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = derive_seed(root, {static_cast<std::uint64_t>(tag)});
    for (std::uint64_t c : coords) h = splitmix64(h ^ c);
    return h;
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace isogat
