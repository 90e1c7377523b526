#pragma once

#include <cstdint>

namespace fan {

/// SplitMix64. Used wherever generated values must be reproducible outside
/// this library (the tiny extractor weights), since std distributions are not
/// specified bit-exactly across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 24 random bits.
  double unit() { return static_cast<double>(next() >> 40) * 0x1p-24; }

  /// Uniform in [-bound, bound).
  double symmetric(double bound) { return (2.0 * unit() - 1.0) * bound; }

 private:
  std::uint64_t state_;
};

}  // namespace fan
