#pragma once

#include <cmath>
#include <cstdint>

namespace sarsm {

/// splitmix64: counter-based generator (Steele, Lea & Flood). The state walks a
/// fixed odd increment and each output is a bijective finalizer of the state, so
/// the stream is a pure function of (seed, call index) and reproduces bit-for-bit
/// on any platform. All sampling transforms below are hand-rolled for the same
/// reason; std::normal_distribution is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the paired deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Integer uniform on {0, ..., bound-1} by rejection (bound > 0).
  std::uint64_t uniform_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Independent substream seed for (base_seed, stream index); used to give each
/// replication its own stream.
inline std::uint64_t derive_stream_seed(std::uint64_t base_seed, std::uint64_t stream) {
  return SplitMix64::mix(SplitMix64::mix(base_seed ^ 0xA0761D6478BD642FULL) + stream);
}

}  // namespace sarsm
