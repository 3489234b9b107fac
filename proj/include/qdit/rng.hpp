#pragma once

#include <cmath>
#include <cstdint>

namespace qdit {

// Counter-based 64-bit generator (splitmix64 output function over
// seed + i*gamma). The integer and uniform streams depend only on the
// seed and draw index, so identical seeds give identical streams on any
// platform. Normal variates are produced by Box-Muller on the uniform
// stream; their exact bits additionally depend on the platform's
// log/sin/cos rounding, which is stable for a given libm build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix(seed_ + counter_ * kGamma);
  }

  // Uniform in [0, 1), 53 usable bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. Generates pairs; the second variate is
  // cached, so draw parity matters for stream reproducibility (documented
  // behaviour, same on every platform).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Derived generator for an independent stream. Depends only on this
  // generator's seed and the stream index, never on how many values have
  // been drawn, so call sites can fan out reproducibly (one child per
  // sample, per layer, ...).
  Rng child(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix((stream + 1) * kGamma2))); }

  std::uint64_t seed() const { return seed_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kGamma2 = 0xD1342543DE82EF95ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qdit
