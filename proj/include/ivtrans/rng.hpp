#pragma once

#include <cmath>
#include <cstdint>

namespace ivtrans {

// Small counter-style generator (SplitMix64). A stream is keyed by
// (seed, index, stream id), so simulation replicates and bootstrap draws are
// reproducible independently of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static Rng keyed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
    std::uint64_t s = mix(seed);
    s = mix(s ^ (index + 0xA0761D6478BD642FULL));
    s = mix(s ^ (stream + 0xE7037ED1A0B428DBULL));
    return Rng(s);
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform strictly inside (0,1).
  double uniform_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double mean) { return -mean * std::log(uniform_open()); }

  // Box-Muller; the paired draw is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Stream ids used by the simulation harness and the bootstrap.
namespace rng_stream {
constexpr std::uint64_t data = 1;
constexpr std::uint64_t censoring = 2;
constexpr std::uint64_t bootstrap = 3;
constexpr std::uint64_t generic = 4;
}  // namespace rng_stream

}  // namespace ivtrans
