#pragma once

#include <cmath>
#include <cstdint>

namespace wmlm {

// splitmix64 finalizer; full avalanche on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based randomness: every draw is a pure function of its key words.
// The collator keys draws by (seed, example index, epoch, position, purpose)
// so batching order and worker count can never change a mask.
inline std::uint64_t rng_u64(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  h = mix64(h ^ d);
  return h;
}

// Uniform in [0, 1) with 53 random bits.
inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double rng_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c, std::uint64_t d) {
  return to_unit(rng_u64(seed, a, b, c, d));
}

// Sequential counter stream for parameter init and synthetic data generation.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return rng_u64(seed_, stream_, counter_++, 0, 0); }

  double next_unit() { return to_unit(next_u64()); }

  // [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  double next_normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; two fresh uniforms per draw keeps the stream stateless-ish.
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace wmlm
