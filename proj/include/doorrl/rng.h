#ifndef DOORRL_RNG_H_
#define DOORRL_RNG_H_

#include <cstdint>

namespace doorrl {

// Counter-based random stream. The full state is two 64-bit words, so it can
// be written into a fixed-layout snapshot and restored bit-exactly. Variate
// generation is implemented here rather than through <random> distributions
// because those are implementation-defined and (for normals) keep hidden
// cached state, which would break cross-platform seed determinism.
class Rng {
 public:
  Rng() = default;
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  // Raw state access for serialization.
  static Rng FromState(uint64_t key, uint64_t counter);
  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

  uint64_t NextU64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double Uniform01();
  // Uniform on [lo, hi].
  double Uniform(double lo, double hi);
  // Uniform integer on [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller; two uniforms per draw, nothing cached.
  double Normal();
  bool Bernoulli(double p);

  // Independent child stream; does not advance this stream.
  Rng Fork(uint64_t tag) const;

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  uint64_t key_ = 0x9E3779B97F4A7C15ULL;
  uint64_t counter_ = 0;
};

// SplitMix64 finalizer.
uint64_t Mix64(uint64_t x);

}  // namespace doorrl

#endif  // DOORRL_RNG_H_
