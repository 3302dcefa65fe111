#include "doorrl/rng.h"

#include <cmath>
#include <numbers>

namespace doorrl {

uint64_t Mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(uint64_t seed, uint64_t stream)
    : key_(Mix64(Mix64(seed + 0x9E3779B97F4A7C15ULL) ^
                 (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))),
      counter_(0) {}

Rng Rng::FromState(uint64_t key, uint64_t counter) {
  Rng rng;
  rng.key_ = key;
  rng.counter_ = counter;
  return rng;
}

uint64_t Rng::NextU64() {
  ++counter_;
  return Mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::Uniform01() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double Rng::Uniform(double lo, double hi) {
  // Endpoint-inclusive mapping of 53-bit integers onto [lo, hi].
  const double u = static_cast<double>(NextU64() >> 11) / 9007199254740991.0;
  return lo + (hi - lo) * u;
}

uint64_t Rng::UniformInt(uint64_t n) {
  // Rejection sampling removes modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % n;
}

double Rng::Normal() {
  const double u1 = 1.0 - Uniform01();  // (0, 1]
  const double u2 = Uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

bool Rng::Bernoulli(double p) { return Uniform01() < p; }

Rng Rng::Fork(uint64_t tag) const {
  Rng child;
  child.key_ = Mix64(key_ ^ Mix64(tag + 0xA0761D6478BD642FULL + counter_));
  child.counter_ = 0;
  return child;
}

}  // namespace doorrl
