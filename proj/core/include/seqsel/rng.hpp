#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "seqsel/errors.hpp"
#include "seqsel/hash.hpp"

namespace seqsel {

// Deterministic random source. All sampling in the pipeline goes through
// this wrapper instead of std distributions so that draws are reproducible
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53 bits of precision.
  double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound), rejection-sampled to stay unbiased.
  uint64_t next_below(uint64_t bound) {
    require(bound > 0, ErrorKind::invalid_argument, "next_below: bound must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller (no cached spare, keeps state linear).
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Labeled sub-stream derivation: one root seed fans out to independent
// streams ("construction", "train", per-instance ids, ...).
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
  return mix64(fnv1a64(label, fnv1a64_u64(root)));
}

}  // namespace seqsel
