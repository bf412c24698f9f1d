#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace seqsel {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a. Fully portable; used for feature hashing, seed
// derivation and artifact checksums.
// Raw-byte form is named separately: an overload taking (const void*, size_t)
// would capture string literals and silently treat the hash state as a length.
inline uint64_t fnv1a64_bytes(const void* data, size_t len, uint64_t state = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    state ^= p[i];
    state *= kFnvPrime;
  }
  return state;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t state = kFnvOffset) {
  return fnv1a64_bytes(s.data(), s.size(), state);
}

inline uint64_t fnv1a64_u64(uint64_t value, uint64_t state = kFnvOffset) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  return fnv1a64_bytes(bytes, 8, state);
}

// splitmix64 finalizer; decorrelates seeds that differ in few bits.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace seqsel
