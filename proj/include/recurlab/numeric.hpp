#pragma once

// Integer and RNG primitives shared by the exact lattice path and the Monte
// Carlo drivers.

#include <array>
#include <cstdint>
#include <random>

#include "recurlab/errors.hpp"

namespace recurlab {

using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;
using i128 = __int128;

constexpr u64 splitmix64(u64 x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stateless per-item seed: depends only on (master, index, stream), never on
/// evaluation order.
constexpr u64 derive_seed(u64 master, u64 index, u64 stream = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL)) + index);
}

inline std::mt19937_64 make_rng(u64 master, u64 index, u64 stream = 0) {
  return std::mt19937_64(derive_seed(master, index, stream));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

constexpr u64 mulmod(u64 a, u64 b, u64 m) {
  return static_cast<u64>(static_cast<u128>(a) * b % m);
}

constexpr u64 powmod(u64 base, u64 exp, u64 m) {
  u64 result = 1 % m;
  base %= m;
  while (exp != 0) {
    if (exp & 1U) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1U;
  }
  return result;
}

/// Reduce a signed 128-bit value into [0, m).
constexpr u64 reduce_signed(i128 v, u64 m) {
  i128 r = v % static_cast<i128>(m);
  if (r < 0) r += m;
  return static_cast<u64>(r);
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact for
/// every 64-bit integer.
constexpr bool is_prime(u64 n) {
  if (n < 2) return false;
  constexpr std::array<u64, 12> bases{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (u64 p : bases) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1U) == 0) {
    d >>= 1U;
    ++s;
  }
  for (u64 a : bases) {
    u64 x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

/// Random prime in [2^bits, 2^(bits+1)). bits must lie in [2, 61] so every
/// lattice product fits the 128-bit accumulator.
inline u64 random_prime(unsigned bits, std::mt19937_64& rng) {
  if (bits < 2 || bits > 61) throw ConfigError("prime_bits must lie in [2, 61]");
  const u64 lo = u64{1} << bits;
  for (;;) {
    u64 candidate = lo | (rng() & (lo - 1)) | 1U;
    if (is_prime(candidate)) return candidate;
  }
}

}  // namespace recurlab
