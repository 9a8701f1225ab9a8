// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Arbitrary-precision references for the numeric core. Nothing here calls into
// the library's rounding code.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <random>
#include <vector>

#include "trigen/mx_numerics.hpp"

namespace oracle {

using boost::multiprecision::cpp_int;

/// Exact value n * 2^e.
struct Exact {
  cpp_int n;
  int e = 0;
};

inline Exact exact_of(trigen::Fi32 v) { return {cpp_int(v.frac), int{v.exp} - 149}; }

inline Exact exact_add(const Exact& a, const Exact& b) {
  const int e = std::min(a.e, b.e);
  return {(a.n << (a.e - e)) + (b.n << (b.e - e)), e};
}

/// Correctly rounded (ties to even) 24-bit encoding with saturation and flush.
inline trigen::Fi32 encode(const Exact& x) {
  if (x.n == 0) return {};
  const bool neg = x.n < 0;
  cpp_int mag = neg ? cpp_int(-x.n) : x.n;
  const int bits = static_cast<int>(boost::multiprecision::msb(mag)) + 1;
  int e = x.e;
  if (bits > 23) {
    const int drop = bits - 23;
    const cpp_int unit = cpp_int(1) << drop;
    cpp_int q = mag / unit;
    const cpp_int rem = mag % unit;
    const cpp_int twice = rem * 2;
    if (twice > unit || (twice == unit && (q % 2) == 1)) q += 1;
    e += drop;
    if (q == (cpp_int(1) << 23)) {
      q /= 2;
      e += 1;
    }
    mag = q;
  } else {
    mag <<= (23 - bits);
    e -= (23 - bits);
  }
  const int code = e + 149;
  if (code > 255) return {neg ? -((1 << 23) - 1) : (1 << 23) - 1, 255};
  if (code < 0) return {};
  const auto f = mag.convert_to<std::int32_t>();
  return {neg ? -f : f, static_cast<std::uint8_t>(code)};
}

/// Random normalized FI32 with exponent in [lo, hi].
inline trigen::Fi32 random_fi32(std::mt19937_64& rng, int lo = 1, int hi = 254) {
  std::uniform_int_distribution<std::int32_t> frac((1 << 22), (1 << 23) - 1);
  std::uniform_int_distribution<int> ex(lo, hi);
  std::bernoulli_distribution sign(0.5);
  const std::int32_t f = frac(rng);
  return {sign(rng) ? -f : f, static_cast<std::uint8_t>(ex(rng))};
}

}  // namespace oracle
