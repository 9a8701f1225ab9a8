// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dual-table nonlinear unit: a 16-entry value table plus a 256-entry residual
// table per function, addressed after exponent/mantissa range reduction.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trigen/error.hpp"
#include "trigen/mx_numerics.hpp"

namespace trigen {

enum class LutFunc : std::uint8_t { RECIP = 0, ISQR = 1, EXP = 2, SILU = 3 };

inline std::string_view to_string(LutFunc f) {
  switch (f) {
    case LutFunc::RECIP: return "recip";
    case LutFunc::ISQR: return "isqr";
    case LutFunc::EXP: return "exp";
    case LutFunc::SILU: return "silu";
  }
  return "?";
}

inline constexpr std::array<LutFunc, 4> kAllLutFuncs = {LutFunc::RECIP, LutFunc::ISQR, LutFunc::EXP,
                                                        LutFunc::SILU};

inline constexpr int kLutValueEntries = 16;
inline constexpr int kLutErrorEntries = 256;
/// SiLU reduction constant: inputs with exponent > K use f(x) = 2^(e-K) f(2^K m).
inline constexpr int kSiluK = 4;

/// Reference implementation of each function in long double.
inline long double lut_reference(LutFunc f, long double x) {
  switch (f) {
    case LutFunc::RECIP: return 1.0L / x;
    case LutFunc::ISQR: return 1.0L / std::sqrt(x);
    case LutFunc::EXP: return std::exp(x);
    case LutFunc::SILU: return x / (1.0L + std::exp(-x));
  }
  return 0;
}

struct LutDomain {
  double lo = 0, hi = 0;
};

/// Reduced table domain used by the datapath for each function.
inline LutDomain default_lut_domain(LutFunc f) {
  switch (f) {
    case LutFunc::RECIP: return {1.0, 2.0};
    case LutFunc::ISQR: return {0.5, 2.0};
    case LutFunc::EXP: return {0.0, std::numbers::ln2};
    case LutFunc::SILU: return {16.0, 32.0};
  }
  return {};
}

/// Input range over which accuracy is specified.
inline LutDomain declared_input_range(LutFunc f) {
  switch (f) {
    case LutFunc::RECIP:
    case LutFunc::ISQR: return {1.0 / 1024.0, 4096.0};
    case LutFunc::EXP:
    case LutFunc::SILU: return {-8.0, 64.0};
  }
  return {};
}

/// f(hi) = 2^wrap * f(lo) for every reduced domain; the entry past the end of
/// each table is synthesized from entry 0 with this shift.
inline constexpr int lut_wrap_shift(LutFunc f) {
  return (f == LutFunc::RECIP || f == LutFunc::ISQR) ? -1 : 1;
}

struct LutPair {
  LutFunc func = LutFunc::RECIP;
  LutDomain domain;
  int value_shift = 0;  // real = entry * 2^-value_shift
  int error_shift = 0;
  std::array<std::int16_t, kLutValueEntries> value_table{};
  std::array<std::int16_t, kLutErrorEntries> error_table{};

  double value_step() const { return (domain.hi - domain.lo) / kLutValueEntries; }
  double error_step() const { return (domain.hi - domain.lo) / kLutErrorEntries; }
  std::size_t storage_bytes() const;
};

/// Position of a query inside the reduced domain, as fixed point.
inline constexpr int kLutPosBits = 24;

struct LutQuery {
  enum class Path : std::uint8_t {
    Table,   // value = tables(position) * 2^shift, optionally negated
    Zero,    // exact zero result (EXP underflow)
    Max,     // saturated result (EXP overflow)
    Direct,  // SiLU below 2^(K+1): x * RECIP(1 + EXP(-x))
  };
  Path path = Path::Table;
  int index_v = 0;
  int index_e = 0;
  std::uint32_t frac_v = 0;  // weights with kLutPosBits - 4 and kLutPosBits - 8 fractional bits
  std::uint32_t frac_e = 0;
  int shift = 0;
  bool negate = false;
  Fi32 input{};  // carried for the Direct path
};

inline constexpr int kFracVBits = kLutPosBits - 4;
inline constexpr int kFracEBits = kLutPosBits - 8;

enum class RangeCheck {
  Declared,  // reject inputs outside the specified accuracy range
  Datapath,  // accept anything the reduction can represent (saturating)
};

namespace detail {

inline LutQuery query_from_position(std::uint32_t pos, int shift) {
  LutQuery q;
  q.index_v = static_cast<int>(pos >> kFracVBits);
  q.frac_v = pos & ((1u << kFracVBits) - 1);
  q.index_e = static_cast<int>(pos >> kFracEBits);
  q.frac_e = pos & ((1u << kFracEBits) - 1);
  q.shift = shift;
  return q;
}

/// Position of a normalized mantissa m = frac / 2^22 inside [1, 2).
inline std::uint32_t mantissa_position(std::int32_t abs_frac) {
  return static_cast<std::uint32_t>(abs_frac - Fi32::kNormMin) << (kLutPosBits - Fi32::kImplicitShift);
}

inline long double table_function(LutFunc f, long double x) { return lut_reference(f, x); }

inline int fit_shift(double max_abs) {
  // Largest s with max_abs * 2^s <= 32767.
  int s = 0;
  while (max_abs * std::ldexp(1.0, s + 1) <= 32767.0 && s < 60) ++s;
  while (max_abs * std::ldexp(1.0, s) > 32767.0) --s;
  return s;
}

}  // namespace detail

inline bool lut_domain_valid(LutFunc f, LutDomain d) {
  if (!(d.lo < d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) return false;
  switch (f) {
    case LutFunc::RECIP: return d.lo > 0.0 || d.hi <= 0.0;
    case LutFunc::ISQR: return d.lo > 0.0;
    case LutFunc::EXP:
    case LutFunc::SILU: return true;
  }
  return false;
}

/// Samples f on the value grid and the residual g = f - interp(value table) on
/// the error grid, both as 16-bit fixed point.
inline LutPair build_tables(LutFunc func, LutDomain domain) {
  if (!lut_domain_valid(func, domain)) {
    throw RangeError("build_tables: domain [" + std::to_string(domain.lo) + ", " + std::to_string(domain.hi) +
                     ") invalid for " + std::string(to_string(func)));
  }
  LutPair p;
  p.func = func;
  p.domain = domain;
  const long double span = static_cast<long double>(domain.hi) - domain.lo;
  std::array<long double, kLutValueEntries> vs{};
  double vmax = 0;
  for (int i = 0; i < kLutValueEntries; ++i) {
    vs[i] = detail::table_function(func, domain.lo + span * i / kLutValueEntries);
    vmax = std::max(vmax, static_cast<double>(std::fabs(vs[i])));
  }
  vmax = std::max(vmax, std::ldexp(vmax, lut_wrap_shift(func)));
  p.value_shift = detail::fit_shift(vmax);
  for (int i = 0; i < kLutValueEntries; ++i)
    p.value_table[i] = static_cast<std::int16_t>(std::nearbyint(std::ldexp(static_cast<double>(vs[i]), p.value_shift)));

  auto value_entry = [&](int i) -> long double {
    const long double raw = i < kLutValueEntries ? p.value_table[i]
                                                 : std::ldexp(static_cast<long double>(p.value_table[0]),
                                                              lut_wrap_shift(func));
    return std::ldexp(raw, -p.value_shift);
  };
  std::array<long double, kLutErrorEntries> gs{};
  double gmax = 0;
  constexpr int kPerSegment = kLutErrorEntries / kLutValueEntries;
  for (int j = 0; j < kLutErrorEntries; ++j) {
    const int i = j / kPerSegment;
    const long double w = static_cast<long double>(j % kPerSegment) / kPerSegment;
    const long double interp = value_entry(i) + w * (value_entry(i + 1) - value_entry(i));
    gs[j] = detail::table_function(func, domain.lo + span * j / kLutErrorEntries) - interp;
    gmax = std::max(gmax, static_cast<double>(std::fabs(gs[j])));
  }
  p.error_shift = gmax > 0 ? detail::fit_shift(gmax) : 0;
  for (int j = 0; j < kLutErrorEntries; ++j)
    p.error_table[j] = static_cast<std::int16_t>(std::nearbyint(std::ldexp(static_cast<double>(gs[j]), p.error_shift)));
  return p;
}

inline LutPair build_tables(LutFunc func) { return build_tables(func, default_lut_domain(func)); }

namespace detail {

/// Exact value of the decoded FI32 scaled to Q(frac_bits), truncated toward -inf.
inline std::int64_t fi32_to_fixed(Fi32 x, int frac_bits) {
  const int sh = int{x.exp} - Fi32::kLsbOffset + frac_bits;
  const std::int64_t f = x.frac;
  if (sh >= 0) return f * (std::int64_t{1} << sh);
  if (sh <= -63) return f < 0 ? -1 : 0;
  return f >> -sh;  // arithmetic shift: floor
}

}  // namespace detail

/// Range reduction: computes table indices, interpolation weights and the
/// output exponent adjustment for one input.
inline LutQuery preprocess(LutFunc func, Fi32 x, RangeCheck check = RangeCheck::Declared) {
  const double xv = fi32_to_real(x);
  if (check == RangeCheck::Declared) {
    const LutDomain r = declared_input_range(func);
    if (!(xv >= r.lo && xv <= r.hi)) {
      throw RangeError("lut " + std::string(to_string(func)) + ": input " + std::to_string(xv) +
                       " outside [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
    }
  }
  const std::int32_t abs_frac = x.frac < 0 ? -x.frac : x.frac;
  const int e = int{x.exp} - Fi32::kBias;  // x = 2^e * m for normalized x

  switch (func) {
    case LutFunc::RECIP: {
      if (x.is_zero()) {
        LutQuery q;
        q.path = LutQuery::Path::Max;
        return q;
      }
      LutQuery q = detail::query_from_position(detail::mantissa_position(abs_frac), -e);
      q.negate = x.frac < 0;
      return q;
    }
    case LutFunc::ISQR: {
      if (x.frac <= 0) {
        if (x.frac < 0) throw RangeError("lut isqr: negative input");
        LutQuery q;
        q.path = LutQuery::Path::Max;
        return q;
      }
      // argument * 2^23: m (even e) or m/2 (odd e)
      const bool odd = (e % 2) != 0;
      const std::int64_t arg = odd ? std::int64_t{abs_frac} : std::int64_t{abs_frac} * 2;
      const std::int64_t num = (arg - (std::int64_t{1} << 22)) << (kLutPosBits + 1);
      const auto pos = static_cast<std::uint32_t>(num / (std::int64_t{3} << 23));
      const int shift = odd ? -(e + 1) / 2 : -e / 2;
      return detail::query_from_position(pos, shift);
    }
    case LutFunc::EXP: {
      LutQuery q;
      if (xv < -128.0) {
        q.path = LutQuery::Path::Zero;
        return q;
      }
      if (xv > 128.0) {
        q.path = LutQuery::Path::Max;
        return q;
      }
      constexpr int kQ = 40;
      static const std::int64_t ln2_q = static_cast<std::int64_t>(std::nearbyint(std::ldexp(std::numbers::ln2, kQ)));
      const std::int64_t xq = detail::fi32_to_fixed(x, kQ);
      std::int64_t k = xq / ln2_q;
      if (xq - k * ln2_q < 0) --k;
      const std::int64_t r = xq - k * ln2_q;
      const auto pos = static_cast<std::uint32_t>((static_cast<__int128>(r) << kLutPosBits) / ln2_q);
      return detail::query_from_position(pos, static_cast<int>(k));
    }
    case LutFunc::SILU: {
      if (x.is_zero()) {
        LutQuery q;
        q.path = LutQuery::Path::Zero;
        return q;
      }
      if (xv < -8.0) x = fi32_from_real(-8.0);
      if (x.frac > 0 && e > kSiluK) {
        return detail::query_from_position(detail::mantissa_position(abs_frac), e - kSiluK);
      }
      LutQuery q;
      q.path = LutQuery::Path::Direct;
      q.input = x;
      return q;
    }
  }
  return {};
}

namespace detail {

inline constexpr int kValueFrac = kFracVBits;
inline constexpr int kErrorFrac = kFracEBits;

/// Interpolated table sum as an exact integer mant * 2^exp2.
inline std::pair<__int128, int> lut_interpolate(const LutPair& p, const LutQuery& q, bool with_error) {
  const int wrap = lut_wrap_shift(p.func);
  auto ventry = [&](int i) -> std::int64_t {
    return i < kLutValueEntries ? std::int64_t{p.value_table[i]} << 1
                                : (wrap > 0 ? std::int64_t{p.value_table[0]} << 2 : std::int64_t{p.value_table[0]});
  };
  auto eentry = [&](int j) -> std::int64_t {
    return j < kLutErrorEntries ? std::int64_t{p.error_table[j]} << 1
                                : (wrap > 0 ? std::int64_t{p.error_table[0]} << 2 : std::int64_t{p.error_table[0]});
  };
  // Entries carry one extra bit so the wrap entry (x2 or /2) stays integral.
  const std::int64_t v0 = ventry(q.index_v), v1 = ventry(q.index_v + 1);
  const __int128 acc_v = (static_cast<__int128>(v0) << kValueFrac) + static_cast<__int128>(q.frac_v) * (v1 - v0);
  const int sv = p.value_shift + 1 + kValueFrac;  // acc_v * 2^-sv
  if (!with_error) return {acc_v, -sv};
  const std::int64_t g0 = eentry(q.index_e), g1 = eentry(q.index_e + 1);
  const __int128 acc_e = (static_cast<__int128>(g0) << kErrorFrac) + static_cast<__int128>(q.frac_e) * (g1 - g0);
  const int se = p.error_shift + 1 + kErrorFrac;
  const int s = std::max(sv, se);
  return {(acc_v << (s - sv)) + (acc_e << (s - se)), -s};
}

}  // namespace detail

/// Sums the interpolated value and residual tables and applies the exponent
/// adjustment.
inline Fi32 lut_eval(const LutPair& pair, const LutQuery& q, NumericFlags* flags = nullptr,
                     bool with_error = true) {
  switch (q.path) {
    case LutQuery::Path::Zero: return Fi32::zero();
    case LutQuery::Path::Max:
      if (flags) flags->saturated = true;
      return Fi32::max_value();
    case LutQuery::Path::Direct: throw Error("lut_eval: direct SiLU path needs the engine");
    case LutQuery::Path::Table: break;
  }
  auto [mant, exp2] = detail::lut_interpolate(pair, q, with_error);
  const bool neg = (mant < 0) != q.negate;
  const auto mag = static_cast<detail::u128>(mant < 0 ? -mant : mant);
  return fi32_normalize_wide(neg, mag, exp2 + q.shift, flags);
}

/// Holds one immutable table pair per function.
class LutEngine {
 public:
  LutEngine() {
    for (LutFunc f : kAllLutFuncs) pairs_[static_cast<int>(f)] = build_tables(f);
  }

  const LutPair& pair(LutFunc f) const { return pairs_[static_cast<int>(f)]; }

  Fi32 evaluate(LutFunc f, Fi32 x, RangeCheck check = RangeCheck::Datapath, NumericFlags* flags = nullptr,
                bool with_error = true) const {
    const LutQuery q = preprocess(f, x, check);
    if (q.path != LutQuery::Path::Direct) return lut_eval(pair(f), q, flags, with_error);
    // x / (1 + e^-x) through the EXP and RECIP pairs.
    const Fi32 ex = evaluate(LutFunc::EXP, fi32_negate(q.input), RangeCheck::Datapath, flags, with_error);
    const Fi32 den = fi32_align_add(fi32_from_real(1.0), ex, flags);
    const Fi32 rec = evaluate(LutFunc::RECIP, den, RangeCheck::Datapath, flags, with_error);
    return fi32_mul(q.input, rec, flags);
  }

  double evaluate(LutFunc f, double x, RangeCheck check = RangeCheck::Declared) const {
    return fi32_to_real(evaluate(f, fi32_from_real(x), check));
  }

 private:
  std::array<LutPair, 4> pairs_;
};

inline const LutEngine& default_lut_engine() {
  static const LutEngine engine;
  return engine;
}

struct LutAccuracy {
  LutFunc func{};
  double mape = 0;
  double mse = 0;
  std::size_t samples = 0;
};

/// Sweeps the declared input range at a 1/1024 step against the long double
/// reference. Zero-valued references are excluded from MAPE.
inline LutAccuracy measure_accuracy(const LutEngine& engine, LutFunc f, bool with_error = true) {
  const LutDomain r = declared_input_range(f);
  const auto first = static_cast<std::int64_t>(std::ceil(r.lo * 1024.0));
  const auto last = static_cast<std::int64_t>(std::floor(r.hi * 1024.0));
  long double ape = 0, se = 0;
  std::size_t n_ape = 0, n = 0;
  for (std::int64_t k = first; k <= last; ++k) {
    const double x = static_cast<double>(k) / 1024.0;
    const long double ref = lut_reference(f, x);
    const long double got = fi32_to_real(engine.evaluate(f, fi32_from_real(x), RangeCheck::Declared, nullptr, with_error));
    const long double err = got - ref;
    se += err * err;
    if (ref != 0) {
      ape += std::fabs(err / ref);
      ++n_ape;
    }
    ++n;
  }
  return {f, static_cast<double>(ape / static_cast<long double>(n_ape)), static_cast<double>(se / static_cast<long double>(n)), n};
}

// ---------------------------------------------------------------------------
// Flat binary dump: "TLUT", func u8, value_shift i8, error_shift i8, pad u8,
// lo f64, hi f64, n_value u16, n_error u16, value entries i16, error entries i16.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kLutHeaderBytes = 4 + 4 + 8 + 8 + 2 + 2;

inline std::size_t LutPair::storage_bytes() const {
  return kLutHeaderBytes + 2 * (kLutValueEntries + kLutErrorEntries);
}

inline std::vector<std::uint8_t> dump_lut(const LutPair& p) {
  std::vector<std::uint8_t> out;
  out.reserve(p.storage_bytes());
  auto put = [&](const void* src, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(src);
    out.insert(out.end(), b, b + n);  // host is little endian
  };
  put("TLUT", 4);
  const std::uint8_t hdr[4] = {static_cast<std::uint8_t>(p.func), static_cast<std::uint8_t>(static_cast<std::int8_t>(p.value_shift)),
                               static_cast<std::uint8_t>(static_cast<std::int8_t>(p.error_shift)), 0};
  put(hdr, 4);
  put(&p.domain.lo, 8);
  put(&p.domain.hi, 8);
  const std::uint16_t nv = kLutValueEntries, ne = kLutErrorEntries;
  put(&nv, 2);
  put(&ne, 2);
  put(p.value_table.data(), 2 * kLutValueEntries);
  put(p.error_table.data(), 2 * kLutErrorEntries);
  return out;
}

inline LutPair load_lut(std::span<const std::uint8_t> bytes) {
  LutPair p;
  if (bytes.size() != p.storage_bytes() || std::memcmp(bytes.data(), "TLUT", 4) != 0)
    throw ParseError("load_lut: bad header or size");
  if (bytes[4] > 3) throw ParseError("load_lut: unknown function id");
  p.func = static_cast<LutFunc>(bytes[4]);
  p.value_shift = static_cast<std::int8_t>(bytes[5]);
  p.error_shift = static_cast<std::int8_t>(bytes[6]);
  std::size_t off = 8;
  std::memcpy(&p.domain.lo, bytes.data() + off, 8);
  std::memcpy(&p.domain.hi, bytes.data() + off + 8, 8);
  off += 16;
  std::uint16_t nv = 0, ne = 0;
  std::memcpy(&nv, bytes.data() + off, 2);
  std::memcpy(&ne, bytes.data() + off + 2, 2);
  if (nv != kLutValueEntries || ne != kLutErrorEntries) throw ParseError("load_lut: entry counts");
  off += 4;
  std::memcpy(p.value_table.data(), bytes.data() + off, 2 * kLutValueEntries);
  std::memcpy(p.error_table.data(), bytes.data() + off + 2 * kLutValueEntries, 2 * kLutErrorEntries);
  return p;
}

}  // namespace trigen
