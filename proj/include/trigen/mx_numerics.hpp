// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Element formats of the NPU datapath: MXINT8 activations, narrow integer
// tensors (weights, INT16 activations) and the FI32 accumulator format,
// together with the exact block dot product and the aligned FI32 adder.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trigen/error.hpp"

namespace trigen {

inline constexpr int kMxBlock = 32;

/// Sticky status bits raised by saturating arithmetic.
struct NumericFlags {
  bool saturated = false;
  bool underflow = false;

  void merge(const NumericFlags& o) {
    saturated = saturated || o.saturated;
    underflow = underflow || o.underflow;
  }
  friend bool operator==(const NumericFlags&, const NumericFlags&) = default;
};

enum class DType { MXINT8, UINT4, INT4, UINT8, INT8, INT16, FI32 };

inline std::string_view to_string(DType d) {
  switch (d) {
    case DType::MXINT8: return "mxint8";
    case DType::UINT4: return "uint4";
    case DType::INT4: return "int4";
    case DType::UINT8: return "uint8";
    case DType::INT8: return "int8";
    case DType::INT16: return "int16";
    case DType::FI32: return "fi32";
  }
  return "?";
}

inline DType dtype_from_string(std::string_view s) {
  for (DType d : {DType::MXINT8, DType::UINT4, DType::INT4, DType::UINT8, DType::INT8, DType::INT16,
                  DType::FI32}) {
    if (to_string(d) == s) return d;
  }
  throw ParseError("unknown dtype '" + std::string(s) + "'");
}

inline constexpr bool is_integer(DType d) { return d != DType::MXINT8 && d != DType::FI32; }

inline constexpr int bit_width(DType d) {
  switch (d) {
    case DType::UINT4:
    case DType::INT4: return 4;
    case DType::UINT8:
    case DType::INT8:
    case DType::MXINT8: return 8;
    case DType::INT16: return 16;
    case DType::FI32: return 32;
  }
  return 0;
}

inline constexpr bool is_signed(DType d) { return d != DType::UINT4 && d != DType::UINT8; }

inline constexpr std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Bytes occupied by a rows x cols tensor. MXINT8 stores one exponent byte per
/// 32-element block along each row (the reduction axis).
inline constexpr std::size_t storage_bytes(DType d, std::size_t rows, std::size_t cols) {
  switch (d) {
    case DType::MXINT8: return rows * cols + rows * ceil_div(cols, kMxBlock);
    case DType::UINT4:
    case DType::INT4: return rows * ceil_div(cols, 2);
    case DType::UINT8:
    case DType::INT8: return rows * cols;
    case DType::INT16: return rows * cols * 2;
    case DType::FI32: return rows * cols * 4;
  }
  return 0;
}

namespace detail {

using u128 = unsigned __int128;

/// Round-to-nearest-even of mag / 2^shift for shift >= 0.
inline u128 rshift_rne(u128 mag, int shift) {
  if (shift <= 0) return mag;
  if (shift >= 128) return 0;
  const u128 q = mag >> shift;
  const u128 rem = mag - (q << shift);
  const u128 half = u128{1} << (shift - 1);
  if (rem > half || (rem == half && (q & 1))) return q + 1;
  return q;
}

inline int bit_length(u128 v) {
  const auto hi = static_cast<std::uint64_t>(v >> 64);
  if (hi != 0) return 64 + std::bit_width(hi);
  return std::bit_width(static_cast<std::uint64_t>(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FI32: value = frac * 2^-22 * 2^(exp - 127)
// ---------------------------------------------------------------------------

struct Fi32 {
  std::int32_t frac = 0;  // 24-bit two's complement
  std::uint8_t exp = 0;   // biased by 127

  static constexpr int kBias = 127;
  static constexpr int kImplicitShift = 22;
  /// value = frac * 2^(exp - kLsbOffset)
  static constexpr int kLsbOffset = kBias + kImplicitShift;
  static constexpr std::int32_t kFracMax = (1 << 23) - 1;
  static constexpr std::int32_t kNormMin = 1 << 22;

  constexpr bool is_zero() const { return frac == 0; }
  constexpr bool is_normalized() const {
    if (frac == 0) return exp == 0;
    const std::int32_t m = frac < 0 ? -frac : frac;
    return m >= kNormMin && m <= kFracMax;
  }

  static constexpr Fi32 zero() { return {}; }
  static constexpr Fi32 max_value() { return {kFracMax, 255}; }
  /// Most negative representable value; used as the additive mask bias.
  static constexpr Fi32 lowest() { return {-kFracMax, 255}; }

  friend constexpr bool operator==(const Fi32&, const Fi32&) = default;

  /// Packed little-endian word: exp in bits 31..24, frac in bits 23..0.
  constexpr std::uint32_t pack() const {
    return (std::uint32_t{exp} << 24) | (static_cast<std::uint32_t>(frac) & 0xFFFFFFu);
  }
  static constexpr Fi32 unpack(std::uint32_t w) {
    std::int32_t f = static_cast<std::int32_t>(w & 0xFFFFFFu);
    if (f & 0x800000) f -= 0x1000000;
    return {f, static_cast<std::uint8_t>(w >> 24)};
  }
};

/// Encodes mant * 2^exp2 as a normalized Fi32 with round-to-nearest-even.
/// Overflow saturates to the max magnitude; underflow flushes to zero.
inline Fi32 fi32_normalize_wide(bool negative, detail::u128 mag, int exp2, NumericFlags* flags = nullptr) {
  if (mag == 0) return Fi32::zero();
  int shift = detail::bit_length(mag) - 23;
  detail::u128 q;
  if (shift > 0) {
    q = detail::rshift_rne(mag, shift);
    if (q == (detail::u128{1} << 23)) {
      q >>= 1;
      ++shift;
    }
  } else {
    q = mag << -shift;
  }
  const int code = exp2 + shift + Fi32::kLsbOffset;
  if (code > 255) {
    if (flags) flags->saturated = true;
    return negative ? Fi32::lowest() : Fi32::max_value();
  }
  if (code < 0) {
    if (flags) flags->underflow = true;
    return Fi32::zero();
  }
  const auto f = static_cast<std::int32_t>(q);
  return {negative ? -f : f, static_cast<std::uint8_t>(code)};
}

inline Fi32 fi32_normalize(std::int64_t mant, int exp2, NumericFlags* flags = nullptr) {
  const bool neg = mant < 0;
  const detail::u128 mag = neg ? detail::u128(-(mant + 1)) + 1 : detail::u128(mant);
  return fi32_normalize_wide(neg, mag, exp2, flags);
}

inline double fi32_to_real(Fi32 v) {
  return std::ldexp(static_cast<double>(v.frac), int{v.exp} - Fi32::kLsbOffset);
}

inline Fi32 fi32_from_real(double x, NumericFlags* flags = nullptr) {
  if (x == 0.0) return Fi32::zero();
  if (!std::isfinite(x)) {
    if (std::isnan(x)) throw RangeError("fi32_from_real: NaN");
    if (flags) flags->saturated = true;
    return x > 0 ? Fi32::max_value() : Fi32::lowest();
  }
  int e = 0;
  const double m = std::frexp(x, &e);  // |m| in [0.5, 1)
  const auto m53 = static_cast<std::int64_t>(std::ldexp(m, 53));
  return fi32_normalize(m53, e - 53, flags);
}

/// Aligns both fractions to the larger exponent and adds them. The shifted-out
/// bits of the smaller operand are kept as a sticky bit, so the result is the
/// exact sum rounded to nearest-even.
inline Fi32 fi32_align_add(Fi32 a, Fi32 b, NumericFlags* flags = nullptr) {
  if (b.is_zero()) return a;
  if (a.is_zero()) return b;
  if (a.exp < b.exp) std::swap(a, b);
  constexpr int kGuard = 36;
  const int d = int{a.exp} - int{b.exp};
  const std::int64_t big = std::int64_t{a.frac} * (std::int64_t{1} << kGuard);
  std::int64_t small;
  if (d <= kGuard) {
    small = std::int64_t{b.frac} * (std::int64_t{1} << (kGuard - d));
  } else {
    const int s = d - kGuard;
    const std::uint64_t mag = static_cast<std::uint64_t>(b.frac < 0 ? -std::int64_t{b.frac} : b.frac);
    std::uint64_t q = s >= 63 ? 0 : mag >> s;
    const bool lost = s >= 63 ? mag != 0 : (mag & ((std::uint64_t{1} << s) - 1)) != 0;
    if (lost) q |= 1;
    small = b.frac < 0 ? -static_cast<std::int64_t>(q) : static_cast<std::int64_t>(q);
  }
  return fi32_normalize(big + small, int{a.exp} - Fi32::kLsbOffset - kGuard, flags);
}

inline Fi32 fi32_mul(Fi32 a, Fi32 b, NumericFlags* flags = nullptr) {
  if (a.is_zero() || b.is_zero()) return Fi32::zero();
  const std::int64_t p = std::int64_t{a.frac} * std::int64_t{b.frac};
  return fi32_normalize(p, int{a.exp} + int{b.exp} - 2 * Fi32::kLsbOffset, flags);
}

inline Fi32 fi32_negate(Fi32 a) { return {-a.frac, a.exp}; }

/// Multiplies by 2^k through the exponent field.
inline Fi32 fi32_ldexp(Fi32 a, int k, NumericFlags* flags = nullptr) {
  if (a.is_zero()) return a;
  return fi32_normalize(a.frac, int{a.exp} - Fi32::kLsbOffset + k, flags);
}

inline bool fi32_less(Fi32 a, Fi32 b) { return fi32_to_real(a) < fi32_to_real(b); }

// ---------------------------------------------------------------------------
// Block dot product (one MPA array, one cycle)
// ---------------------------------------------------------------------------

/// Exact integer result of a block dot product: value = mant * 2^exp2.
struct WideProduct {
  std::int64_t mant = 0;
  int exp2 = 0;
};

/// Sums a[i]*b[i] in the adder tree. Each side carries the exponent of its
/// least significant bit; integer operands pass 0. Short blocks are treated as
/// zero padded.
template <std::integral A, std::integral B>
WideProduct dot32_wide(std::span<const A> a, int a_lsb_exp, std::span<const B> b, int b_lsb_exp) {
  if (a.size() > kMxBlock || b.size() > kMxBlock) throw ShapeError("dot32: block longer than 32");
  const std::size_t n = std::min(a.size(), b.size());
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::int64_t{a[i]} * std::int64_t{b[i]};
  return {acc, a_lsb_exp + b_lsb_exp};
}

template <std::integral A, std::integral B>
Fi32 dot32(std::span<const A> a, int a_lsb_exp, std::span<const B> b, int b_lsb_exp,
           NumericFlags* flags = nullptr) {
  const WideProduct p = dot32_wide(a, a_lsb_exp, b, b_lsb_exp);
  return fi32_normalize(p.mant, p.exp2, flags);
}

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

struct RealTensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  RealTensor() = default;
  RealTensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Fi32Tensor {
  std::size_t rows = 0, cols = 0;
  std::vector<Fi32> data;

  Fi32Tensor() = default;
  Fi32Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  Fi32& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Fi32 at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t storage_bytes() const { return trigen::storage_bytes(DType::FI32, rows, cols); }
};

/// Which direction the 32-element exponent-sharing blocks run.
/// Cols: 32 consecutive columns of one row share an exponent (reduction axis of
/// a TMATMUL operand). Rows: 32 consecutive rows of one column share.
enum class SharedAxis { Cols, Rows };

/// MXINT8 tensor. Element (r, c) represents elem * 2^(code - 127 - 6), where code
/// is the biased exponent of its block's largest magnitude.
struct MxTensor {
  static constexpr int kElemFracBits = 6;

  std::size_t rows = 0, cols = 0;
  SharedAxis axis = SharedAxis::Cols;
  std::vector<std::int8_t> elems;
  std::vector<std::uint8_t> shared_exps;

  MxTensor() = default;
  MxTensor(std::size_t r, std::size_t c, SharedAxis ax = SharedAxis::Cols)
      : rows(r), cols(c), axis(ax), elems(r * c), shared_exps(block_rows() * block_cols()) {}

  std::size_t block_rows() const { return axis == SharedAxis::Cols ? rows : ceil_div(rows, kMxBlock); }
  std::size_t block_cols() const { return axis == SharedAxis::Cols ? ceil_div(cols, kMxBlock) : cols; }

  std::size_t exp_index(std::size_t r, std::size_t c) const {
    return axis == SharedAxis::Cols ? r * block_cols() + c / kMxBlock : (r / kMxBlock) * cols + c;
  }
  std::uint8_t exp_at(std::size_t r, std::size_t c) const { return shared_exps[exp_index(r, c)]; }
  std::int8_t elem(std::size_t r, std::size_t c) const { return elems[r * cols + c]; }
  /// Exponent of the least significant bit of element (r, c).
  int lsb_exp(std::size_t r, std::size_t c) const { return int{exp_at(r, c)} - Fi32::kBias - kElemFracBits; }
  double value(std::size_t r, std::size_t c) const {
    return std::ldexp(static_cast<double>(elem(r, c)), lsb_exp(r, c));
  }
  std::size_t storage_bytes() const { return elems.size() + shared_exps.size(); }
};

/// Integer tensor; element (r, c) represents (q - zero_point[r]) * scale[r].
/// Rows are channels.
struct IntTensor {
  std::size_t rows = 0, cols = 0;
  DType dtype = DType::INT8;
  std::vector<std::int32_t> elems;
  std::vector<Fi32> scale;
  std::vector<std::int32_t> zero_point;

  IntTensor() = default;
  IntTensor(std::size_t r, std::size_t c, DType d)
      : rows(r), cols(c), dtype(d), elems(r * c), scale(r, fi32_from_real(1.0)), zero_point(r, 0) {
    if (!is_integer(d)) throw ShapeError("IntTensor requires an integer dtype");
  }

  std::int32_t min_code() const { return is_signed(dtype) ? -(1 << (bit_width(dtype) - 1)) : 0; }
  std::int32_t max_code() const {
    return is_signed(dtype) ? (1 << (bit_width(dtype) - 1)) - 1 : (1 << bit_width(dtype)) - 1;
  }
  std::int32_t elem(std::size_t r, std::size_t c) const { return elems[r * cols + c]; }
  /// Zero-point corrected code, the integer the MAC array consumes.
  std::int32_t centered(std::size_t r, std::size_t c) const { return elem(r, c) - zero_point[r]; }
  double value(std::size_t r, std::size_t c) const {
    return static_cast<double>(centered(r, c)) * fi32_to_real(scale[r]);
  }
  bool valid() const {
    if (elems.size() != rows * cols || scale.size() != rows || zero_point.size() != rows) return false;
    return std::all_of(elems.begin(), elems.end(),
                       [&](std::int32_t q) { return q >= min_code() && q <= max_code(); });
  }
  std::size_t storage_bytes() const { return trigen::storage_bytes(dtype, rows, cols); }
};

// ---------------------------------------------------------------------------
// MX quantization
// ---------------------------------------------------------------------------

namespace detail {

/// Quantizes one block given through an accessor; writes elements and returns
/// the shared exponent code.
template <class Get, class Put>
std::uint8_t quantize_block(std::size_t n, Get get, Put put, NumericFlags* flags) {
  double max_mag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_mag = std::max(max_mag, std::fabs(get(i)));
  if (max_mag == 0.0) {
    for (std::size_t i = 0; i < n; ++i) put(i, std::int8_t{0});
    return 0;
  }
  int code = std::ilogb(max_mag) + Fi32::kBias;
  if (code > 255) {
    code = 255;
    if (flags) flags->saturated = true;
  } else if (code < 0) {
    code = 0;
    if (flags) flags->underflow = true;
  }
  const int lsb = code - Fi32::kBias - MxTensor::kElemFracBits;
  for (std::size_t i = 0; i < n; ++i) {
    double q = std::nearbyint(std::ldexp(get(i), -lsb));
    if (q > 127.0 || q < -127.0) {
      // Only the max element can round past 127; it saturates.
      q = q > 0 ? 127.0 : -127.0;
    }
    put(i, static_cast<std::int8_t>(q));
  }
  return static_cast<std::uint8_t>(code);
}

}  // namespace detail

inline MxTensor quantize_mx(const RealTensor& src, SharedAxis axis = SharedAxis::Cols,
                            NumericFlags* flags = nullptr) {
  for (double v : src.data) {
    if (!std::isfinite(v)) throw RangeError("quantize_mx: non-finite input");
  }
  MxTensor t(src.rows, src.cols, axis);
  if (axis == SharedAxis::Cols) {
    for (std::size_t r = 0; r < src.rows; ++r) {
      for (std::size_t b = 0; b < t.block_cols(); ++b) {
        const std::size_t c0 = b * kMxBlock;
        const std::size_t n = std::min<std::size_t>(kMxBlock, src.cols - c0);
        t.shared_exps[r * t.block_cols() + b] = detail::quantize_block(
            n, [&](std::size_t i) { return src.at(r, c0 + i); },
            [&](std::size_t i, std::int8_t q) { t.elems[r * t.cols + c0 + i] = q; }, flags);
      }
    }
  } else {
    for (std::size_t b = 0; b < t.block_rows(); ++b) {
      const std::size_t r0 = b * kMxBlock;
      const std::size_t n = std::min<std::size_t>(kMxBlock, src.rows - r0);
      for (std::size_t c = 0; c < src.cols; ++c) {
        t.shared_exps[b * t.cols + c] = detail::quantize_block(
            n, [&](std::size_t i) { return src.at(r0 + i, c); },
            [&](std::size_t i, std::int8_t q) { t.elems[(r0 + i) * t.cols + c] = q; }, flags);
      }
    }
  }
  return t;
}

inline RealTensor dequantize_mx(const MxTensor& t) {
  RealTensor out(t.rows, t.cols);
  for (std::size_t r = 0; r < t.rows; ++r)
    for (std::size_t c = 0; c < t.cols; ++c) out.at(r, c) = t.value(r, c);
  return out;
}

/// PPA alignment stage: finds each block's largest exponent and shifts the FI32
/// fractions onto the shared 8-bit grid. Same result as quantize_mx on the
/// exact FI32 values, computed with integer shifts only.
inline MxTensor align_fi32_to_mx(const Fi32Tensor& acc, NumericFlags* flags = nullptr) {
  MxTensor t(acc.rows, acc.cols, SharedAxis::Cols);
  for (std::size_t r = 0; r < acc.rows; ++r) {
    for (std::size_t b = 0; b < t.block_cols(); ++b) {
      const std::size_t c0 = b * kMxBlock;
      const std::size_t n = std::min<std::size_t>(kMxBlock, acc.cols - c0);
      // Normalized values order by (exp, |frac|); the block max sets the code.
      bool any = false;
      int code = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Fi32 v = acc.at(r, c0 + i);
        if (v.is_zero()) continue;
        const std::int32_t m = v.frac < 0 ? -v.frac : v.frac;
        const int e = int{v.exp} + std::bit_width(static_cast<std::uint32_t>(m)) - 23;
        code = any ? std::max(code, e) : e;
        any = true;
      }
      if (!any) {
        t.shared_exps[r * t.block_cols() + b] = 0;
        continue;
      }
      if (code > 255) {
        code = 255;
        if (flags) flags->saturated = true;
      }
      const int clamped = std::max(code, 0);
      if (code < 0 && flags) flags->underflow = true;
      t.shared_exps[r * t.block_cols() + b] = static_cast<std::uint8_t>(clamped);
      const int lsb = clamped - Fi32::kBias - MxTensor::kElemFracBits;
      for (std::size_t i = 0; i < n; ++i) {
        const Fi32 v = acc.at(r, c0 + i);
        // elem = frac * 2^(exp - 149 - lsb)
        const int sh = lsb - (int{v.exp} - Fi32::kLsbOffset);
        const bool neg = v.frac < 0;
        const auto mag = static_cast<detail::u128>(neg ? -std::int64_t{v.frac} : v.frac);
        auto q = static_cast<std::int64_t>(sh >= 0 ? detail::rshift_rne(mag, sh) : mag << -sh);
        q = std::min<std::int64_t>(q, 127);
        t.elems[r * t.cols + c0 + i] = static_cast<std::int8_t>(neg ? -q : q);
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Serialization (little endian): elements row-major, then shared exponents.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> to_bytes(const MxTensor& t) {
  std::vector<std::uint8_t> out(t.elems.size() + t.shared_exps.size());
  std::memcpy(out.data(), t.elems.data(), t.elems.size());
  std::memcpy(out.data() + t.elems.size(), t.shared_exps.data(), t.shared_exps.size());
  return out;
}

inline MxTensor mx_from_bytes(std::size_t rows, std::size_t cols, SharedAxis axis,
                              std::span<const std::uint8_t> bytes) {
  MxTensor t(rows, cols, axis);
  if (bytes.size() != t.storage_bytes()) throw ParseError("mx_from_bytes: size mismatch");
  std::memcpy(t.elems.data(), bytes.data(), t.elems.size());
  std::memcpy(t.shared_exps.data(), bytes.data() + t.elems.size(), t.shared_exps.size());
  return t;
}

inline std::vector<std::uint8_t> to_bytes(const Fi32Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(t.data.size() * 4);
  for (Fi32 v : t.data) {
    const std::uint32_t w = v.pack();
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
  }
  return out;
}

inline Fi32Tensor fi32_from_bytes(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> bytes) {
  Fi32Tensor t(rows, cols);
  if (bytes.size() != rows * cols * 4) throw ParseError("fi32_from_bytes: size mismatch");
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t w = 0;
    for (int k = 0; k < 4; ++k) w |= std::uint32_t{bytes[4 * i + k]} << (8 * k);
    t.data[i] = Fi32::unpack(w);
  }
  return t;
}

/// Packs integer codes; 4-bit values two per byte (low nibble first) per row.
inline std::vector<std::uint8_t> to_bytes(const IntTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(t.storage_bytes());
  const int bits = bit_width(t.dtype);
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (bits == 4) {
      for (std::size_t c = 0; c < t.cols; c += 2) {
        std::uint8_t lo = static_cast<std::uint8_t>(t.elem(r, c) & 0xF);
        std::uint8_t hi = c + 1 < t.cols ? static_cast<std::uint8_t>(t.elem(r, c + 1) & 0xF) : 0;
        out.push_back(static_cast<std::uint8_t>(lo | (hi << 4)));
      }
    } else {
      for (std::size_t c = 0; c < t.cols; ++c) {
        const auto v = static_cast<std::uint32_t>(t.elem(r, c));
        for (int k = 0; k < bits / 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
      }
    }
  }
  return out;
}

inline IntTensor int_from_bytes(std::size_t rows, std::size_t cols, DType dtype, std::span<const std::uint8_t> bytes) {
  IntTensor t(rows, cols, dtype);
  if (bytes.size() != t.storage_bytes()) throw ParseError("int_from_bytes: size mismatch");
  const int bits = bit_width(dtype);
  const bool sgn = is_signed(dtype);
  auto sign_extend = [&](std::uint32_t v) {
    const std::uint32_t top = 1u << (bits - 1);
    return sgn && (v & top) ? static_cast<std::int32_t>(v) - static_cast<std::int32_t>(top << 1)
                            : static_cast<std::int32_t>(v);
  };
  std::size_t p = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (bits == 4) {
      for (std::size_t c = 0; c < cols; c += 2) {
        const std::uint8_t b = bytes[p++];
        t.elems[r * cols + c] = sign_extend(b & 0xF);
        if (c + 1 < cols) t.elems[r * cols + c + 1] = sign_extend(b >> 4);
      }
    } else {
      for (std::size_t c = 0; c < cols; ++c) {
        std::uint32_t v = 0;
        for (int k = 0; k < bits / 8; ++k) v |= std::uint32_t{bytes[p++]} << (8 * k);
        t.elems[r * cols + c] = sign_extend(v);
      }
    }
  }
  return t;
}

}  // namespace trigen
