// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle_numeric.hpp"
#include "trigen/mx_numerics.hpp"

using namespace trigen;

TEST(Fi32, EncodesPowersOfTwo) {
  const Fi32 one = fi32_from_real(1.0);
  EXPECT_EQ(one.frac, 1 << 22);
  EXPECT_EQ(one.exp, 127);
  EXPECT_DOUBLE_EQ(fi32_to_real(fi32_from_real(-0.375)), -0.375);
  EXPECT_TRUE(fi32_from_real(3.1).is_normalized());
  EXPECT_EQ(fi32_from_real(0.0), Fi32::zero());
}

TEST(Fi32, SaturatesAndFlushes) {
  NumericFlags f;
  EXPECT_EQ(fi32_from_real(1e300, &f), Fi32::max_value());
  EXPECT_TRUE(f.saturated);
  NumericFlags g;
  EXPECT_EQ(fi32_from_real(1e-300, &g), Fi32::zero());
  EXPECT_TRUE(g.underflow);
  EXPECT_THROW(fi32_from_real(std::nan("")), RangeError);
}

TEST(Fi32, PackRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Fi32 v = oracle::random_fi32(rng);
    EXPECT_EQ(Fi32::unpack(v.pack()), v);
  }
}

TEST(Fi32, AlignAddMatchesWideReference) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> gap(0, 70);
  for (int i = 0; i < 20000; ++i) {
    const Fi32 a = oracle::random_fi32(rng, 40, 200);
    Fi32 b = oracle::random_fi32(rng, 40, 200);
    if (i % 2) b.exp = static_cast<std::uint8_t>(std::max(1, int{a.exp} - gap(rng)));
    const Fi32 want = oracle::encode(oracle::exact_add(oracle::exact_of(a), oracle::exact_of(b)));
    ASSERT_EQ(fi32_align_add(a, b), want) << a.frac << "e" << int{a.exp} << " + " << b.frac << "e" << int{b.exp};
  }
}

TEST(Fi32, AlignAddCancellation) {
  const Fi32 a = fi32_from_real(1.5);
  EXPECT_EQ(fi32_align_add(a, fi32_negate(a)), Fi32::zero());
  const Fi32 b = fi32_from_real(-0.9999999);
  const Fi32 s = fi32_align_add(fi32_from_real(1.0), b);
  EXPECT_EQ(fi32_to_real(s), 1.0 + fi32_to_real(b));
  EXPECT_TRUE(s.is_normalized());
}

TEST(Fi32, MulMatchesWideReference) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5000; ++i) {
    const Fi32 a = oracle::random_fi32(rng, 60, 190), b = oracle::random_fi32(rng, 60, 190);
    oracle::Exact p{oracle::cpp_int(a.frac) * b.frac, int{a.exp} + int{b.exp} - 298};
    ASSERT_EQ(fi32_mul(a, b), oracle::encode(p));
  }
}

TEST(Dot32, MxTimesMxMatchesWideReference) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> e8(-127, 127), code(100, 150);
  for (int i = 0; i < 5000; ++i) {
    std::vector<std::int8_t> a(32), b(32);
    oracle::cpp_int sum = 0;
    for (int k = 0; k < 32; ++k) {
      a[k] = static_cast<std::int8_t>(e8(rng));
      b[k] = static_cast<std::int8_t>(e8(rng));
      sum += oracle::cpp_int(a[k]) * b[k];
    }
    const int ca = code(rng), cb = code(rng);
    const int la = ca - 133, lb = cb - 133;
    const Fi32 got = dot32(std::span<const std::int8_t>(a), la, std::span<const std::int8_t>(b), lb);
    ASSERT_EQ(got, oracle::encode({sum, la + lb}));
  }
}

TEST(Dot32, MixedIntegerOperands) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> i16(-32768, 32767), u4(0, 15);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::int32_t> a(32), b(32);
    oracle::cpp_int sum = 0;
    for (int k = 0; k < 32; ++k) {
      a[k] = i16(rng);
      b[k] = u4(rng) - 8;
      sum += oracle::cpp_int(a[k]) * b[k];
    }
    ASSERT_EQ(dot32(std::span<const std::int32_t>(a), 0, std::span<const std::int32_t>(b), -4),
              oracle::encode({sum, -4}));
  }
}

TEST(Dot32, ShortBlocksZeroPadAndLongBlocksThrow) {
  std::vector<std::int8_t> a(5, 3), b(5, 2);
  EXPECT_DOUBLE_EQ(fi32_to_real(dot32(std::span<const std::int8_t>(a), 0, std::span<const std::int8_t>(b), 0)), 30.0);
  std::vector<std::int8_t> c(33, 1);
  EXPECT_THROW(dot32_wide(std::span<const std::int8_t>(c), 0, std::span<const std::int8_t>(c), 0), ShapeError);
  std::vector<std::int8_t> z(32, 0);
  EXPECT_EQ(dot32(std::span<const std::int8_t>(z), 0, std::span<const std::int8_t>(z), 0), Fi32::zero());
}

TEST(Mx, StorageBytesForCaseStudyTile) {
  EXPECT_EQ(storage_bytes(DType::MXINT8, 96, 3072), 304128u);
  EXPECT_EQ(storage_bytes(DType::MXINT8, 96, 3072) / 1024.0, 297.0);
  EXPECT_EQ(MxTensor(96, 3072).storage_bytes(), 304128u);
  EXPECT_EQ(storage_bytes(DType::INT4, 3, 5), 9u);
}

TEST(Mx, BlockMaxLandsInTopBinade) {
  RealTensor x(1, 32);
  for (int i = 0; i < 32; ++i) x.at(0, i) = 0.01 * (i + 1);
  const MxTensor q = quantize_mx(x);
  const int m = std::abs(q.elem(0, 31));
  EXPECT_GE(m, 64);
  EXPECT_LE(m, 127);
  EXPECT_EQ(q.exp_at(0, 0), std::ilogb(0.32) + 127);
}

TEST(Mx, RoundingPastMaxSaturates) {
  RealTensor x(1, 2);
  x.at(0, 0) = 1.999;
  x.at(0, 1) = -1.999;
  const MxTensor q = quantize_mx(x);
  EXPECT_EQ(q.elem(0, 0), 127);
  EXPECT_EQ(q.elem(0, 1), -127);
}

TEST(Mx, RoundTripErrorBound) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> sc(-40, 40);
  for (int blk = 0; blk < 10000; ++blk) {
    RealTensor x(1, 32);
    const double s = std::ldexp(1.0, sc(rng));
    for (double& v : x.data) v = nd(rng) * s;
    const MxTensor q = quantize_mx(x);
    const double lsb = std::ldexp(1.0, q.lsb_exp(0, 0));
    double mx = 0;
    for (double v : x.data) mx = std::max(mx, std::fabs(v));
    for (int i = 0; i < 32; ++i) {
      const double err = std::fabs(q.value(0, i) - x.at(0, i));
      const double bound = std::fabs(x.at(0, i)) / lsb > 127.5 ? lsb : 0.5 * lsb;
      ASSERT_LE(err, bound);
      ASSERT_LE(err, mx / 64.0);
    }
  }
}

TEST(Mx, RowAxisBlocksRunDownColumns) {
  RealTensor x(64, 2);
  for (std::size_t r = 0; r < 64; ++r) {
    x.at(r, 0) = r < 32 ? 1.0 : 100.0;
    x.at(r, 1) = 0.5;
  }
  const MxTensor q = quantize_mx(x, SharedAxis::Rows);
  EXPECT_EQ(q.shared_exps.size(), 4u);
  EXPECT_DOUBLE_EQ(q.value(0, 0), 1.0);
  EXPECT_EQ(q.exp_at(40, 0), std::ilogb(100.0) + 127);
}

TEST(Mx, RejectsNonFinite) {
  RealTensor x(1, 3);
  x.at(0, 1) = INFINITY;
  EXPECT_THROW(quantize_mx(x), RangeError);
}

TEST(Mx, AlignFromFi32MatchesQuantizer) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 300; ++t) {
    Fi32Tensor acc(3, 70);
    RealTensor real(3, 70);
    for (std::size_t i = 0; i < acc.data.size(); ++i) {
      acc.data[i] = (i % 11 == 0) ? Fi32::zero() : oracle::random_fi32(rng, 110, 140);
      real.data[i] = fi32_to_real(acc.data[i]);
    }
    const MxTensor a = align_fi32_to_mx(acc), b = quantize_mx(real);
    ASSERT_EQ(a.elems, b.elems);
    ASSERT_EQ(a.shared_exps, b.shared_exps);
  }
}

TEST(Serialization, MxFi32IntRoundTrip) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> nd;
  RealTensor x(5, 40);
  for (double& v : x.data) v = nd(rng);
  const MxTensor m = quantize_mx(x);
  const auto mb = to_bytes(m);
  EXPECT_EQ(mb.size(), m.storage_bytes());
  const MxTensor m2 = mx_from_bytes(5, 40, SharedAxis::Cols, mb);
  EXPECT_EQ(m2.elems, m.elems);
  EXPECT_EQ(m2.shared_exps, m.shared_exps);

  Fi32Tensor f(2, 3);
  for (Fi32& v : f.data) v = oracle::random_fi32(rng);
  EXPECT_EQ(fi32_from_bytes(2, 3, to_bytes(f)).data, f.data);

  for (DType d : {DType::INT4, DType::UINT4, DType::INT8, DType::UINT8, DType::INT16}) {
    IntTensor t(3, 7, d);
    std::uniform_int_distribution<int> code(t.min_code(), t.max_code());
    for (auto& q : t.elems) q = code(rng);
    const auto bytes = to_bytes(t);
    EXPECT_EQ(bytes.size(), t.storage_bytes());
    EXPECT_EQ(int_from_bytes(3, 7, d, bytes).elems, t.elems) << to_string(d);
  }
  EXPECT_THROW(mx_from_bytes(5, 41, SharedAxis::Cols, mb), ParseError);
}

TEST(IntTensorT, ZeroPointAndScale) {
  IntTensor t(2, 2, DType::UINT8);
  t.elems = {128, 130, 0, 255};
  t.zero_point = {128, 0};
  t.scale = {fi32_from_real(0.5), fi32_from_real(2.0)};
  EXPECT_TRUE(t.valid());
  EXPECT_DOUBLE_EQ(t.value(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(t.value(1, 1), 510.0);
  t.elems[0] = 256;
  EXPECT_FALSE(t.valid());
  EXPECT_THROW(IntTensor(1, 1, DType::FI32), ShapeError);
}
