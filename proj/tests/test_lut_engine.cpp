// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "trigen/lut_engine.hpp"

using namespace trigen;

namespace {
const LutEngine& eng() { return default_lut_engine(); }
}  // namespace

TEST(Lut, TableSizes) {
  for (LutFunc f : kAllLutFuncs) {
    const LutPair& p = eng().pair(f);
    EXPECT_EQ(p.value_table.size(), 16u);
    EXPECT_EQ(p.error_table.size(), 256u);
    EXPECT_LE(p.storage_bytes(), 1024u);
  }
}

TEST(Lut, IsqrRangeReductionExamples) {
  EXPECT_NEAR(eng().evaluate(LutFunc::ISQR, 4.0), 0.5, 1e-5);
  EXPECT_NEAR(eng().evaluate(LutFunc::ISQR, 2.0), 1.0 / std::sqrt(2.0), 1e-5);
  // odd exponent: 2 = 2^1 * 1 -> table argument 0.5, shift -1
  const LutQuery q = preprocess(LutFunc::ISQR, fi32_from_real(2.0));
  EXPECT_EQ(q.shift, -1);
  EXPECT_EQ(q.index_v, 0);
  EXPECT_EQ(q.frac_v, 0u);
  const LutQuery q4 = preprocess(LutFunc::ISQR, fi32_from_real(4.0));
  EXPECT_EQ(q4.shift, -1);
}

TEST(Lut, ExactPointsAtTableNodes) {
  EXPECT_NEAR(eng().evaluate(LutFunc::EXP, 0.0), 1.0, 1e-6);
  EXPECT_NEAR(eng().evaluate(LutFunc::RECIP, 1.0), 1.0, 1e-6);
  EXPECT_EQ(eng().evaluate(LutFunc::SILU, 0.0), 0.0);
}

TEST(Lut, StrictRangeRejectsOutside) {
  EXPECT_THROW(eng().evaluate(LutFunc::RECIP, 5000.0), RangeError);
  EXPECT_THROW(eng().evaluate(LutFunc::EXP, -9.0), RangeError);
  EXPECT_THROW(eng().evaluate(LutFunc::ISQR, 0.0), RangeError);
  EXPECT_NO_THROW(eng().evaluate(LutFunc::SILU, 64.0));
}

TEST(Lut, DatapathModeSaturates) {
  NumericFlags f;
  EXPECT_EQ(eng().evaluate(LutFunc::EXP, fi32_from_real(500.0), RangeCheck::Datapath, &f), Fi32::max_value());
  EXPECT_TRUE(f.saturated);
  EXPECT_EQ(eng().evaluate(LutFunc::EXP, Fi32::lowest(), RangeCheck::Datapath), Fi32::zero());
  EXPECT_NEAR(fi32_to_real(eng().evaluate(LutFunc::RECIP, fi32_from_real(-4.0), RangeCheck::Datapath)), -0.25, 1e-6);
  EXPECT_NEAR(fi32_to_real(eng().evaluate(LutFunc::RECIP, fi32_from_real(1e6), RangeCheck::Datapath)), 1e-6, 1e-11);
  const double s = fi32_to_real(eng().evaluate(LutFunc::SILU, fi32_from_real(-30.0), RangeCheck::Datapath));
  EXPECT_NEAR(s, -8.0 / (1.0 + std::exp(8.0)), 1e-6);
}

TEST(Lut, BuildRejectsSingularDomains) {
  EXPECT_THROW(build_tables(LutFunc::RECIP, {-1.0, 1.0}), RangeError);
  EXPECT_THROW(build_tables(LutFunc::ISQR, {0.0, 1.0}), RangeError);
  EXPECT_THROW(build_tables(LutFunc::EXP, {1.0, 1.0}), RangeError);
}

TEST(Lut, ErrorTableBoundedByValueTableResidual) {
  for (LutFunc f : kAllLutFuncs) {
    const LutPair& p = eng().pair(f);
    const double span = p.domain.hi - p.domain.lo;
    double worst = 0;
    for (int k = 0; k <= 1 << 14; ++k) {
      const double x = p.domain.lo + span * k / (1 << 14);
      const double fx = static_cast<double>(lut_reference(f, x));
      const double pos = (x - p.domain.lo) / span * 16;
      const int i = std::min(15, static_cast<int>(pos));
      const double w = pos - i;
      const double v0 = std::ldexp(p.value_table[i], -p.value_shift);
      const double v1 = i < 15 ? std::ldexp(p.value_table[i + 1], -p.value_shift)
                               : std::ldexp(p.value_table[0], -p.value_shift + lut_wrap_shift(f));
      worst = std::max(worst, std::fabs(fx - (v0 + w * (v1 - v0))));
    }
    for (std::int16_t g : p.error_table) EXPECT_LE(std::ldexp(std::abs(g), -p.error_shift), worst * 1.0001) << to_string(f);
  }
}

TEST(Lut, ErrorTableNeverWorseThanValueOnly) {
  for (LutFunc f : kAllLutFuncs) {
    const LutAccuracy dual = measure_accuracy(eng(), f, true);
    const LutAccuracy single = measure_accuracy(eng(), f, false);
    EXPECT_LT(dual.mape, single.mape) << to_string(f);
    EXPECT_LE(dual.mse, single.mse) << to_string(f);
  }
}

TEST(Lut, MonotoneOverSweepGrid) {
  for (LutFunc f : {LutFunc::RECIP, LutFunc::ISQR, LutFunc::EXP}) {
    const LutDomain r = declared_input_range(f);
    const bool inc = f == LutFunc::EXP;
    double prev = eng().evaluate(f, r.lo);
    for (double x = r.lo + 1.0 / 1024; x <= r.hi; x += 1.0 / 1024) {
      const double y = eng().evaluate(f, x);
      ASSERT_TRUE(inc ? y >= prev : y <= prev) << to_string(f) << " at " << x;
      prev = y;
    }
  }
}

TEST(Lut, AccuracyGates) {
  for (LutFunc f : kAllLutFuncs) {
    const LutAccuracy a = measure_accuracy(eng(), f);
    EXPECT_LE(a.mape, 1e-4) << to_string(f);
    if (f != LutFunc::EXP) {
      EXPECT_LE(a.mse, 1e-3) << to_string(f);
    }
  }
}

TEST(Lut, DumpLoadRoundTrip) {
  for (LutFunc f : kAllLutFuncs) {
    const LutPair& p = eng().pair(f);
    const auto bytes = dump_lut(p);
    EXPECT_EQ(bytes.size(), p.storage_bytes());
    const LutPair q = load_lut(bytes);
    EXPECT_EQ(q.value_table, p.value_table);
    EXPECT_EQ(q.error_table, p.error_table);
    EXPECT_EQ(q.value_shift, p.value_shift);
    EXPECT_EQ(q.error_shift, p.error_shift);
    EXPECT_EQ(q.domain.hi, p.domain.hi);
  }
  std::vector<std::uint8_t> junk(10, 0);
  EXPECT_THROW(load_lut(junk), ParseError);
}

TEST(Lut, Deterministic) {
  const LutEngine other;
  for (double x : {0.37, 1.5, 7.25, 33.0}) {
    EXPECT_EQ(other.evaluate(LutFunc::SILU, fi32_from_real(x)), eng().evaluate(LutFunc::SILU, fi32_from_real(x)));
  }
}
