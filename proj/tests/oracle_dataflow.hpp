// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Exhaustive plan enumeration for small matmuls. Traffic comes from simulating
// the tile loops read by read; utilization from an explicit round-robin
// assignment of work units to cores.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "trigen/dataflow_opt.hpp"

namespace oracle {

using trigen::MatmulSpec;

inline std::size_t row_bytes_total(const trigen::OperandShape& o, std::size_t rows) {
  std::size_t b = 0;
  for (std::size_t r = 0; r < rows; ++r) b += trigen::storage_bytes(o.dtype, 1, o.cols);
  return b;
}

inline bool visible_any(const MatmulSpec& s, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  if (!s.mask) return true;
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j)
      if (static_cast<std::int64_t>(j) <= static_cast<std::int64_t>(i) + s.mask->offset) return true;
  return false;
}

/// DRAM bytes of the tile loops with `stat_a` selecting IN0 as the outer operand.
inline std::uint64_t simulated_traffic(const MatmulSpec& s, bool stat_a, std::size_t sr, std::size_t tr) {
  std::uint64_t bytes = 0;
  const auto& so = stat_a ? s.a : s.b;
  const auto& mo = stat_a ? s.b : s.a;
  for (std::size_t o = 0; o < so.rows; o += sr) {
    const std::size_t on = std::min(sr, so.rows - o);
    if (!so.on_chip) bytes += row_bytes_total(so, on);
    for (std::size_t i = 0; i < mo.rows; i += tr) {
      const std::size_t in = std::min(tr, mo.rows - i);
      const std::size_t ar0 = stat_a ? o : i, arn = stat_a ? on : in;
      const std::size_t br0 = stat_a ? i : o, brn = stat_a ? in : on;
      if (!mo.on_chip && visible_any(s, ar0, ar0 + arn, br0, br0 + brn)) bytes += row_bytes_total(mo, in);
      if (!s.c_on_chip) bytes += trigen::storage_bytes(s.c_dtype, arn, brn);
    }
  }
  return bytes;
}

inline std::size_t footprint(const MatmulSpec& s, bool stat_a, std::size_t sr, std::size_t tr) {
  const auto& so = stat_a ? s.a : s.b;
  const auto& mo = stat_a ? s.b : s.a;
  const std::size_t cr = stat_a ? sr : tr, cc = stat_a ? tr : sr;
  return s.reserved_bytes + (so.on_chip ? row_bytes_total(so, so.rows) : row_bytes_total(so, sr)) +
         (mo.on_chip ? row_bytes_total(mo, mo.rows) : 2 * row_bytes_total(mo, tr)) +
         (s.c_on_chip ? trigen::storage_bytes(s.c_dtype, s.m(), s.n()) : trigen::storage_bytes(s.c_dtype, cr, cc));
}

/// Makespan when work units (IN0 rows or 32-wide IN1 row groups) are dealt to
/// cores one at a time.
inline std::uint64_t round_robin_cycles(const MatmulSpec& s, bool split_rows, int cores) {
  const std::uint64_t kb = (s.k() + 31) / 32;
  const std::uint64_t nb = (s.n() + 31) / 32;
  std::vector<std::uint64_t> load(static_cast<std::size_t>(cores), 0);
  const std::uint64_t units = split_rows ? s.m() : nb;
  const std::uint64_t per_unit = split_rows ? kb * nb : s.m() * kb;
  for (std::uint64_t u = 0; u < units; ++u) load[u % static_cast<std::uint64_t>(cores)] += per_unit;
  return *std::max_element(load.begin(), load.end());
}

struct BruteResult {
  bool feasible = false;
  std::uint64_t min_cycles = 0;   // maximum utilization
  std::uint64_t min_traffic = 0;  // among max-utilization plans
};

inline std::vector<std::size_t> sizes(std::size_t n) {
  std::vector<std::size_t> v;
  for (std::size_t t = 32; t < n; t += 32) v.push_back(t);
  v.push_back(n);
  return v;
}

inline BruteResult brute_force(const MatmulSpec& s, int n_cores, std::size_t sram) {
  BruteResult r;
  std::uint64_t best_cyc = UINT64_MAX;
  for (bool split_rows : {true, false})
    for (int cu = 1; cu <= n_cores; ++cu) best_cyc = std::min(best_cyc, round_robin_cycles(s, split_rows, cu));
  r.min_cycles = best_cyc;
  // Every tile pair can run under the best split, so the max-utilization set is
  // the full feasible set.
  for (bool stat_a : {true, false}) {
    const auto& so = stat_a ? s.a : s.b;
    const auto& mo = stat_a ? s.b : s.a;
    for (std::size_t sr : sizes(so.rows)) {
      for (std::size_t tr : sizes(mo.rows)) {
        if (footprint(s, stat_a, sr, tr) > sram) continue;
        const std::uint64_t t = simulated_traffic(s, stat_a, sr, tr);
        if (!r.feasible || t < r.min_traffic) r.min_traffic = t;
        r.feasible = true;
      }
    }
  }
  return r;
}

struct RandomCase {
  MatmulSpec spec;
  int n_cores = 1;
  std::size_t sram = 0;
};

inline RandomCase random_case(std::mt19937_64& rng, std::size_t max_dim = 512) {
  using trigen::DType;
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  std::uniform_int_distribution<int> pick(0, 99), cores(1, 4);
  const DType a_types[] = {DType::MXINT8, DType::INT16, DType::INT8, DType::UINT8};
  const DType b_types[] = {DType::UINT4, DType::INT4, DType::MXINT8, DType::INT8};
  const DType c_types[] = {DType::MXINT8, DType::FI32, DType::INT16};
  RandomCase c;
  c.spec.name = "rand";
  c.spec.a = {dim(rng), 0, a_types[pick(rng) % 4], pick(rng) < 10};
  c.spec.b = {dim(rng), 0, b_types[pick(rng) % 4], pick(rng) < 10};
  c.spec.a.cols = c.spec.b.cols = dim(rng);
  c.spec.c_dtype = c_types[pick(rng) % 3];
  c.spec.c_on_chip = pick(rng) < 10;
  if (pick(rng) < 35) c.spec.mask = trigen::CausalMask{static_cast<std::int64_t>(pick(rng)) - 50};
  c.n_cores = cores(rng);
  const std::size_t srams[] = {std::size_t{1} << 20, 512 * 1024, 256 * 1024, 128 * 1024, 64 * 1024};
  c.sram = srams[pick(rng) % 5];
  return c;
}

}  // namespace oracle
