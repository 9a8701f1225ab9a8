// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Tiled matmul traffic model, loop trace and stationary/tile selection.
//
// A matmul multiplies IN0 (M x K) by the transpose of IN1 (N x K) into C (M x N).
// Tiles are row blocks of IN0 and IN1 with the full reduction dimension; the
// stationary operand is read once, the streaming operand once per stationary tile.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trigen/error.hpp"
#include "trigen/mx_numerics.hpp"

namespace trigen {

inline constexpr std::size_t kTileQuantum = 32;

enum class Stationary { IN0, IN1 };
enum class SplitAxis { IN0Rows, IN1Rows };

inline std::string_view to_string(Stationary s) { return s == Stationary::IN0 ? "in0" : "in1"; }
inline std::string_view to_string(SplitAxis a) { return a == SplitAxis::IN0Rows ? "in0_rows" : "in1_rows"; }

struct OperandShape {
  std::size_t rows = 0, cols = 0;
  DType dtype = DType::MXINT8;
  bool on_chip = false;  // already resident in SRAM: no DRAM traffic, occupies its full size

  /// Row-additive: any split into row blocks sums to bytes().
  std::size_t bytes(std::size_t nrows) const { return storage_bytes(dtype, nrows, cols); }
  std::size_t bytes() const { return bytes(rows); }
};

/// C(i, j) is visible iff j <= i + offset.
struct CausalMask {
  std::int64_t offset = 0;

  /// True when every C(i, j) with i < r1 and j >= c0 is hidden.
  bool block_masked(std::size_t r1, std::size_t c0) const {
    return static_cast<std::int64_t>(r1) - 1 + offset < static_cast<std::int64_t>(c0);
  }
};

struct MatmulSpec {
  std::string name;
  OperandShape a;  // IN0, M x K
  OperandShape b;  // IN1, N x K
  DType c_dtype = DType::FI32;
  bool c_on_chip = false;
  std::optional<CausalMask> mask;
  std::size_t reserved_bytes = 0;  // SRAM held by other data during the matmul

  std::size_t m() const { return a.rows; }
  std::size_t n() const { return b.rows; }
  std::size_t k() const { return a.cols; }
  std::size_t c_bytes(std::size_t r, std::size_t c) const { return storage_bytes(c_dtype, r, c); }
  std::size_t c_bytes() const { return c_bytes(m(), n()); }
  std::uint64_t macs() const { return std::uint64_t{m()} * n() * k(); }

  void validate() const {
    if (a.cols != b.cols) throw ShapeError("matmul '" + name + "': inner dims differ");
    if (a.rows == 0 || b.rows == 0 || a.cols == 0) throw ShapeError("matmul '" + name + "': empty operand");
    if (a.dtype == DType::FI32 || b.dtype == DType::FI32) throw ShapeError("matmul '" + name + "': FI32 operand");
  }
};

struct TilePlan {
  Stationary stationary = Stationary::IN1;
  std::size_t stat_rows = 0;    // rows of the stationary tile
  std::size_t stream_rows = 0;  // rows of the streaming tile
  SplitAxis axis = SplitAxis::IN0Rows;
  int cores_used = 1;
  int n_cores = 1;
  std::size_t min_stat_rows = 0;  // smallest stationary tile whose compute hides a stream load
  std::uint64_t read_bytes = 0;   // reads only
  std::uint64_t total_bytes = 0;  // reads plus C write-back
  double mac_utilization = 0;
  std::size_t footprint_bytes = 0;

  std::size_t a_rows(const MatmulSpec&) const { return stationary == Stationary::IN0 ? stat_rows : stream_rows; }
  std::size_t b_rows(const MatmulSpec&) const { return stationary == Stationary::IN1 ? stat_rows : stream_rows; }
};

// ---------------------------------------------------------------------------
// Footprint and transfer volume
// ---------------------------------------------------------------------------

inline std::size_t tile_footprint(const MatmulSpec& s, Stationary st, std::size_t stat_rows, std::size_t stream_rows) {
  const OperandShape& so = st == Stationary::IN0 ? s.a : s.b;
  const OperandShape& mo = st == Stationary::IN0 ? s.b : s.a;
  std::size_t bytes = s.reserved_bytes;
  bytes += so.on_chip ? so.bytes() : so.bytes(stat_rows);
  bytes += mo.on_chip ? mo.bytes() : 2 * mo.bytes(stream_rows);
  bytes += s.c_on_chip ? s.c_bytes() : s.c_bytes(stat_rows, stream_rows);
  return bytes;
}

namespace detail {

/// Streaming rows skipped (never read) for the stationary tile [r0, r1).
inline std::size_t skipped_stream_rows(const MatmulSpec& s, Stationary st, std::size_t r0, std::size_t r1,
                                       std::size_t stream_rows) {
  if (!s.mask) return 0;
  const std::int64_t off = s.mask->offset;
  if (st == Stationary::IN0) {
    // B tiles starting at c0 >= r1 + offset are fully masked.
    const std::int64_t first = static_cast<std::int64_t>(r1) + off;
    const std::int64_t n = static_cast<std::int64_t>(s.n());
    if (first >= n) return 0;
    const std::int64_t t = static_cast<std::int64_t>(stream_rows);
    const std::int64_t start = first <= 0 ? 0 : ((first + t - 1) / t) * t;
    return start >= n ? 0 : static_cast<std::size_t>(n - start);
  }
  // IN1 stationary: stationary B rows [r0, r1) are C columns; A tiles ending at
  // or before c0 - offset are fully masked.
  const std::int64_t x = static_cast<std::int64_t>(r0) - off;
  const std::int64_t m = static_cast<std::int64_t>(s.m());
  if (x <= 0) return 0;
  if (x >= m) return static_cast<std::size_t>(m);
  const std::int64_t t = static_cast<std::int64_t>(stream_rows);
  return static_cast<std::size_t>((x / t) * t);
}

}  // namespace detail

struct TransferEstimate {
  std::uint64_t stationary_bytes = 0;
  std::uint64_t stream_bytes = 0;
  std::uint64_t c_bytes = 0;
  std::uint64_t reads() const { return stationary_bytes + stream_bytes; }
  std::uint64_t total() const { return reads() + c_bytes; }
};

/// Reads: ceil(rows(S) / rows(S_i)) * size(streaming) + size(S), plus C written
/// once. Fully masked sub-blocks drop their streaming reads.
inline TransferEstimate estimate_transfer(const MatmulSpec& s, Stationary st, std::size_t stat_rows,
                                          std::size_t stream_rows) {
  const OperandShape& so = st == Stationary::IN0 ? s.a : s.b;
  const OperandShape& mo = st == Stationary::IN0 ? s.b : s.a;
  TransferEstimate e;
  e.stationary_bytes = so.on_chip ? 0 : so.bytes();
  if (!mo.on_chip) {
    const std::size_t tiles = ceil_div(so.rows, stat_rows);
    std::uint64_t stream = std::uint64_t{tiles} * mo.bytes();
    if (s.mask) {
      for (std::size_t r0 = 0; r0 < so.rows; r0 += stat_rows) {
        const std::size_t r1 = std::min(so.rows, r0 + stat_rows);
        stream -= mo.bytes(detail::skipped_stream_rows(s, st, r0, r1, stream_rows));
      }
    }
    e.stream_bytes = stream;
  }
  e.c_bytes = s.c_on_chip ? 0 : s.c_bytes();
  return e;
}

inline TransferEstimate estimate_transfer(const MatmulSpec& s, const TilePlan& p) {
  return estimate_transfer(s, p.stationary, p.stat_rows, p.stream_rows);
}

// ---------------------------------------------------------------------------
// Loop trace
// ---------------------------------------------------------------------------

struct TraceEvent {
  enum class Kind { LoadA, LoadB, Compute, SkipCompute, StoreC };
  Kind kind{};
  std::size_t a_row0 = 0, a_rows = 0;
  std::size_t b_row0 = 0, b_rows = 0;
  std::uint64_t bytes = 0;  // DRAM bytes moved (0 for on-chip operands and compute)
};

/// Walks the nested tile loops with the stationary operand outermost. Reads of
/// the streaming tile are dropped for fully masked C blocks; C is still written.
inline std::vector<TraceEvent> trace_tiled_matmul(const MatmulSpec& s, const TilePlan& p) {
  std::vector<TraceEvent> ev;
  const bool a_outer = p.stationary == Stationary::IN0;
  const std::size_t outer_n = a_outer ? s.m() : s.n();
  const std::size_t inner_n = a_outer ? s.n() : s.m();
  for (std::size_t o0 = 0; o0 < outer_n; o0 += p.stat_rows) {
    const std::size_t on = std::min(p.stat_rows, outer_n - o0);
    TraceEvent lo;
    lo.kind = a_outer ? TraceEvent::Kind::LoadA : TraceEvent::Kind::LoadB;
    (a_outer ? lo.a_row0 : lo.b_row0) = o0;
    (a_outer ? lo.a_rows : lo.b_rows) = on;
    const OperandShape& so = a_outer ? s.a : s.b;
    lo.bytes = so.on_chip ? 0 : so.bytes(on);
    ev.push_back(lo);
    for (std::size_t i0 = 0; i0 < inner_n; i0 += p.stream_rows) {
      const std::size_t in = std::min(p.stream_rows, inner_n - i0);
      TraceEvent blk;
      blk.a_row0 = a_outer ? o0 : i0;
      blk.a_rows = a_outer ? on : in;
      blk.b_row0 = a_outer ? i0 : o0;
      blk.b_rows = a_outer ? in : on;
      const bool masked = s.mask && s.mask->block_masked(blk.a_row0 + blk.a_rows, blk.b_row0);
      if (!masked) {
        TraceEvent li = blk;
        li.kind = a_outer ? TraceEvent::Kind::LoadB : TraceEvent::Kind::LoadA;
        const OperandShape& mo = a_outer ? s.b : s.a;
        li.bytes = mo.on_chip ? 0 : mo.bytes(in);
        ev.push_back(li);
      }
      TraceEvent c = blk;
      c.kind = masked ? TraceEvent::Kind::SkipCompute : TraceEvent::Kind::Compute;
      ev.push_back(c);
      TraceEvent st = blk;
      st.kind = TraceEvent::Kind::StoreC;
      st.bytes = s.c_on_chip ? 0 : s.c_bytes(blk.a_rows, blk.b_rows);
      ev.push_back(st);
    }
  }
  return ev;
}

inline std::uint64_t trace_bytes(const std::vector<TraceEvent>& ev) {
  std::uint64_t b = 0;
  for (const auto& e : ev) b += e.bytes;
  return b;
}

// ---------------------------------------------------------------------------
// Compute model shared with the cycle model
// ---------------------------------------------------------------------------

/// MPA cycles for an (a_rows x K) by (b_rows x K) block split over cores: one
/// IN0 row against 32 stationary IN1 rows per cycle per core.
inline std::uint64_t block_compute_cycles(std::size_t a_rows, std::size_t b_rows, std::size_t k, SplitAxis axis,
                                          int cores) {
  const std::uint64_t kb = ceil_div(k, kMxBlock);
  const std::uint64_t nb = ceil_div(b_rows, kMxBlock);
  const auto cu = static_cast<std::size_t>(cores);
  if (axis == SplitAxis::IN0Rows) return ceil_div(a_rows, cu) * kb * nb;
  return std::uint64_t{a_rows} * kb * ceil_div(nb, cu);
}

/// Busy fraction of all cores for the whole matmul under a core split.
inline double split_utilization(const MatmulSpec& s, SplitAxis axis, int cores_used, int n_cores) {
  const std::uint64_t ideal = std::uint64_t{s.m()} * ceil_div(s.k(), kMxBlock) * ceil_div(s.n(), kMxBlock);
  const std::uint64_t cyc = block_compute_cycles(s.m(), s.n(), s.k(), axis, cores_used);
  return static_cast<double>(ideal) / (static_cast<double>(n_cores) * static_cast<double>(cyc));
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

namespace detail {

/// 32-aligned tile sizes up to n, plus n itself when ragged.
inline std::vector<std::size_t> tile_sizes(std::size_t n) {
  std::vector<std::size_t> v;
  for (std::size_t t = kTileQuantum; t < n; t += kTileQuantum) v.push_back(t);
  v.push_back(n);
  return v;
}

inline std::uint64_t load_cycles(std::uint64_t bytes, double bw) {
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(bytes) / bw));
}

}  // namespace detail

struct PlannerConfig {
  int n_cores = 4;
  std::size_t sram_bytes = std::size_t{1} << 20;
  double bw_bytes_per_cycle = 32.0;
};

/// Picks the core split with the highest utilization, then for each stationary
/// the tile pair with the least traffic (ties: larger stationary tile, then
/// larger streaming tile), then the stationary with the least traffic (ties:
/// IN1, then larger stationary tile).
inline TilePlan select_plan(const MatmulSpec& s, const PlannerConfig& cfg) {
  s.validate();
  if (cfg.n_cores < 1 || cfg.sram_bytes == 0 || !(cfg.bw_bytes_per_cycle > 0))
    throw Error("select_plan: invalid planner configuration");

  // Core split candidates; the minimum cycle count is the maximum utilization.
  SplitAxis best_axis = SplitAxis::IN0Rows;
  int best_cu = 1;
  std::uint64_t best_cyc = std::numeric_limits<std::uint64_t>::max();
  for (SplitAxis axis : {SplitAxis::IN0Rows, SplitAxis::IN1Rows}) {
    for (int cu = 1; cu <= cfg.n_cores; ++cu) {
      const std::uint64_t cyc = block_compute_cycles(s.m(), s.n(), s.k(), axis, cu);
      if (cyc < best_cyc) {
        best_cyc = cyc;
        best_axis = axis;
        best_cu = cu;
      }
    }
  }

  std::optional<TilePlan> best;
  for (Stationary st : {Stationary::IN1, Stationary::IN0}) {
    const OperandShape& so = st == Stationary::IN0 ? s.a : s.b;
    const OperandShape& mo = st == Stationary::IN0 ? s.b : s.a;
    const auto stat_sizes = detail::tile_sizes(so.rows);
    const auto stream_sizes = detail::tile_sizes(mo.rows);

    // Smallest stationary tile whose compute covers one streaming-tile load.
    const std::size_t t0 = stream_sizes.front();
    const std::uint64_t load0 = mo.on_chip ? 0 : detail::load_cycles(mo.bytes(t0), cfg.bw_bytes_per_cycle);
    std::size_t min_stat = stat_sizes.back();
    for (std::size_t sr : stat_sizes) {
      const std::size_t ar = st == Stationary::IN0 ? sr : t0;
      const std::size_t br = st == Stationary::IN0 ? t0 : sr;
      if (block_compute_cycles(ar, br, s.k(), best_axis, best_cu) >= load0) {
        min_stat = sr;
        break;
      }
    }

    std::optional<TilePlan> local;
    std::uint64_t local_traffic = 0;
    for (auto it = stat_sizes.rbegin(); it != stat_sizes.rend(); ++it) {
      const std::size_t sr = *it;
      if (tile_footprint(s, st, sr, stream_sizes.front()) > cfg.sram_bytes) continue;
      // Without a mask the streaming tile does not change traffic; take the largest that fits.
      for (auto jt = stream_sizes.rbegin(); jt != stream_sizes.rend(); ++jt) {
        const std::size_t tr = *jt;
        const std::size_t fp = tile_footprint(s, st, sr, tr);
        if (fp > cfg.sram_bytes) continue;
        const TransferEstimate te = estimate_transfer(s, st, sr, tr);
        if (!local || te.total() < local_traffic) {
          TilePlan p;
          p.stationary = st;
          p.stat_rows = sr;
          p.stream_rows = tr;
          p.footprint_bytes = fp;
          p.read_bytes = te.reads();
          p.total_bytes = te.total();
          local = p;
          local_traffic = te.total();
        }
        if (!s.mask) break;
      }
    }
    if (!local) continue;
    local->min_stat_rows = min_stat;
    // IN1 is visited first, so equal traffic keeps IN1.
    if (!best || local->total_bytes < best->total_bytes) best = local;
  }
  if (!best) {
    throw InfeasibleError("select_plan '" + s.name + "': no 32-row tile pair fits " + std::to_string(cfg.sram_bytes) +
                          " bytes of SRAM");
  }
  best->axis = best_axis;
  best->cores_used = best_cu;
  best->n_cores = cfg.n_cores;
  best->mac_utilization = split_utilization(s, best_axis, best_cu, cfg.n_cores);
  return *best;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const OperandShape& o) {
  return {{"rows", o.rows}, {"cols", o.cols}, {"dtype", std::string(to_string(o.dtype))}, {"on_chip", o.on_chip}};
}

inline OperandShape operand_shape_from_json(const nlohmann::json& j) {
  OperandShape o;
  o.rows = j.at("rows").get<std::size_t>();
  o.cols = j.at("cols").get<std::size_t>();
  o.dtype = dtype_from_string(j.at("dtype").get<std::string>());
  o.on_chip = j.value("on_chip", false);
  return o;
}

inline nlohmann::json to_json(const MatmulSpec& s) {
  nlohmann::json j = {{"name", s.name},
                      {"in0", to_json(s.a)},
                      {"in1", to_json(s.b)},
                      {"out_dtype", std::string(to_string(s.c_dtype))},
                      {"out_on_chip", s.c_on_chip},
                      {"reserved_bytes", s.reserved_bytes}};
  if (s.mask) j["causal_offset"] = s.mask->offset;
  return j;
}

inline MatmulSpec matmul_spec_from_json(const nlohmann::json& j) {
  MatmulSpec s;
  s.name = j.value("name", std::string("matmul"));
  s.a = operand_shape_from_json(j.at("in0"));
  s.b = operand_shape_from_json(j.at("in1"));
  s.c_dtype = dtype_from_string(j.value("out_dtype", std::string("fi32")));
  s.c_on_chip = j.value("out_on_chip", false);
  s.reserved_bytes = j.value("reserved_bytes", std::size_t{0});
  if (j.contains("causal_offset")) s.mask = CausalMask{j.at("causal_offset").get<std::int64_t>()};
  s.validate();
  return s;
}

inline nlohmann::json to_json(const TilePlan& p, const MatmulSpec& s) {
  nlohmann::json cores = nlohmann::json::array();
  const std::size_t split_n = p.axis == SplitAxis::IN0Rows ? s.m() : ceil_div(s.n(), kMxBlock);
  const std::size_t per = ceil_div(split_n, static_cast<std::size_t>(p.cores_used));
  for (int c = 0; c < p.n_cores; ++c) {
    const std::size_t lo = std::min(split_n, per * static_cast<std::size_t>(c));
    const std::size_t hi = c < p.cores_used ? std::min(split_n, lo + per) : lo;
    const std::size_t unit = p.axis == SplitAxis::IN0Rows ? 1 : kMxBlock;
    cores.push_back({{"core", c},
                     {"axis", std::string(to_string(p.axis))},
                     {"row_begin", std::min(lo * unit, p.axis == SplitAxis::IN0Rows ? s.m() : s.n())},
                     {"row_end", std::min(hi * unit, p.axis == SplitAxis::IN0Rows ? s.m() : s.n())},
                     {"idle", hi == lo}});
  }
  return {{"spec", to_json(s)},
          {"stationary", std::string(to_string(p.stationary))},
          {"in0_tile", {p.a_rows(s), s.k()}},
          {"in1_tile", {p.b_rows(s), s.k()}},
          {"out_tile", {p.a_rows(s), p.b_rows(s)}},
          {"min_stationary_rows", p.min_stat_rows},
          {"cores", cores},
          {"read_bytes", p.read_bytes},
          {"total_bytes", p.total_bytes},
          {"footprint_bytes", p.footprint_bytes},
          {"mac_utilization", p.mac_utilization}};
}

}  // namespace trigen
