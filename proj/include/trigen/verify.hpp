// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Property suite on small shapes: numeric cores, LUT sweep, traffic model,
// command decomposition, lowering equivalences and Sync-ID safety.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trigen/report.hpp"

namespace trigen {

struct VerifyOptions {
  std::uint64_t seed = 1;
  int cases = 200;  // randomized cases per property
  Thresholds thresholds;
};

namespace detail {

inline MatmulSpec random_matmul(std::mt19937_64& rng, std::size_t max_dim) {
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  const DType acts[] = {DType::MXINT8, DType::INT16};
  const DType weights[] = {DType::UINT4, DType::MXINT8, DType::INT16};
  MatmulSpec s;
  s.name = "r";
  s.a = {dim(rng), dim(rng), acts[rng() % 2], rng() % 4 == 0};
  s.b = {dim(rng), s.a.cols, weights[rng() % 3], false};
  s.c_dtype = rng() % 2 ? DType::FI32 : DType::INT16;
  if (rng() % 3 == 0) s.mask = CausalMask{static_cast<std::int64_t>(rng() % 64) - 32};
  return s;
}

/// Fully masked (query block, key block) pairs of a causal square layer.
inline std::size_t triangular_blocks(std::size_t seq, std::size_t tq, std::size_t tk) {
  std::size_t n = 0;
  const std::size_t nk = ceil_div(seq, tk);
  for (std::size_t b0 = 0; b0 < seq; b0 += tq) {
    const std::size_t b1 = std::min(seq, b0 + tq);
    n += nk - ceil_div(b1, tk);
  }
  return n;
}

inline double rel_shadow(const LoweredLayer& a, const LoweredLayer& b, const TensorMap& in, const std::string& id) {
  ShadowExecutor sa(a.program), sb(b.program);
  bind_layer(sa, a, in);
  bind_layer(sb, b, in);
  sa.run();
  sb.run();
  return rel_l2(sa.value(id), sb.value(id));
}

}  // namespace detail

inline ReportBundle run_verify(const VerifyOptions& vo = {}) {
  ReportBundle b;
  b.kind = "verify";
  b.spec = {{"seed", vo.seed}, {"cases", vo.cases}};
  std::mt19937_64 rng(vo.seed);
  auto add = [&](Check c) { b.checks.push_back(std::move(c)); };

  // Numeric cores: 32-element dots are exact in FI32.
  {
    std::uniform_int_distribution<int> e8(-127, 127), sc(-50, 20);
    std::size_t bad = 0;
    for (int i = 0; i < vo.cases * 50; ++i) {
      std::vector<std::int8_t> x(32), y(32);
      long long sum = 0;
      for (int k = 0; k < 32; ++k) {
        x[k] = static_cast<std::int8_t>(e8(rng));
        y[k] = static_cast<std::int8_t>(e8(rng));
        sum += static_cast<long long>(x[k]) * y[k];
      }
      const int lx = sc(rng), ly = sc(rng);
      const Fi32 got = dot32(std::span<const std::int8_t>(x), lx, std::span<const std::int8_t>(y), ly);
      bad += fi32_to_real(got) != std::ldexp(static_cast<double>(sum), lx + ly);
    }
    add(make_check("dot32 exact mismatches", static_cast<double>(bad), 0, true));
  }
  {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_int_distribution<int> sc(-40, 40);
    double worst = 0;
    for (int blk = 0; blk < vo.cases * 10; ++blk) {
      RealTensor x(1, 32);
      const double s = std::ldexp(1.0, sc(rng));
      double mx = 0;
      for (double& v : x.data) {
        v = nd(rng) * s;
        mx = std::max(mx, std::fabs(v));
      }
      const MxTensor q = quantize_mx(x);
      for (std::size_t i = 0; i < 32; ++i) worst = std::max(worst, std::fabs(q.value(0, i) - x.at(0, i)) / mx);
    }
    add(make_check("MX round-trip error / block max", worst, 1.0 / 64.0, true));
  }

  // LUT sweep.
  {
    const ReportBundle l = run_lut_accuracy(vo.thresholds);
    b.lut = l.lut;
    for (const auto& c : l.checks) add(c);
  }

  // RMSNorm tile byte math.
  {
    const RmsnormLedger led = rmsnorm_ledger(3072, DType::MXINT8, 96);
    const double tile = static_cast<double>(storage_bytes(DType::MXINT8, 96, 3072));
    add(make_check("96x3072 MXINT8 tile bytes off 297 KiB", std::fabs(tile - 297.0 * 1024), 0, true));
    add(make_check("RMSNorm ledger KiB", static_cast<double>(led.total()) / 1024.0, 893, true));
  }

  // Traffic estimate vs loop trace, and selection vs enumeration.
  {
    std::size_t bad = 0, worse = 0;
    for (int i = 0; i < vo.cases; ++i) {
      const MatmulSpec s = detail::random_matmul(rng, 512);
      const PlannerConfig pc{1 + static_cast<int>(rng() % 4), std::size_t{1} << (16 + rng() % 5), 32.0};
      TilePlan p;
      try {
        p = select_plan(s, pc);
      } catch (const InfeasibleError&) {
        continue;
      }
      bad += trace_bytes(trace_tiled_matmul(s, p)) != estimate_transfer(s, p).total();
      for (Stationary st : {Stationary::IN0, Stationary::IN1}) {
        const std::size_t sr_max = st == Stationary::IN0 ? s.m() : s.n();
        const std::size_t tr_max = st == Stationary::IN0 ? s.n() : s.m();
        for (std::size_t sr : detail::tile_sizes(sr_max))
          for (std::size_t tr : detail::tile_sizes(tr_max)) {
            if (tile_footprint(s, st, sr, tr) > pc.sram_bytes) continue;
            worse += estimate_transfer(s, st, sr, tr).total() < p.total_bytes;
          }
      }
    }
    add(make_check("estimate vs trace mismatches", static_cast<double>(bad), 0, true));
    add(make_check("enumerated plans beating select_plan", static_cast<double>(worse), 0, true));
  }

  // Command decomposition.
  {
    add(make_check("commands for 256x64 by 128x64", static_cast<double>(decompose(256, 128).size()), 4, true));
    std::uniform_int_distribution<std::size_t> d(1, 400);
    std::size_t bad = 0;
    for (int t = 0; t < vo.cases / 4; ++t) {
      const std::size_t r = d(rng), c = d(rng);
      std::vector<int> hit(r * c, 0);
      for (const Command& cmd : decompose(r, c))
        for (std::size_t i = cmd.row0; i < cmd.row0 + cmd.rows; ++i)
          for (std::size_t j = cmd.col0; j < cmd.col0 + cmd.cols; ++j) ++hit[i * c + j];
      bad += !std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; });
    }
    add(make_check("decomposition partition failures", static_cast<double>(bad), 0, true));
  }

  // Lowering equivalences on the shadow path.
  {
    double worst = 0;
    for (int inst = 0; inst < 10; ++inst) {
      const std::size_t hd = std::size_t{16} << (rng() % 3);
      const std::size_t heads = std::size_t{1} << (rng() % 3);
      const ModelDims d{"v", 64, heads, heads, hd, 128, true, 1e-6};
      const LayerGraph g = decoder_layer(d, 8 + rng() % 121);
      LoweringOptions on = LoweringOptions::all(), off = on;
      off.trans_fuse = false;
      const TensorMap in = random_layer_inputs(g, DType::MXINT8, vo.seed + static_cast<std::uint64_t>(inst));
      worst = std::max(worst, detail::rel_shadow(lower_layer(g, on, {}), lower_layer(g, off, {}), in, "y"));
    }
    add(make_check("transpose fusion shadow relative error", worst, 1e-10, true));
  }
  {
    const ModelDims d{"v", 128, 4, 2, 32, 256, true, 1e-6};
    double worst = 0;
    std::size_t skip_bad = 0;
    for (std::size_t seq : {32, 128, 512}) {
      const LayerGraph g = decoder_layer(d, seq);
      LoweringOptions f = LoweringOptions::all();
      f.planner = PlannerConfig{4, 60000, 32.0};
      LoweringOptions u = f;
      u.mask_fuse = false;
      const TensorMap in = random_layer_inputs(g, f.act(), vo.seed + seq);
      const LoweredLayer lf = lower_layer(g, f, {});
      worst = std::max(worst, detail::rel_shadow(lf, lower_layer(g, u, {}), in, "y"));
      const AttentionTiles t = attention_tiles(d.head_dim, seq, f, 60000);
      skip_bad += lf.skipped_blocks != d.n_heads * detail::triangular_blocks(seq, t.query, t.key);
    }
    add(make_check("mask fusion shadow difference", worst, 0, true));
    add(make_check("skipped block count mismatches", static_cast<double>(skip_bad), 0, true));
  }
  {
    const ModelDims d{"v", 128, 4, 2, 32, 256, true, 1e-6};
    const LayerGraph g = decoder_layer(d, 64);
    const TensorMap in = random_layer_inputs(g, DType::INT16, vo.seed);
    const LoweredLayer ref = lower_layer(g, LoweringOptions::none(), {});
    double worst = 0;
    for (int m = 0; m < 16; ++m) {
      const LoweringOptions o{false, (m & 1) != 0, (m & 2) != 0, (m & 4) != 0, (m & 8) != 0, std::nullopt};
      worst = std::max(worst, detail::rel_shadow(lower_layer(g, o, {}), ref, in, "out"));
    }
    add(make_check("toggle invariance shadow relative error", worst, 1e-9, true));
  }

  // Sync-ID safety over random balanced programs.
  {
    std::size_t failures = 0;
    for (int t = 0; t < vo.cases; ++t) {
      const std::size_t n = std::size_t{1} << (1 + rng() % 3);
      SimConfig cfg;
      cfg.n_npus = static_cast<int>(n);
      std::vector<Program> progs(n);
      const int stages = 1 + static_cast<int>(rng() % 4);
      for (auto& p : progs) {
        for (int s = 0; s < stages; ++s) {
          MatmulSpec ms = detail::random_matmul(rng, 128);
          ms.mask.reset();
          ms.a.on_chip = false;
          const std::string nm = "m" + std::to_string(s);
          p.declare({nm + ".a", ms.m(), ms.k(), ms.a.dtype});
          p.declare({nm + ".b", ms.n(), ms.k(), ms.b.dtype});
          p.declare({nm + ".c", ms.m(), ms.n(), ms.c_dtype});
          Instruction mm;
          mm.op = Opcode::TMATMUL;
          mm.in0 = p.whole(nm + ".a");
          mm.in1 = p.whole(nm + ".b");
          mm.out = p.whole(nm + ".c");
          mm.plan = p.add_plan({ms, select_plan(ms, cfg.planner())});
          p.emit(mm);
          Instruction sy;
          sy.op = Opcode::SYNC;
          sy.sync_id = s + 1;
          p.emit(sy);
        }
      }
      std::vector<const Program*> ptr;
      for (const auto& p : progs) ptr.push_back(&p);
      try {
        const MultiReport r = simulate_multi(ptr, cfg);
        for (const SyncEvent& e : r.syncs)
          for (const SyncEvent& f : r.syncs)
            if (f.npu != e.npu && f.sync_id == e.sync_id && e.release < f.arrive) ++failures;
        failures += r.syncs.size() != n * static_cast<std::size_t>(stages);
      } catch (const DeadlockError&) {
        ++failures;
      }
    }
    add(make_check("Sync-ID safety failures", static_cast<double>(failures), 0, true));
  }
  return b;
}

}  // namespace trigen
