// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Cycle and DRAM-traffic model.
//
// A program is flattened into work items (tiles of a planned matmul, row
// chunks of vector instructions) and scheduled on two engines per NPU: the
// compute array and one in-order DMA queue. Two tile buffers allow one
// prefetch in flight. SYNC drains both engines and blocks until every peer's
// Sync register has reached the same id.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trigen/dataflow_opt.hpp"
#include "trigen/error.hpp"
#include "trigen/isa.hpp"

namespace trigen {

struct SimConfig {
  int n_npus = 1;
  int dlas_per_npu = 4;
  double clock_ghz = 1.0;
  double dram_gbps = 32.0;  // total, split evenly over NPUs
  std::size_t sram_bytes = std::size_t{1} << 20;
  bool sfu_mode = false;
  double sfu_cycles_per_element = 0.0;
  double prefetch_cycles = 32.0;  // stationary 32x32 sub-matrix, one row per cycle
  std::size_t vector_chunk_rows = 64;

  double bw_bytes_per_cycle() const { return dram_gbps / clock_ghz / n_npus; }
  std::uint64_t macs_per_cycle() const { return std::uint64_t{1024} * static_cast<std::uint64_t>(dlas_per_npu); }

  void validate() const {
    if (n_npus < 1 || dlas_per_npu < 1 || !(clock_ghz > 0) || !(dram_gbps > 0) || sram_bytes == 0 ||
        sfu_cycles_per_element < 0 || prefetch_cycles < 0 || vector_chunk_rows == 0)
      throw Error("SimConfig: all parameters must be positive");
  }
  PlannerConfig planner() const { return {dlas_per_npu, sram_bytes, bw_bytes_per_cycle()}; }
};

/// MPA cycles of one command: each cycle one IN0 row meets 32 IN1 rows over
/// one 32-deep reduction block on each participating core.
inline double cost_command(std::size_t rows, std::size_t k, std::size_t out_cols, const SimConfig& cfg,
                           SplitAxis axis = SplitAxis::IN0Rows, int cores = 1) {
  return static_cast<double>(block_compute_cycles(rows, out_cols, k, axis, cores)) + cfg.prefetch_cycles;
}

inline double matmul_block_cycles(std::size_t rows, std::size_t k, std::size_t out_cols, const SimConfig& cfg,
                                  SplitAxis axis, int cores) {
  double c = 0;
  for (const Command& cmd : decompose(rows, out_cols)) c += cost_command(cmd.rows, k, cmd.cols, cfg, axis, cores);
  return c;
}

/// 32-lane post-processing throughput.
inline double ppa_cycles(std::uint64_t elements) { return std::ceil(static_cast<double>(elements) / 32.0); }

inline double sfu_penalty(std::uint64_t elements, const SimConfig& cfg) {
  return cfg.sfu_cycles_per_element * static_cast<double>(elements);
}

// ---------------------------------------------------------------------------
// Work items
// ---------------------------------------------------------------------------

struct WorkItem {
  std::size_t instr = 0;
  Phase phase = Phase::Data;
  double load_bytes = 0, store_bytes = 0;
  double compute = 0;
  std::uint64_t macs = 0;
  std::size_t footprint = 0;
  bool barrier = false;  // first load waits for every earlier store
  int sync_id = -1;      // >= 0 marks a SYNC
};

namespace detail {

inline double view_bytes(const Program& p, const View& v) {
  return static_cast<double>(storage_bytes(p.decl(v.id).dtype, v.rows, v.cols));
}
inline double dram_bytes(const Program& p, const View& v) {
  return p.decl(v.id).residence == Residence::DRAM ? view_bytes(p, v) : 0.0;
}
inline View rows_of_view(View v, std::size_t r0, std::size_t n) {
  if (v.rows == 1) return v;
  v.row0 += r0;
  v.rows = n;
  return v;
}

inline void planned_items(const Program& p, const Instruction& ins, std::size_t idx, const SimConfig& cfg,
                          std::vector<WorkItem>& out) {
  const PlannedMatmul& pm = p.plans.at(static_cast<std::size_t>(ins.plan));
  const std::size_t k = pm.spec.k();
  const int cores = std::min(pm.plan.cores_used, cfg.dlas_per_npu);
  // Per-column side inputs are fetched once with the first tile.
  double side = 0;
  for (const auto* v : {&ins.bias, &ins.cwq})
    if (*v) side += dram_bytes(p, **v);
  double pending = side;
  for (const TraceEvent& e : trace_tiled_matmul(pm.spec, pm.plan)) {
    switch (e.kind) {
      case TraceEvent::Kind::LoadA:
      case TraceEvent::Kind::LoadB: pending += static_cast<double>(e.bytes); break;
      case TraceEvent::Kind::Compute:
      case TraceEvent::Kind::SkipCompute: {
        WorkItem w;
        w.instr = idx;
        w.phase = Phase::Linear;
        w.load_bytes = pending;
        pending = 0;
        if (e.kind == TraceEvent::Kind::Compute) {
          w.compute = matmul_block_cycles(e.a_rows, k, e.b_rows, cfg, pm.plan.axis, cores);
          w.macs = std::uint64_t{e.a_rows} * e.b_rows * k;
          if (ins.psum) w.load_bytes += static_cast<double>(storage_bytes(DType::FI32, e.a_rows, e.b_rows)) *
                                        (p.decl(ins.psum->id).residence == Residence::DRAM);
        }
        w.footprint = pm.plan.footprint_bytes;
        out.push_back(w);
        break;
      }
      case TraceEvent::Kind::StoreC: out.back().store_bytes += static_cast<double>(e.bytes); break;
    }
  }
}

inline void unplanned_matmul(const Program& p, const Instruction& ins, std::size_t idx, const SimConfig& cfg,
                             std::vector<WorkItem>& out) {
  WorkItem w;
  w.instr = idx;
  w.phase = Phase::Linear;
  for (const View* v : {&ins.in0, &ins.in1}) w.load_bytes += dram_bytes(p, *v);
  for (const auto* v : {&ins.psum, &ins.bias, &ins.cwq})
    if (*v) w.load_bytes += dram_bytes(p, **v);
  w.store_bytes = dram_bytes(p, ins.out);
  w.compute = matmul_block_cycles(ins.in0.rows, ins.in0.cols, ins.in1.rows, cfg, SplitAxis::IN0Rows, cfg.dlas_per_npu);
  w.macs = std::uint64_t{ins.in0.rows} * ins.in1.rows * ins.in0.cols;
  w.footprint = static_cast<std::size_t>(view_bytes(p, ins.in0) + view_bytes(p, ins.in1) + view_bytes(p, ins.out));
  out.push_back(w);
}

/// Vector and utility instructions, chunked by rows.
inline void vector_items(const Program& p, const Instruction& ins, std::size_t idx, const SimConfig& cfg,
                         std::vector<WorkItem>& out) {
  const bool sfu = cfg.sfu_mode && ins.offload;
  const std::size_t rows = ins.in0.rows;
  // Chunks shrink until one input row block, its row-matched second operand
  // and the output block fit in SRAM.
  double row_bytes = view_bytes(p, rows_of_view(ins.in0, 0, 1));
  if (ins.op == Opcode::TRANSPOSE) row_bytes += static_cast<double>(storage_bytes(p.decl(ins.out.id).dtype, ins.out.rows, 1));
  else row_bytes += view_bytes(p, rows_of_view(ins.out, 0, 1));
  if (!ins.in1.empty() && ins.in1.rows == rows && rows > 1) row_bytes += view_bytes(p, rows_of_view(ins.in1, 0, 1));
  const auto fit = static_cast<std::size_t>(static_cast<double>(cfg.sram_bytes) / row_bytes);
  const std::size_t chunk = std::max<std::size_t>(1, std::min(cfg.vector_chunk_rows, fit));
  for (std::size_t r0 = 0; r0 < rows; r0 += chunk) {
    const std::size_t n = std::min(chunk, rows - r0);
    const View a = rows_of_view(ins.in0, r0, n);
    const View o = ins.op == Opcode::TRANSPOSE ? View{ins.out.id, ins.out.row0, ins.out.col0 + r0, ins.out.rows, n}
                                               : rows_of_view(ins.out, r0, n);
    WorkItem w;
    w.instr = idx;
    w.phase = ins.phase();
    w.load_bytes = dram_bytes(p, a);
    if (!ins.in1.empty()) {
      const View b = ins.in1.rows == rows ? rows_of_view(ins.in1, r0, n) : ins.in1;
      if (ins.in1.rows == rows || r0 == 0) w.load_bytes += dram_bytes(p, b);
    }
    if (r0 == 0) {
      for (const auto* v : {&ins.bias, &ins.cwq})
        if (*v) w.load_bytes += dram_bytes(p, **v);
    }
    w.store_bytes = dram_bytes(p, o);
    const std::uint64_t elements = std::uint64_t{n} * a.cols;
    if (sfu) {
      w.compute = sfu_penalty(elements, cfg);
      // Operands travel to the special function unit and back through DRAM.
      w.load_bytes += view_bytes(p, o);
      w.store_bytes += view_bytes(p, a);
    } else {
      w.compute = ppa_cycles(elements);
    }
    w.footprint = static_cast<std::size_t>(view_bytes(p, a) + view_bytes(p, o));
    if (!ins.in1.empty() && ins.in1.rows == rows && rows > 1) w.footprint += static_cast<std::size_t>(view_bytes(p, rows_of_view(ins.in1, r0, n)));
    out.push_back(w);
  }
}

}  // namespace detail

/// Flattens a program into schedulable work items.
inline std::vector<WorkItem> work_items(const Program& p, const SimConfig& cfg) {
  std::vector<WorkItem> items;
  std::set<std::string> written;
  for (std::size_t idx = 0; idx < p.code.size(); ++idx) {
    const Instruction& ins = p.code[idx];
    const std::size_t first = items.size();
    switch (ins.op) {
      case Opcode::SYNC: {
        WorkItem w;
        w.instr = idx;
        w.sync_id = ins.sync_id;
        items.push_back(w);
        break;
      }
      case Opcode::FREE: break;
      case Opcode::LOAD:
      case Opcode::STORE: {
        WorkItem w;
        w.instr = idx;
        (ins.op == Opcode::LOAD ? w.load_bytes : w.store_bytes) = detail::view_bytes(p, ins.in0);
        w.footprint = static_cast<std::size_t>(detail::view_bytes(p, ins.in0));
        items.push_back(w);
        break;
      }
      case Opcode::TMATMUL:
        if (ins.plan_follower) break;
        if (ins.plan >= 0) detail::planned_items(p, ins, idx, cfg, items);
        else detail::unplanned_matmul(p, ins, idx, cfg, items);
        break;
      default: detail::vector_items(p, ins, idx, cfg, items);
    }
    for (std::size_t i = first; i < items.size(); ++i) {
      if (items[i].footprint > cfg.sram_bytes) {
        throw SramOverflowError("instruction " + std::to_string(idx) + " (" + format_instruction(p, ins) +
                                ") needs " + std::to_string(items[i].footprint) + " B of SRAM");
      }
    }
    if (first < items.size()) {
      bool dep = false;
      for (const View* v : {&ins.in0, &ins.in1})
        if (!v->empty() && written.count(v->id) && p.decl(v->id).residence == Residence::DRAM) dep = true;
      for (const auto* v : {&ins.psum, &ins.bias, &ins.cwq})
        if (*v && written.count((*v)->id) && p.decl((*v)->id).residence == Residence::DRAM) dep = true;
      items[first].barrier = dep;
    }
    if (!ins.out.empty()) written.insert(ins.out.id);
  }
  return items;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct InstrTiming {
  std::size_t index = 0;
  Opcode op = Opcode::SYNC;
  Phase phase = Phase::Data;
  std::string tag;
  double cycles = 0;
  double compute_cycles = 0;
  double dram_bytes = 0;
  std::uint64_t macs = 0;
};

struct SyncEvent {
  int npu = 0;
  int sync_id = 0;
  double arrive = 0;   // register written and broadcast
  double release = 0;  // all peers recorded >= sync_id
};

struct TimingReport {
  double total_cycles = 0;
  double compute_cycles = 0;
  double dma_cycles = 0;
  double dram_bytes = 0;
  std::uint64_t macs = 0;
  double idle_at_sync = 0;
  double mac_utilization = 0;
  double dram_utilization = 0;
  std::map<Phase, double> phase_cycles{{Phase::Linear, 0}, {Phase::Nonlinear, 0}, {Phase::Data, 0}};
  std::map<Phase, double> phase_bytes{{Phase::Linear, 0}, {Phase::Nonlinear, 0}, {Phase::Data, 0}};
  std::vector<InstrTiming> instrs;

  double share(Phase p) const { return total_cycles > 0 ? phase_cycles.at(p) / total_cycles : 0.0; }

  nlohmann::json to_json() const {
    nlohmann::json ph, pb;
    for (const auto& [p, c] : phase_cycles) ph[std::string(trigen::to_string(p))] = c;
    for (const auto& [p, b] : phase_bytes) pb[std::string(trigen::to_string(p))] = b;
    nlohmann::json ins = nlohmann::json::array();
    for (const auto& i : instrs) {
      ins.push_back({{"index", i.index},
                     {"opcode", std::string(trigen::to_string(i.op))},
                     {"phase", std::string(trigen::to_string(i.phase))},
                     {"tag", i.tag},
                     {"cycles", i.cycles},
                     {"compute_cycles", i.compute_cycles},
                     {"dram_bytes", i.dram_bytes},
                     {"macs", i.macs}});
    }
    return {{"total_cycles", total_cycles}, {"compute_cycles", compute_cycles}, {"dma_cycles", dma_cycles},
            {"dram_bytes", dram_bytes},     {"macs", macs},                     {"idle_at_sync", idle_at_sync},
            {"mac_utilization", mac_utilization}, {"dram_utilization", dram_utilization},
            {"phase_cycles", ph},           {"phase_bytes", pb},                {"instructions", ins}};
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "index,opcode,phase,tag,cycles,compute_cycles,dram_bytes,macs\n";
    for (const auto& i : instrs) {
      os << i.index << ',' << trigen::to_string(i.op) << ',' << trigen::to_string(i.phase) << ',' << i.tag << ','
         << i.cycles << ',' << i.compute_cycles << ',' << i.dram_bytes << ',' << i.macs << '\n';
    }
    return os.str();
  }
};

struct MultiReport {
  std::vector<TimingReport> npus;
  std::vector<SyncEvent> syncs;
  double total_cycles = 0;
  double dram_bytes = 0;
  double mac_utilization = 0;
  double dram_utilization = 0;
};

// ---------------------------------------------------------------------------
// Timeline
// ---------------------------------------------------------------------------

namespace detail {

/// One NPU's compute engine and DMA queue.
class NpuTimeline {
 public:
  NpuTimeline(const Program& p, std::vector<WorkItem> items, double bw) : items_(std::move(items)), bw_(bw) {
    for (std::size_t i = 0; i < p.code.size(); ++i) {
      InstrTiming t;
      t.index = i;
      t.op = p.code[i].op;
      t.phase = p.code[i].phase();
      t.tag = p.code[i].tag;
      report.instrs.push_back(t);
    }
  }

  bool done() const { return pos_ >= items_.size(); }
  double now() const { return std::max(comp_, dma_); }

  /// Runs until the next SYNC (returned) or the end (-1).
  int run_segment(double start) {
    comp_ = std::max(comp_, start);
    dma_ = std::max(dma_, start);
    last_end_ = std::max(last_end_, start);
    std::vector<std::size_t> seg;
    while (pos_ < items_.size() && items_[pos_].sync_id < 0) seg.push_back(pos_++);
    schedule(seg);
    if (pos_ < items_.size()) {
      const WorkItem& s = items_[pos_++];
      // A SYNC retires once all outstanding transfers have landed.
      const double t = now();
      charge(s.instr, t - last_end_, 0, Phase::Data);
      last_end_ = t;
      sync_instr_ = s.instr;
      return s.sync_id;
    }
    const double t = now();
    if (!seg.empty()) charge(items_[seg.back()].instr, t - last_end_, 0, Phase::Data);
    last_end_ = t;
    return -1;
  }

  void release(double t) {
    const double idle = t - now();
    if (idle > 0) {
      report.idle_at_sync += idle;
      charge(sync_instr_, idle, 0, Phase::Data);
    }
    comp_ = dma_ = last_end_ = std::max(now(), t);
  }

  TimingReport report;

 private:
  void charge(std::size_t instr, double delta, double compute, Phase ph) {
    InstrTiming& t = report.instrs[instr];
    t.cycles += delta;
    t.compute_cycles += compute;
    report.phase_cycles[ph] += compute;
    report.phase_cycles[Phase::Data] += delta - compute;
  }

  void schedule(const std::vector<std::size_t>& seg) {
    const std::size_t n = seg.size();
    if (n == 0) return;
    std::vector<double> lend(n, 0), cend(n, 0);
    double last_store = dma_;
    auto load = [&](std::size_t t) {
      const WorkItem& w = items_[seg[t]];
      double s = dma_;
      if (t >= 2) s = std::max(s, cend[t - 2]);
      if (w.barrier) s = std::max(s, last_store);
      const double d = w.load_bytes / bw_;
      lend[t] = s + d;
      dma_ = lend[t];
      report.dma_cycles += d;
    };
    load(0);
    for (std::size_t t = 0; t < n; ++t) {
      const WorkItem& w = items_[seg[t]];
      const double cs = std::max(lend[t], comp_);
      cend[t] = cs + w.compute;
      comp_ = cend[t];
      const bool next_waits = t + 1 < n && items_[seg[t + 1]].barrier;
      if (t + 1 < n && !next_waits) load(t + 1);
      if (w.store_bytes > 0) {
        const double d = w.store_bytes / bw_;
        dma_ = std::max(dma_, cend[t]) + d;
        report.dma_cycles += d;
        last_store = dma_;
      }
      if (next_waits) load(t + 1);

      InstrTiming& it = report.instrs[w.instr];
      const double bytes = w.load_bytes + w.store_bytes;
      it.dram_bytes += bytes;
      it.macs += w.macs;
      report.dram_bytes += bytes;
      report.phase_bytes[w.phase] += bytes;
      report.macs += w.macs;
      report.compute_cycles += w.compute;
      charge(w.instr, cend[t] - last_end_, w.compute, w.phase);
      last_end_ = cend[t];
    }
  }

  std::vector<WorkItem> items_;
  double bw_;
  std::size_t pos_ = 0, sync_instr_ = 0;
  double comp_ = 0, dma_ = 0, last_end_ = 0;
};

}  // namespace detail

/// Runs one program per NPU with static, even bandwidth shares. Throws
/// DeadlockError with a state dump when Sync-ID sequences cannot complete.
inline MultiReport simulate_multi(const std::vector<const Program*>& progs, SimConfig cfg) {
  cfg.n_npus = static_cast<int>(progs.size());
  cfg.validate();
  const std::size_t n = progs.size();
  std::vector<detail::NpuTimeline> tl;
  tl.reserve(n);
  for (const Program* p : progs) {
    auto items = work_items(*p, cfg);
    int last = -1;
    for (const auto& w : items) {
      if (w.sync_id < 0) continue;
      if (w.sync_id < last) throw Error("Sync-IDs must be non-decreasing within a program");
      last = w.sync_id;
    }
    tl.emplace_back(*p, std::move(items), cfg.bw_bytes_per_cycle());
  }

  MultiReport out;
  // Per NPU: register history (id, time written).
  std::vector<std::vector<std::pair<int, double>>> reg(n);
  std::vector<int> waiting(n, -1);
  std::vector<double> arrive(n, 0);
  std::vector<bool> finished(n, false);
  auto reg_at_least = [&](std::size_t q, int id) -> std::optional<double> {
    for (const auto& [v, t] : reg[q])
      if (v >= id) return t;
    return std::nullopt;
  };

  std::vector<double> resume(n, 0);
  std::vector<bool> runnable(n, true);
  while (true) {
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!runnable[i] || finished[i]) continue;
      const int id = tl[i].run_segment(resume[i]);
      runnable[i] = false;
      progressed = true;
      if (id < 0) {
        finished[i] = true;
        continue;
      }
      waiting[i] = id;
      arrive[i] = tl[i].now();
      reg[i].emplace_back(id, arrive[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (waiting[i] < 0) continue;
      double rel = arrive[i];
      bool ok = true;
      for (std::size_t q = 0; q < n && ok; ++q) {
        if (q == i) continue;
        const auto t = reg_at_least(q, waiting[i]);
        if (!t) ok = false;
        else rel = std::max(rel, *t);
      }
      if (!ok) continue;
      out.syncs.push_back({static_cast<int>(i), waiting[i], arrive[i], rel});
      tl[i].release(rel);
      resume[i] = rel;
      waiting[i] = -1;
      runnable[i] = true;
      progressed = true;
    }
    if (std::all_of(finished.begin(), finished.end(), [](bool f) { return f; })) break;
    if (!progressed) {
      std::ostringstream os;
      os << "deadlock:";
      for (std::size_t i = 0; i < n; ++i) {
        os << " npu" << i << "{reg=" << (reg[i].empty() ? -1 : reg[i].back().first) << ", "
           << (finished[i] ? "finished" : "waiting sync " + std::to_string(waiting[i])) << "}";
      }
      throw DeadlockError(os.str());
    }
  }

  const double mpc = static_cast<double>(cfg.macs_per_cycle());
  for (auto& t : tl) {
    TimingReport r = std::move(t.report);
    r.total_cycles = t.now();
    r.mac_utilization = r.total_cycles > 0 ? static_cast<double>(r.macs) / (r.total_cycles * mpc) : 0.0;
    r.dram_utilization = r.total_cycles > 0 ? r.dram_bytes / (r.total_cycles * cfg.bw_bytes_per_cycle()) : 0.0;
    out.total_cycles = std::max(out.total_cycles, r.total_cycles);
    out.dram_bytes += r.dram_bytes;
    out.npus.push_back(std::move(r));
  }
  if (out.total_cycles > 0) {
    std::uint64_t macs = 0;
    for (const auto& r : out.npus) macs += r.macs;
    out.mac_utilization = static_cast<double>(macs) / (out.total_cycles * mpc * static_cast<double>(n));
    out.dram_utilization = out.dram_bytes / (out.total_cycles * cfg.dram_gbps / cfg.clock_ghz);
  }
  return out;
}

inline TimingReport simulate_npu(const Program& p, SimConfig cfg) {
  cfg.n_npus = 1;
  return simulate_multi({&p}, cfg).npus.front();
}

/// SFU cost per element that makes the nonlinear share of `baseline` equal
/// `target`. Returns 0 when the share is already above target at zero cost.
inline double calibrate_sfu(const Program& baseline, SimConfig cfg, double target) {
  cfg.sfu_mode = true;
  auto share = [&](double a) {
    cfg.sfu_cycles_per_element = a;
    return simulate_npu(baseline, cfg).share(Phase::Nonlinear);
  };
  double lo = 0, hi = 1;
  if (share(lo) >= target) return 0;
  while (share(hi) < target) {
    hi *= 2;
    if (hi > 1e6) throw Error("calibrate_sfu: target share unreachable");
  }
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (share(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace trigen
