// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

// trigen: ablation, scaling, LUT accuracy, tile planning, functional runs and
// the property suite. Exit status: 0 pass, 1 threshold violation, 2 error.

#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trigen/report.hpp"
#include "trigen/verify.hpp"

using namespace trigen;

namespace {

struct CommonFlags {
  std::string preset = "llama3.2-3b";
  std::string model_file;
  std::size_t seq_len = 0;  // 0: verb default
  int dlas = 4;
  std::size_t sram = std::size_t{1} << 20;
  double dram_gbps = 32.0;
  double sfu_share = 0.152;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir;
  std::string config;
  bool json = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--preset", f.preset, "model preset (data/presets/<name>.json)");
  app->add_option("--model", f.model_file, "custom model dims JSON (overrides --preset)");
  app->add_option("--seq", f.seq_len, "sequence length");
  app->add_option("--dlas", f.dlas, "DLA cores per NPU (1, 2, 4)");
  app->add_option("--sram", f.sram, "SRAM bytes per NPU");
  app->add_option("--dram-gbps", f.dram_gbps, "total DRAM bandwidth in GB/s");
  app->add_option("--sfu-share", f.sfu_share, "baseline nonlinear share for SFU calibration (<= 0 disables)");
  app->add_option("--seed", f.seed, "seed");
  app->add_option("--jobs", f.jobs, "parallel configurations");
  app->add_option("--out", f.out_dir, "directory for report.json and CSV tables");
  app->add_option("--config", f.config, "experiment JSON; its keys override flags");
  app->add_flag("--json", f.json, "print the report JSON instead of tables");
}

ExperimentSpec spec_from(const CommonFlags& f, std::size_t default_seq) {
  ExperimentSpec s;
  s.preset = f.preset;
  s.seq_len = f.seq_len ? f.seq_len : default_seq;
  s.sim.dlas_per_npu = f.dlas;
  s.sim.sram_bytes = f.sram;
  s.sim.dram_gbps = f.dram_gbps;
  s.sfu_share = f.sfu_share;
  s.seed = f.seed;
  s.jobs = f.jobs;
  s.out_dir = f.out_dir;
  if (!f.model_file.empty()) {
    s.model = model_dims_from_json(read_json_file(f.model_file));
    s.preset = "custom";
  }
  if (!f.config.empty()) apply_json(s, read_json_file(f.config));
  s.resolve();
  return s;
}

LoweringOptions parse_toggles(const std::string& list) {
  LoweringOptions o = LoweringOptions::none();
  if (list == "none") return o;
  if (list == "all") return LoweringOptions::all();
  std::stringstream ss(list);
  std::string t;
  while (std::getline(ss, t, ',')) {
    if (t == "mxint8") o.mxint8 = true;
    else if (t == "lut") o.lut = true;
    else if (t == "qkv_batch") o.qkv_batch = true;
    else if (t == "trans_fuse") o.trans_fuse = true;
    else if (t == "mask_fuse") o.mask_fuse = true;
    else if (!t.empty()) throw ParseError("unknown toggle '" + t + "'");
  }
  return o;
}

void print_checks(const ReportBundle& b) {
  for (const auto& c : b.checks) {
    const char* rel = c.at_most ? (c.strict ? "<" : "<=") : (c.strict ? ">" : ">=");
    std::printf("%s  %-44s %12.6g %s %g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, rel, c.limit);
  }
}

int finish(const ReportBundle& b, const std::string& out_dir, bool json, const std::function<void()>& table) {
  if (json) std::cout << to_json(b).dump(2) << "\n";
  else {
    table();
    print_checks(b);
  }
  if (!out_dir.empty()) {
    for (const auto& p : write_bundle(b, out_dir))
      if (!json) std::printf("wrote %s\n", p.string().c_str());
  }
  return b.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trigen: NPU functional and performance simulator"};
  app.require_subcommand(1);

  CommonFlags abl;
  std::size_t steps = 0;
  auto* c_abl = app.add_subcommand("run-ablation", "cumulative optimization ladder on one decoder layer");
  add_common(c_abl, abl);
  c_abl->add_option("--steps", steps, "keep the first N ladder steps (0: all)");

  CommonFlags scl;
  std::vector<int> npus{1, 2, 4, 8};
  std::string scl_opts = "all";
  auto* c_scl = app.add_subcommand("run-scaling", "one decoder layer split over 1..8 NPUs");
  add_common(c_scl, scl);
  c_scl->add_option("--npus", npus, "NPU counts")->delimiter(',');
  c_scl->add_option("--options", scl_opts, "enabled toggles: all, none or a comma list");

  std::string lut_out;
  bool lut_json = false;
  auto* c_lut = app.add_subcommand("lut-accuracy", "1/1024-step sweep of the four LUT functions");
  c_lut->add_option("--out", lut_out, "output directory");
  c_lut->add_flag("--json", lut_json, "print the report JSON");

  std::string plan_spec, plan_config, in0_dt = "mxint8", in1_dt = "uint4", out_dt = "mxint8";
  std::size_t pm = 0, pn = 0, pk = 0, plan_sram = std::size_t{1} << 20, reserved = 0;
  int plan_cores = 4;
  double plan_bw = 32.0;
  std::int64_t causal = 0;
  bool use_causal = false, plan_trace = false;
  auto* c_plan = app.add_subcommand("plan", "tile plan for one matmul (IN0 m x k, IN1 n x k)");
  c_plan->add_option("--spec", plan_spec, "matmul spec JSON");
  c_plan->add_option("--m", pm, "IN0 rows");
  c_plan->add_option("--n", pn, "IN1 rows");
  c_plan->add_option("--k", pk, "reduction length");
  c_plan->add_option("--in0-dtype", in0_dt, "IN0 dtype");
  c_plan->add_option("--in1-dtype", in1_dt, "IN1 dtype");
  c_plan->add_option("--out-dtype", out_dt, "output dtype");
  c_plan->add_option("--reserved", reserved, "SRAM bytes held by other data");
  auto* o_causal = c_plan->add_option("--causal-offset", causal, "causal mask offset");
  c_plan->add_option("--cores", plan_cores, "DLA cores");
  c_plan->add_option("--sram", plan_sram, "SRAM bytes");
  c_plan->add_option("--bw", plan_bw, "DRAM bytes per cycle");
  c_plan->add_option("--config", plan_config, "planner JSON {n_cores, sram_bytes, bw_bytes_per_cycle}; overrides flags");
  c_plan->add_flag("--trace", plan_trace, "include the tile loop trace");

  CommonFlags ex;
  std::string graph_file, ex_opts = "all";
  double ex_tol = -1;
  auto* c_exec = app.add_subcommand("exec", "functional run of one layer against the f64 shadow path");
  add_common(c_exec, ex);
  c_exec->add_option("--graph", graph_file, "graph description JSON (weights from blobs or the seed)");
  c_exec->add_option("--options", ex_opts, "enabled toggles when no graph file is given");
  c_exec->add_option("--tolerance", ex_tol, "relative error limit (default from thresholds)");
  std::string asm_out;
  c_exec->add_option("--dump-asm", asm_out, "write the lowered program's assembly here");

  std::uint64_t v_seed = 1;
  int v_cases = 200;
  std::string v_out;
  bool v_json = false;
  auto* c_ver = app.add_subcommand("verify", "property suite on small shapes");
  c_ver->add_option("--seed", v_seed, "seed");
  c_ver->add_option("--cases", v_cases, "randomized cases per property");
  c_ver->add_option("--out", v_out, "output directory");
  c_ver->add_flag("--json", v_json, "print the report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  use_causal = o_causal->count() > 0;

  try {
    if (*c_abl) {
      ExperimentSpec s = spec_from(abl, 2048);
      if (steps > 0 && steps < s.ladder.size()) s.ladder.resize(steps);
      const ReportBundle b = run_ablation(s);
      return finish(b, s.out_dir, abl.json, [&] {
        std::printf("%s, seq %zu, SFU %.6g cycles/element\n", s.model.name.c_str(), s.seq_len,
                    b.sfu_cycles_per_element);
        std::printf("%-12s %14s %14s %9s %9s %8s %8s\n", "config", "cycles", "dram_bytes", "speedup", "traffic",
                    "mac", "dram");
        for (const auto& r : b.ablation)
          std::printf("%-12s %14.6g %14.6g %9.4f %9.4f %8.3f %8.3f\n", r.config.c_str(), r.timing.total_cycles,
                      r.timing.dram_bytes, r.speedup, r.traffic_ratio, r.timing.mac_utilization,
                      r.timing.dram_utilization);
      });
    }
    if (*c_scl) {
      ExperimentSpec s = spec_from(scl, 4096);
      s.npu_counts = npus;
      s.scaling_options = parse_toggles(scl_opts);
      if (!scl.config.empty()) apply_json(s, read_json_file(scl.config));
      s.validate();
      const ReportBundle b = run_scaling(s);
      return finish(b, s.out_dir, scl.json, [&] {
        std::printf("%s, seq %zu\n", s.model.name.c_str(), s.seq_len);
        std::printf("%5s %14s %9s %10s %8s %8s %8s\n", "npus", "cycles", "speedup", "efficiency", "mac", "dram",
                    "bound");
        for (const auto& r : b.scaling)
          std::printf("%5d %14.6g %9.4f %10.4f %8.3f %8.3f %8s\n", r.n_npus, r.cycles, r.speedup, r.efficiency,
                      r.mac_utilization, r.dram_utilization, r.memory_bound ? "memory" : "compute");
      });
    }
    if (*c_lut) {
      const ReportBundle b = run_lut_accuracy();
      return finish(b, lut_out, lut_json, [&] {
        std::printf("%-6s %8s %12s %12s\n", "func", "samples", "mape", "mse");
        for (const auto& r : b.lut)
          std::printf("%-6s %8zu %12.4e %12.4e\n", std::string(to_string(r.func)).c_str(), r.samples, r.mape, r.mse);
      });
    }
    if (*c_plan) {
      MatmulSpec s;
      if (!plan_spec.empty()) s = matmul_spec_from_json(read_json_file(plan_spec));
      else {
        if (!pm || !pn || !pk) throw Error("plan: give --spec or all of --m, --n, --k");
        s.name = "matmul";
        s.a = {pm, pk, dtype_from_string(in0_dt), false};
        s.b = {pn, pk, dtype_from_string(in1_dt), false};
        s.c_dtype = dtype_from_string(out_dt);
        s.reserved_bytes = reserved;
        if (use_causal) s.mask = CausalMask{causal};
        s.validate();
      }
      PlannerConfig pc{plan_cores, plan_sram, plan_bw};
      if (!plan_config.empty()) {
        const auto j = read_json_file(plan_config);
        pc.n_cores = j.value("n_cores", pc.n_cores);
        pc.sram_bytes = j.value("sram_bytes", pc.sram_bytes);
        pc.bw_bytes_per_cycle = j.value("bw_bytes_per_cycle", pc.bw_bytes_per_cycle);
      }
      const TilePlan p = select_plan(s, pc);
      nlohmann::json j = to_json(p, s);
      const TransferEstimate te = estimate_transfer(s, p);
      j["eq1_bytes"] = te.reads();
      if (plan_trace) {
        nlohmann::json tr = nlohmann::json::array();
        const char* names[] = {"load_a", "load_b", "compute", "skip_compute", "store_c"};
        for (const auto& e : trace_tiled_matmul(s, p))
          tr.push_back({{"kind", names[static_cast<int>(e.kind)]},
                        {"a_rows", {e.a_row0, e.a_row0 + e.a_rows}},
                        {"b_rows", {e.b_row0, e.b_row0 + e.b_rows}},
                        {"bytes", e.bytes}});
        j["trace"] = tr;
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (*c_exec) {
      ExperimentSpec s = spec_from(ex, 128);
      GraphFile f;
      std::string base = ".";
      if (!graph_file.empty()) {
        f = graph_file_from_json(read_json_file(graph_file));
        base = std::filesystem::path(graph_file).parent_path().string();
        if (base.empty()) base = ".";
      } else {
        f.graph = decoder_layer(s.model, s.seq_len);
        f.options = parse_toggles(ex_opts);
        f.seed = s.seed;
      }
      const ExecResult r = exec_graph(f, s.sim, base);
      if (!asm_out.empty()) write_text(asm_out, write_assembly(r.layer.program));
      ReportBundle b;
      b.kind = "exec";
      b.spec = to_json(f);
      const double tol = ex_tol >= 0 ? ex_tol : s.thresholds.exec_rel_max;
      for (const auto& [id, e] : r.rel_error) b.checks.push_back(make_check(id + " relative error vs shadow", e, tol, true));
      return finish(b, s.out_dir, ex.json, [&] {
        std::printf("%s, seq %zu, %zu instructions\n", f.graph.dims.name.c_str(), f.graph.seq_len,
                    r.layer.program.code.size());
        std::printf("cycles %.6g, dram bytes %.6g, mac %.3f, dram %.3f\n", r.timing.total_cycles, r.timing.dram_bytes,
                    r.timing.mac_utilization, r.timing.dram_utilization);
      });
    }
    if (*c_ver) {
      VerifyOptions vo;
      vo.seed = v_seed;
      vo.cases = v_cases;
      const ReportBundle b = run_verify(vo);
      return finish(b, v_out, v_json, [] {});
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
