// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Experiment specs, model presets, ablation / scaling / LUT sweeps and report
// emission. Every table row carries the schema version of data/report_schema.json.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trigen/error.hpp"
#include "trigen/executor.hpp"
#include "trigen/graph_lower.hpp"
#include "trigen/lut_engine.hpp"
#include "trigen/perf_model.hpp"

#ifndef TRIGEN_DATA_DIR
#define TRIGEN_DATA_DIR "data"
#endif

namespace trigen {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// $TRIGEN_DATA_DIR if set, else the data directory of the source tree.
inline std::filesystem::path data_dir() {
  if (const char* e = std::getenv("TRIGEN_DATA_DIR"); e && *e) return e;
  return TRIGEN_DATA_DIR;
}

inline std::vector<std::string> list_presets(const std::filesystem::path& dir = data_dir() / "presets") {
  std::vector<std::string> v;
  if (!std::filesystem::is_directory(dir)) return v;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") v.push_back(e.path().stem().string());
  std::sort(v.begin(), v.end());
  return v;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline ModelDims load_preset(const std::string& name, const std::filesystem::path& dir = data_dir() / "presets") {
  const auto path = dir / (name + ".json");
  if (!std::filesystem::exists(path)) throw Error("unknown model preset '" + name + "'");
  return model_dims_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Experiment spec
// ---------------------------------------------------------------------------

struct LadderStep {
  std::string name;
  LoweringOptions options;
};

/// Cumulative ladder: baseline, then one optimization added per step.
inline std::vector<LadderStep> default_ladder() {
  std::vector<LadderStep> v;
  LoweringOptions o = LoweringOptions::none();
  v.push_back({"baseline", o});
  o.mxint8 = true;
  v.push_back({"+mxint8", o});
  o.lut = true;
  v.push_back({"+lut", o});
  o.qkv_batch = true;
  v.push_back({"+qkv_opt", o});
  o.trans_fuse = true;
  v.push_back({"+trans_opt", o});
  o.mask_fuse = true;
  v.push_back({"+mask_opt", o});
  return v;
}

struct Thresholds {
  double mx_traffic_ratio_min = 1.9;    // INT16 / MXINT8 activation traffic
  double ladder_reduction_min = 0.45;   // 1 - last / first traffic
  double mx_speedup_min = 1.4;
  double efficiency_min = 0.8;          // parallel efficiency through 4 NPUs
  double memory_bound_util = 0.9;       // DRAM utilization marking a memory-bound run
  double lut_mape_max = 1e-4;
  double lut_mse_max = 1e-3;
  double exec_rel_max = 5e-2;           // quantized vs shadow relative error
};

struct ExperimentSpec {
  std::string preset = "llama3.2-3b";
  ModelDims model;  // resolved from preset unless custom
  std::size_t seq_len = 2048;
  SimConfig sim;
  std::vector<LadderStep> ladder = default_ladder();
  std::vector<int> npu_counts{1, 2, 4, 8};
  LoweringOptions scaling_options = LoweringOptions::all();
  double sfu_share = 0.152;  // baseline nonlinear share; <= 0 keeps sim.sfu_cycles_per_element
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir;  // empty: nothing written
  Thresholds thresholds;

  void resolve() {
    if (preset != "custom") model = load_preset(preset);
    validate();
  }

  void validate() const {
    model.validate();
    sim.validate();
    if (seq_len == 0) throw Error("seq_len must be positive");
    if (ladder.empty()) throw Error("ladder must not be empty");
    for (int n : npu_counts)
      if (n != 1 && n != 2 && n != 4 && n != 8) throw Error("npu counts must be 1, 2, 4 or 8");
    if (sim.dlas_per_npu != 1 && sim.dlas_per_npu != 2 && sim.dlas_per_npu != 4)
      throw Error("dlas_per_npu must be 1, 2 or 4");
    if (jobs < 1) throw Error("jobs must be positive");
  }
};

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json lad = nlohmann::json::array();
  for (const auto& st : s.ladder) lad.push_back({{"name", st.name}, {"options", to_json(st.options)}});
  const Thresholds& t = s.thresholds;
  return {{"preset", s.preset},
          {"model", to_json(s.model)},
          {"seq_len", s.seq_len},
          {"sim",
           {{"dlas_per_npu", s.sim.dlas_per_npu},
            {"clock_ghz", s.sim.clock_ghz},
            {"dram_gbps", s.sim.dram_gbps},
            {"sram_bytes", s.sim.sram_bytes},
            {"prefetch_cycles", s.sim.prefetch_cycles},
            {"sfu_cycles_per_element", s.sim.sfu_cycles_per_element}}},
          {"ladder", lad},
          {"npu_counts", s.npu_counts},
          {"scaling_options", to_json(s.scaling_options)},
          {"sfu_share", s.sfu_share},
          {"seed", s.seed},
          {"thresholds",
           {{"mx_traffic_ratio_min", t.mx_traffic_ratio_min},
            {"ladder_reduction_min", t.ladder_reduction_min},
            {"mx_speedup_min", t.mx_speedup_min},
            {"efficiency_min", t.efficiency_min},
            {"memory_bound_util", t.memory_bound_util},
            {"lut_mape_max", t.lut_mape_max},
            {"lut_mse_max", t.lut_mse_max},
            {"exec_rel_max", t.exec_rel_max}}}};
}

/// Overlays the keys present in `j` onto `s`. Unknown keys are errors.
inline void apply_json(ExperimentSpec& s, const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("experiment config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "preset") s.preset = v.get<std::string>();
      else if (k == "model") {
        s.model = model_dims_from_json(v);
        s.preset = "custom";
      } else if (k == "seq_len") s.seq_len = v.get<std::size_t>();
      else if (k == "sim") {
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "dlas_per_npu") s.sim.dlas_per_npu = sv.get<int>();
          else if (sk == "clock_ghz") s.sim.clock_ghz = sv.get<double>();
          else if (sk == "dram_gbps") s.sim.dram_gbps = sv.get<double>();
          else if (sk == "sram_bytes") s.sim.sram_bytes = sv.get<std::size_t>();
          else if (sk == "prefetch_cycles") s.sim.prefetch_cycles = sv.get<double>();
          else if (sk == "sfu_cycles_per_element") s.sim.sfu_cycles_per_element = sv.get<double>();
          else throw ParseError("unknown sim key '" + sk + "'");
        }
      } else if (k == "ladder") {
        s.ladder.clear();
        for (const auto& st : v)
          s.ladder.push_back({st.at("name").get<std::string>(), lowering_options_from_json(st.at("options"))});
      } else if (k == "npu_counts") s.npu_counts = v.get<std::vector<int>>();
      else if (k == "scaling_options") s.scaling_options = lowering_options_from_json(v);
      else if (k == "sfu_share") s.sfu_share = v.get<double>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "jobs") s.jobs = v.get<int>();
      else if (k == "out_dir") s.out_dir = v.get<std::string>();
      else if (k == "thresholds") {
        Thresholds& t = s.thresholds;
        for (const auto& [tk, tv] : v.items()) {
          const double x = tv.get<double>();
          if (tk == "mx_traffic_ratio_min") t.mx_traffic_ratio_min = x;
          else if (tk == "ladder_reduction_min") t.ladder_reduction_min = x;
          else if (tk == "mx_speedup_min") t.mx_speedup_min = x;
          else if (tk == "efficiency_min") t.efficiency_min = x;
          else if (tk == "memory_bound_util") t.memory_bound_util = x;
          else if (tk == "lut_mape_max") t.lut_mape_max = x;
          else if (tk == "lut_mse_max") t.lut_mse_max = x;
          else if (tk == "exec_rel_max") t.exec_rel_max = x;
          else throw ParseError("unknown threshold '" + tk + "'");
        }
      } else throw ParseError("unknown experiment key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  double value = 0;
  double limit = 0;
  bool at_most = false;  // value must be <= limit (otherwise >=, or > when strict)
  bool strict = false;
  bool pass = false;
};

inline Check make_check(std::string name, double value, double limit, bool at_most, bool strict = false) {
  Check c{std::move(name), value, limit, at_most, strict, false};
  if (at_most) c.pass = strict ? value < limit : value <= limit;
  else c.pass = strict ? value > limit : value >= limit;
  return c;
}

struct AblationRow {
  std::string config;
  LoweringOptions options;
  TimingReport timing;
  std::size_t skipped_blocks = 0;
  double speedup = 1;
  double traffic_ratio = 1;
};

struct ScalingRow {
  int n_npus = 1;
  double cycles = 0;
  double dram_bytes = 0;
  double speedup = 1;
  double efficiency = 1;
  double mac_utilization = 0;
  double dram_utilization = 0;
  double idle_at_sync = 0;
  bool memory_bound = false;
};

struct ReportBundle {
  std::string kind;
  nlohmann::json spec;
  double sfu_cycles_per_element = 0;
  std::vector<AblationRow> ablation;
  std::vector<ScalingRow> scaling;
  std::vector<LutAccuracy> lut;
  std::vector<nlohmann::json> plans;
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal; identical across runs.
inline std::string fmt_num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

inline std::string ablation_csv(const ReportBundle& b) {
  std::ostringstream os;
  os << "schema_version,config,mxint8,lut,qkv_batch,trans_fuse,mask_fuse,cycles,dram_bytes,speedup,traffic_ratio,"
        "linear_share,nonlinear_share,data_share,mac_utilization,dram_utilization,skipped_blocks\n";
  for (const auto& r : b.ablation) {
    const LoweringOptions& o = r.options;
    os << kReportSchemaVersion << ',' << csv_field(r.config) << ',' << o.mxint8 << ',' << o.lut << ',' << o.qkv_batch
       << ',' << o.trans_fuse << ',' << o.mask_fuse << ',' << fmt_num(r.timing.total_cycles) << ','
       << fmt_num(r.timing.dram_bytes) << ',' << fmt_num(r.speedup) << ',' << fmt_num(r.traffic_ratio) << ','
       << fmt_num(r.timing.share(Phase::Linear)) << ',' << fmt_num(r.timing.share(Phase::Nonlinear)) << ','
       << fmt_num(r.timing.share(Phase::Data)) << ',' << fmt_num(r.timing.mac_utilization) << ','
       << fmt_num(r.timing.dram_utilization) << ',' << r.skipped_blocks << '\n';
  }
  return os.str();
}

inline std::string scaling_csv(const ReportBundle& b) {
  std::ostringstream os;
  os << "schema_version,n_npus,cycles,dram_bytes,speedup,efficiency,mac_utilization,dram_utilization,idle_at_sync,"
        "bound\n";
  for (const auto& r : b.scaling) {
    os << kReportSchemaVersion << ',' << r.n_npus << ',' << fmt_num(r.cycles) << ',' << fmt_num(r.dram_bytes) << ','
       << fmt_num(r.speedup) << ',' << fmt_num(r.efficiency) << ',' << fmt_num(r.mac_utilization) << ','
       << fmt_num(r.dram_utilization) << ',' << fmt_num(r.idle_at_sync) << ','
       << (r.memory_bound ? "memory" : "compute") << '\n';
  }
  return os.str();
}

inline std::string lut_csv(const ReportBundle& b) {
  std::ostringstream os;
  os << "schema_version,function,samples,mape,mse\n";
  for (const auto& r : b.lut) {
    os << kReportSchemaVersion << ',' << to_string(r.func) << ',' << r.samples << ',' << fmt_num(r.mape) << ','
       << fmt_num(r.mse) << '\n';
  }
  return os.str();
}

inline std::string checks_csv(const ReportBundle& b) {
  std::ostringstream os;
  os << "schema_version,check,value,relation,limit,pass\n";
  for (const auto& c : b.checks) {
    const char* rel = c.at_most ? (c.strict ? "<" : "<=") : (c.strict ? ">" : ">=");
    os << kReportSchemaVersion << ',' << csv_field(c.name) << ',' << fmt_num(c.value) << ',' << rel << ','
       << fmt_num(c.limit) << ',' << (c.pass ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Per-instruction timing of one configuration.
inline std::string timing_csv(const TimingReport& r) {
  std::ostringstream os;
  os << "schema_version,index,opcode,phase,tag,cycles,compute_cycles,dram_bytes,macs\n";
  for (const auto& i : r.instrs) {
    os << kReportSchemaVersion << ',' << i.index << ',' << to_string(i.op) << ',' << to_string(i.phase) << ','
       << csv_field(i.tag) << ',' << fmt_num(i.cycles) << ',' << fmt_num(i.compute_cycles) << ','
       << fmt_num(i.dram_bytes) << ',' << i.macs << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const TimingReport& r) {
  nlohmann::json ph, pb;
  for (const auto& [p, c] : r.phase_cycles) ph[std::string(to_string(p))] = c;
  for (const auto& [p, c] : r.phase_bytes) pb[std::string(to_string(p))] = c;
  return {{"total_cycles", r.total_cycles},       {"compute_cycles", r.compute_cycles},
          {"dma_cycles", r.dma_cycles},           {"dram_bytes", r.dram_bytes},
          {"macs", r.macs},                       {"mac_utilization", r.mac_utilization},
          {"dram_utilization", r.dram_utilization}, {"phase_cycles", ph},
          {"phase_bytes", pb},                    {"instructions", r.instrs.size()}};
}

inline nlohmann::json to_json(const ReportBundle& b) {
  nlohmann::json j = {{"format", "trigen-report"},
                      {"schema_version", kReportSchemaVersion},
                      {"kind", b.kind},
                      {"spec", b.spec},
                      {"passed", b.passed()}};
  if (!b.ablation.empty()) {
    j["sfu_cycles_per_element"] = b.sfu_cycles_per_element;
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : b.ablation) {
      a.push_back({{"config", r.config},
                   {"options", to_json(r.options)},
                   {"speedup", r.speedup},
                   {"traffic_ratio", r.traffic_ratio},
                   {"skipped_blocks", r.skipped_blocks},
                   {"timing", summary_json(r.timing)}});
    }
    j["ablation"] = a;
  }
  if (!b.scaling.empty()) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& r : b.scaling) {
      s.push_back({{"n_npus", r.n_npus},
                   {"cycles", r.cycles},
                   {"dram_bytes", r.dram_bytes},
                   {"speedup", r.speedup},
                   {"efficiency", r.efficiency},
                   {"mac_utilization", r.mac_utilization},
                   {"dram_utilization", r.dram_utilization},
                   {"idle_at_sync", r.idle_at_sync},
                   {"bound", r.memory_bound ? "memory" : "compute"}});
    }
    j["scaling"] = s;
    const auto it = std::find_if(b.scaling.begin(), b.scaling.end(), [](const ScalingRow& r) { return r.memory_bound; });
    j["memory_bound_from"] = it == b.scaling.end() ? nlohmann::json(nullptr) : nlohmann::json(it->n_npus);
  }
  if (!b.lut.empty()) {
    nlohmann::json l = nlohmann::json::array();
    for (const auto& r : b.lut)
      l.push_back({{"function", std::string(to_string(r.func))}, {"samples", r.samples}, {"mape", r.mape}, {"mse", r.mse}});
    j["lut_accuracy"] = l;
  }
  if (!b.plans.empty()) j["plans"] = b.plans;
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : b.checks)
    c.push_back({{"check", x.name},
                 {"value", x.value},
                 {"relation", x.at_most ? (x.strict ? "<" : "<=") : (x.strict ? ">" : ">=")},
                 {"limit", x.limit},
                 {"pass", x.pass}});
  j["checks"] = c;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << s;
}

/// report.json plus one CSV per non-empty table, and per-config timing CSVs.
inline std::vector<std::filesystem::path> write_bundle(const ReportBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto put = [&](const std::string& name, const std::string& text) {
    files.push_back(dir / name);
    write_text(files.back(), text);
  };
  put("report.json", to_json(b).dump(2) + "\n");
  if (!b.ablation.empty()) {
    put("ablation.csv", ablation_csv(b));
    for (std::size_t i = 0; i < b.ablation.size(); ++i)
      put("timing_" + std::to_string(i) + ".csv", timing_csv(b.ablation[i].timing));
  }
  if (!b.scaling.empty()) put("scaling.csv", scaling_csv(b));
  if (!b.lut.empty()) put("lut_accuracy.csv", lut_csv(b));
  put("checks.csv", checks_csv(b));
  return files;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace detail {

/// Evaluates f(0..n-1) on up to `jobs` threads; results keep index order.
template <class F>
auto parallel_map(std::size_t n, int jobs, F f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<R> out;
  out.reserve(n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(f(i));
    return out;
  }
  for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<R>> fs;
    for (std::size_t i = base; i < std::min(n, base + static_cast<std::size_t>(jobs)); ++i)
      fs.push_back(std::async(std::launch::async, f, i));
    for (auto& x : fs) out.push_back(x.get());
  }
  return out;
}

/// Index of the first ladder step that differs from its predecessor only in mxint8.
inline std::optional<std::size_t> mx_step(const std::vector<LadderStep>& lad) {
  for (std::size_t i = 1; i < lad.size(); ++i) {
    LoweringOptions a = lad[i - 1].options, b = lad[i].options;
    if (a.mxint8 || !b.mxint8) continue;
    a.mxint8 = true;
    if (a == b) return i;
  }
  return std::nullopt;
}

}  // namespace detail

/// Cumulative ladder on one layer. The SFU cost is calibrated on the first step
/// so that its nonlinear share equals spec.sfu_share.
inline ReportBundle run_ablation(const ExperimentSpec& spec) {
  spec.validate();
  ReportBundle b;
  b.kind = "ablation";
  b.spec = to_json(spec);
  const LayerGraph g = decoder_layer(spec.model, spec.seq_len);
  SimConfig cfg = spec.sim;
  cfg.n_npus = 1;
  if (spec.sfu_share > 0) {
    const LoweringOptions& o0 = spec.ladder.front().options;
    const LoweredLayer base = lower_layer(g, o0, cfg);
    cfg.sfu_cycles_per_element = o0.lut ? 0.0 : calibrate_sfu(base.program, cfg, spec.sfu_share);
  }
  b.sfu_cycles_per_element = cfg.sfu_cycles_per_element;

  struct StepResult {
    AblationRow row;
    std::vector<nlohmann::json> plans;
  };
  auto results = detail::parallel_map(spec.ladder.size(), spec.jobs, [&](std::size_t i) {
    const LadderStep& st = spec.ladder[i];
    const LoweredLayer l = lower_layer(g, st.options, cfg);
    StepResult r;
    r.row.config = st.name;
    r.row.options = st.options;
    r.row.timing = simulate_npu(l.program, sim_config_for(st.options, cfg));
    r.row.skipped_blocks = l.skipped_blocks;
    if (i + 1 == spec.ladder.size()) {
      for (std::size_t k = 0; k < l.program.code.size(); ++k) {
        const Instruction& ins = l.program.code[k];
        if (ins.plan < 0 || ins.plan_follower) continue;
        const PlannedMatmul& pm = l.program.plans[static_cast<std::size_t>(ins.plan)];
        nlohmann::json pj = to_json(pm.plan, pm.spec);
        pj["instruction"] = k;
        pj["tag"] = ins.tag;
        r.plans.push_back(std::move(pj));
      }
    }
    return r;
  });

  const double c0 = results.front().row.timing.total_cycles, b0 = results.front().row.timing.dram_bytes;
  for (auto& r : results) {
    r.row.speedup = r.row.timing.total_cycles > 0 ? c0 / r.row.timing.total_cycles : 0.0;
    r.row.traffic_ratio = b0 > 0 ? r.row.timing.dram_bytes / b0 : 0.0;
    b.ablation.push_back(std::move(r.row));
  }
  b.plans = std::move(results.back().plans);

  const Thresholds& t = spec.thresholds;
  bool mono = true;
  double worst = 0;
  for (std::size_t i = 1; i < b.ablation.size(); ++i) {
    const double d = b.ablation[i].timing.total_cycles / b.ablation[i - 1].timing.total_cycles;
    worst = std::max(worst, d);
    mono = mono && d <= 1.0;
  }
  if (b.ablation.size() > 1) {
    b.checks.push_back(make_check("ladder latency step ratio (max)", worst, 1.0, true));
    b.checks.push_back(make_check("ladder traffic reduction", 1.0 - b.ablation.back().traffic_ratio,
                                  t.ladder_reduction_min, false));
  }
  if (const auto m = detail::mx_step(spec.ladder)) {
    const auto& lo = b.ablation[*m - 1].timing;
    const auto& hi = b.ablation[*m].timing;
    b.checks.push_back(make_check("int16 / mxint8 traffic", lo.dram_bytes / hi.dram_bytes, t.mx_traffic_ratio_min, false));
    b.checks.push_back(make_check("mxint8 speedup", lo.total_cycles / hi.total_cycles, t.mx_speedup_min, false));
  }
  return b;
}

/// One layer split over each NPU count with shared DRAM bandwidth.
inline ReportBundle run_scaling(const ExperimentSpec& spec) {
  spec.validate();
  ReportBundle b;
  b.kind = "scaling";
  b.spec = to_json(spec);
  const LayerGraph g = decoder_layer(spec.model, spec.seq_len);
  std::vector<int> counts = spec.npu_counts;
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  auto rows = detail::parallel_map(counts.size(), spec.jobs, [&](std::size_t i) {
    SimConfig c = sim_config_for(spec.scaling_options, spec.sim);
    c.n_npus = counts[i];
    const auto parts = lower_layer_multi(g, spec.scaling_options, c);
    std::vector<const Program*> ps;
    for (const auto& p : parts) ps.push_back(&p.program);
    const MultiReport m = simulate_multi(ps, c);
    ScalingRow r;
    r.n_npus = counts[i];
    r.cycles = m.total_cycles;
    r.dram_bytes = m.dram_bytes;
    r.mac_utilization = m.mac_utilization;
    r.dram_utilization = m.dram_utilization;
    for (const auto& n : m.npus) r.idle_at_sync += n.idle_at_sync;
    r.memory_bound = m.dram_utilization > spec.thresholds.memory_bound_util;
    return r;
  });
  // Relative to the smallest NPU count.
  const double c0 = rows.front().cycles, n0 = rows.front().n_npus;
  for (auto& r : rows) {
    r.speedup = c0 / r.cycles;
    r.efficiency = r.speedup * n0 / r.n_npus;
  }
  b.scaling = rows;

  const Thresholds& t = spec.thresholds;
  auto find = [&](int n) -> const ScalingRow* {
    for (const auto& r : b.scaling)
      if (r.n_npus == n) return &r;
    return nullptr;
  };
  double step = 0;
  for (std::size_t i = 1; i < b.scaling.size() && b.scaling[i].n_npus <= 4; ++i)
    step = std::max(step, b.scaling[i].cycles / b.scaling[i - 1].cycles);
  if (b.scaling.size() > 1 && b.scaling[1].n_npus <= 4)
    b.checks.push_back(make_check("latency step ratio through 4 NPUs (max)", step, 1.0, true));
  if (find(1) && find(4))
    b.checks.push_back(make_check("parallel efficiency at 4 NPUs", find(4)->efficiency, t.efficiency_min, false));
  if (const auto* r8 = find(8)) {
    b.checks.push_back(make_check("DRAM utilization at 8 NPUs", r8->dram_utilization, t.memory_bound_util, false, true));
    const auto *r2 = find(2), *r4 = find(4);
    if (r2 && r4) {
      b.checks.push_back(make_check("8/4 speedup minus 4/2 speedup", r4->cycles / r8->cycles - r2->cycles / r4->cycles,
                                    0.0, true, true));
    }
  }
  return b;
}

/// The 1/1024-step sweep of all four LUT functions.
inline ReportBundle run_lut_accuracy(const Thresholds& t = {}, const LutEngine& engine = default_lut_engine()) {
  ReportBundle b;
  b.kind = "lut-accuracy";
  b.spec = {{"step", 1.0 / 1024.0}};
  for (LutFunc f : {LutFunc::RECIP, LutFunc::ISQR, LutFunc::EXP, LutFunc::SILU}) {
    b.lut.push_back(measure_accuracy(engine, f));
    const std::string n(to_string(f));
    b.checks.push_back(make_check(n + " MAPE", b.lut.back().mape, t.lut_mape_max, true));
    b.checks.push_back(make_check(n + " MSE", b.lut.back().mse, t.lut_mse_max, true));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Functional run with the shadow oracle
// ---------------------------------------------------------------------------

struct ExecResult {
  LoweredLayer layer;
  TimingReport timing;
  std::map<std::string, double> rel_error;  // quantized vs shadow, per tensor
};

inline double rel_l2(const RealTensor& got, const RealTensor& ref) {
  if (got.rows != ref.rows || got.cols != ref.cols) throw ShapeError("rel_l2: shape mismatch");
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    const long double d = static_cast<long double>(got.data[i]) - ref.data[i];
    num += d * d;
    den += static_cast<long double>(ref.data[i]) * ref.data[i];
  }
  if (den == 0) return num == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return static_cast<double>(std::sqrt(num / den));
}

/// Lowers `f`, runs it quantized and on the f64 shadow path, and times it.
inline ExecResult exec_graph(const GraphFile& f, const SimConfig& sim, const std::string& base_dir = ".") {
  SimConfig cfg = sim;
  cfg.n_npus = 1;
  ExecResult r;
  r.layer = lower_layer(f.graph, f.options, cfg);
  const TensorMap in = load_layer_inputs(f, base_dir);
  Executor q(r.layer.program, {.enforce_sram = false});
  bind_layer(q, r.layer, in);
  q.run();
  ShadowExecutor s(r.layer.program);
  bind_layer(s, r.layer, in);
  s.run();
  r.rel_error[r.layer.output] = rel_l2(to_real(q.value(r.layer.output)), s.value(r.layer.output));
  r.timing = simulate_npu(r.layer.program, sim_config_for(f.options, cfg));
  return r;
}

}  // namespace trigen
