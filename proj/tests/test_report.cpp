// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "trigen/report.hpp"
#include "trigen/verify.hpp"

using namespace trigen;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.preset = "custom";
  s.model = {"tiny", 256, 4, 2, 64, 512, true, 1e-6};
  s.seq_len = 256;
  s.validate();
  return s;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> v;
  std::stringstream ss(line);
  std::string t;
  while (std::getline(ss, t, sep)) v.push_back(t);
  return v;
}

std::vector<std::string> lines(const std::string& text) { return split(text, '\n'); }

}  // namespace

TEST(Presets, MatchPublicModelCards) {
  struct Card {
    const char* name;
    std::size_t hidden, heads, kv, hd, ffn;
    bool gated;
  };
  const Card cards[] = {{"llama2-7b", 4096, 32, 32, 128, 11008, true},
                        {"llama3-8b", 4096, 32, 8, 128, 14336, true},
                        {"llama3.2-3b", 3072, 24, 8, 128, 8192, true},
                        {"opt-1.3b", 2048, 32, 32, 64, 8192, false},
                        {"opt-2.7b", 2560, 32, 32, 80, 10240, false}};
  EXPECT_EQ(list_presets().size(), std::size(cards));
  for (const Card& c : cards) {
    const ModelDims d = load_preset(c.name);
    EXPECT_EQ(d.name, c.name);
    EXPECT_EQ(d.hidden, c.hidden) << c.name;
    EXPECT_EQ(d.n_heads, c.heads) << c.name;
    EXPECT_EQ(d.n_kv_heads, c.kv) << c.name;
    EXPECT_EQ(d.head_dim, c.hd) << c.name;
    EXPECT_EQ(d.ffn_dim, c.ffn) << c.name;
    EXPECT_EQ(d.gated_ffn, c.gated) << c.name;
    EXPECT_EQ(d.q_width(), d.hidden) << c.name;
  }
  EXPECT_THROW(load_preset("gpt-9"), Error);
}

TEST(Spec, ConfigOverlayAndRejections) {
  ExperimentSpec s;
  s.seq_len = 1024;
  apply_json(s, nlohmann::json::parse(R"({"seq_len": 512, "sim": {"sram_bytes": 524288},
                                         "thresholds": {"mx_speedup_min": 1.2}, "npu_counts": [1, 2]})"));
  EXPECT_EQ(s.seq_len, 512u);
  EXPECT_EQ(s.sim.sram_bytes, 524288u);
  EXPECT_DOUBLE_EQ(s.thresholds.mx_speedup_min, 1.2);
  EXPECT_EQ(s.npu_counts, (std::vector<int>{1, 2}));
  EXPECT_EQ(s.preset, "llama3.2-3b");
  apply_json(s, nlohmann::json::parse(R"({"model": {"hidden": 64, "n_heads": 2, "ffn_dim": 128}})"));
  EXPECT_EQ(s.preset, "custom");
  EXPECT_EQ(s.model.head_dim, 32u);
  EXPECT_THROW(apply_json(s, nlohmann::json::parse(R"({"seqlen": 5})")), ParseError);
  EXPECT_THROW(apply_json(s, nlohmann::json::parse(R"({"sim": {"bw": 5}})")), ParseError);
  EXPECT_THROW(apply_json(s, nlohmann::json::parse(R"({"seq_len": "long"})")), ParseError);
  ExperimentSpec bad = tiny_spec();
  bad.npu_counts = {3};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Spec, JsonRoundTrip) {
  ExperimentSpec a = tiny_spec();
  a.ladder.resize(3);
  a.thresholds.lut_mse_max = 2e-3;
  ExperimentSpec b;
  apply_json(b, [&] {
    nlohmann::json j = to_json(a);
    j.erase("preset");  // "custom" is implied by "model"
    return j;
  }());
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Ablation, SingleStepIsUnitSpeedup) {
  ExperimentSpec s = tiny_spec();
  s.ladder.resize(1);
  const ReportBundle b = run_ablation(s);
  ASSERT_EQ(b.ablation.size(), 1u);
  EXPECT_EQ(b.ablation[0].speedup, 1.0);
  EXPECT_EQ(b.ablation[0].traffic_ratio, 1.0);
  EXPECT_TRUE(b.checks.empty());
}

TEST(Ablation, SfuCalibratedOnBaseline) {
  ExperimentSpec s = tiny_spec();
  const ReportBundle b = run_ablation(s);
  EXPECT_NEAR(b.ablation[0].timing.share(Phase::Nonlinear), 0.152, 1e-6);
  EXPECT_GT(b.sfu_cycles_per_element, 0.0);
  for (const auto& r : b.ablation) {
    EXPECT_DOUBLE_EQ(r.speedup, b.ablation[0].timing.total_cycles / r.timing.total_cycles);
    EXPECT_DOUBLE_EQ(r.traffic_ratio, r.timing.dram_bytes / b.ablation[0].timing.dram_bytes);
  }
  EXPECT_EQ(b.checks.size(), 4u);
  EXPECT_FALSE(b.plans.empty());
}

TEST(Ablation, MxStepFoundOnlyForSingleToggle) {
  std::vector<LadderStep> lad = default_ladder();
  EXPECT_EQ(detail::mx_step(lad), std::optional<std::size_t>(1));
  std::swap(lad[1], lad[2]);  // baseline -> +lut (with mx) is two toggles
  lad[1].options.mxint8 = true;
  lad[2].options.mxint8 = true;
  EXPECT_EQ(detail::mx_step(lad), std::nullopt);
}

TEST(Report, DeterministicAcrossRunsAndJobs) {
  ExperimentSpec s = tiny_spec();
  const ReportBundle a = run_ablation(s);
  s.jobs = 3;
  const ReportBundle b = run_ablation(s);
  EXPECT_EQ(ablation_csv(a), ablation_csv(b));
  nlohmann::json ja = to_json(a), jb = to_json(b);
  ja["spec"].erase("jobs");
  jb["spec"].erase("jobs");
  EXPECT_EQ(ja.dump(), jb.dump());
  for (std::size_t i = 0; i < a.ablation.size(); ++i)
    EXPECT_EQ(timing_csv(a.ablation[i].timing), timing_csv(b.ablation[i].timing));
  s.npu_counts = {1, 2, 4};
  EXPECT_EQ(scaling_csv(run_scaling(s)), scaling_csv(run_scaling(s)));
}

TEST(Report, CsvHeadersMatchSchema) {
  const nlohmann::json schema = read_json_file(data_dir() / "report_schema.json");
  ASSERT_EQ(schema.at("version").get<int>(), kReportSchemaVersion);
  ExperimentSpec s = tiny_spec();
  s.npu_counts = {1, 2};
  ReportBundle b = run_ablation(s);
  b.scaling = run_scaling(s).scaling;
  b.lut = run_lut_accuracy().lut;
  const std::map<std::string, std::string> tables = {{"ablation", ablation_csv(b)},
                                                     {"scaling", scaling_csv(b)},
                                                     {"lut_accuracy", lut_csv(b)},
                                                     {"checks", checks_csv(b)},
                                                     {"timing", timing_csv(b.ablation[0].timing)}};
  EXPECT_EQ(schema.at("tables").size(), tables.size());
  for (const auto& [name, text] : tables) {
    std::vector<std::string> want;
    for (const auto& c : schema.at("tables").at(name)) want.push_back(c.at("name").get<std::string>());
    const auto ls = lines(text);
    ASSERT_GE(ls.size(), 2u) << name;
    EXPECT_EQ(split(ls[0]), want) << name;
    for (std::size_t i = 1; i < ls.size(); ++i) {
      const auto f = split(ls[i]);
      EXPECT_EQ(f.front(), std::to_string(kReportSchemaVersion)) << name;
      EXPECT_EQ(f.size(), want.size()) << name << " row " << i;
    }
  }
  EXPECT_EQ(to_json(b).at("schema_version").get<int>(), kReportSchemaVersion);
}

TEST(Report, WriteBundleFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "trigen_report_test";
  std::filesystem::remove_all(dir);
  ExperimentSpec s = tiny_spec();
  s.ladder.resize(2);
  const auto files = write_bundle(run_ablation(s), dir);
  EXPECT_EQ(files.size(), 5u);  // report.json, ablation.csv, 2 timing, checks.csv
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  const nlohmann::json j = read_json_file(dir / "report.json");
  EXPECT_EQ(j.at("format"), "trigen-report");
  EXPECT_EQ(j.at("ablation").size(), 2u);
  std::filesystem::remove_all(dir);
}

TEST(Report, NumbersRoundTrip) {
  for (double v : {0.0, 1.0, 0.1, 1.0 / 3.0, 6.02e23, -2.5e-300}) EXPECT_EQ(std::stod(fmt_num(v)), v);
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("q\"x"), "\"q\"\"x\"");
}

TEST(Scaling, NormalizationAndFlags) {
  ExperimentSpec s = tiny_spec();
  s.seq_len = 512;
  s.npu_counts = {4, 1, 2};
  const ReportBundle b = run_scaling(s);
  ASSERT_EQ(b.scaling.size(), 3u);
  EXPECT_EQ(b.scaling[0].n_npus, 1);
  for (const auto& r : b.scaling) {
    EXPECT_DOUBLE_EQ(r.speedup, b.scaling[0].cycles / r.cycles);
    EXPECT_DOUBLE_EQ(r.efficiency, r.speedup / r.n_npus);
    EXPECT_EQ(r.memory_bound, r.dram_utilization > s.thresholds.memory_bound_util);
    EXPECT_GE(r.mac_utilization, 0.0);
    EXPECT_LE(r.mac_utilization, 1.0);
    EXPECT_LE(r.dram_utilization, 1.0 + 1e-12);
  }
  // No 8-NPU run, so no 8-NPU checks.
  for (const auto& c : b.checks) EXPECT_EQ(c.name.find("8 NPUs"), std::string::npos);
}

TEST(Checks, Relations) {
  EXPECT_TRUE(make_check("a", 1, 1, true).pass);
  EXPECT_FALSE(make_check("a", 1, 1, true, true).pass);
  EXPECT_TRUE(make_check("a", 1, 1, false).pass);
  EXPECT_FALSE(make_check("a", 1, 1, false, true).pass);
  ReportBundle b;
  EXPECT_TRUE(b.passed());
  b.checks.push_back(make_check("x", 2, 1, true));
  EXPECT_FALSE(b.passed());
}

TEST(Lut, AccuracyReportMatchesEngine) {
  const ReportBundle b = run_lut_accuracy();
  ASSERT_EQ(b.lut.size(), 4u);
  ASSERT_EQ(b.checks.size(), 8u);
  for (std::size_t i = 0; i < 4; ++i) {
    const LutAccuracy a = measure_accuracy(default_lut_engine(), b.lut[i].func);
    EXPECT_EQ(a.mape, b.lut[i].mape);
    EXPECT_EQ(a.mse, b.lut[i].mse);
    EXPECT_TRUE(b.checks[2 * i].pass) << b.checks[2 * i].name;
  }
}

TEST(Exec, ShadowDiffWithinTolerance) {
  GraphFile f;
  f.graph = decoder_layer({"tiny", 128, 4, 2, 32, 256, true, 1e-6}, 64);
  for (bool mx : {true, false}) {
    f.options = LoweringOptions::all();
    f.options.mxint8 = mx;
    const ExecResult r = exec_graph(f, SimConfig{});
    ASSERT_EQ(r.rel_error.size(), 1u);
    EXPECT_LT(r.rel_error.at("out"), mx ? 5e-2 : 5e-3);
    EXPECT_GT(r.timing.total_cycles, 0.0);
  }
}

TEST(Verify, SuitePassesExceptExpMse) {
  VerifyOptions vo;
  vo.cases = 40;
  const ReportBundle b = run_verify(vo);
  EXPECT_GE(b.checks.size(), 19u);
  for (const auto& c : b.checks) {
    if (c.name == "exp MSE") continue;  // absolute MSE of exp over [-8, 64] is astronomically large
    EXPECT_TRUE(c.pass) << c.name << " = " << c.value;
  }
}
