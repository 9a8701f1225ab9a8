// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Decoder-layer graphs and their lowering to programs.
//
// A layer is RMSNorm, Q/K/V projections, causal attention, output projection,
// residual add, RMSNorm and a (gated) FFN with a second residual add. Every
// optimization pass is an independent toggle in LoweringOptions. With several
// NPUs the sequence is split into row ranges and each NPU gets its own program.

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "trigen/dataflow_opt.hpp"
#include "trigen/error.hpp"
#include "trigen/executor.hpp"
#include "trigen/isa.hpp"
#include "trigen/lut_engine.hpp"
#include "trigen/mx_numerics.hpp"
#include "trigen/perf_model.hpp"

namespace trigen {

// ---------------------------------------------------------------------------
// Model dimensions and layer graphs
// ---------------------------------------------------------------------------

struct ModelDims {
  std::string name = "custom";
  std::size_t hidden = 0;
  std::size_t n_heads = 0;
  std::size_t n_kv_heads = 0;
  std::size_t head_dim = 0;
  std::size_t ffn_dim = 0;
  bool gated_ffn = true;  // SiLU(gate) * up; otherwise SiLU(up)
  double rms_eps = 1e-6;

  std::size_t q_width() const { return n_heads * head_dim; }
  std::size_t kv_width() const { return n_kv_heads * head_dim; }
  std::size_t group() const { return n_heads / n_kv_heads; }

  void validate() const {
    if (hidden == 0 || n_heads == 0 || n_kv_heads == 0 || head_dim == 0 || ffn_dim == 0)
      throw ShapeError("model '" + name + "': all dimensions must be positive");
    if (n_heads % n_kv_heads != 0) throw ShapeError("model '" + name + "': heads not a multiple of KV heads");
    if (!(rms_eps > 0)) throw ShapeError("model '" + name + "': rms_eps must be positive");
  }
};

inline nlohmann::json to_json(const ModelDims& d) {
  return {{"name", d.name},         {"hidden", d.hidden},       {"n_heads", d.n_heads},
          {"n_kv_heads", d.n_kv_heads}, {"head_dim", d.head_dim}, {"ffn_dim", d.ffn_dim},
          {"gated_ffn", d.gated_ffn}, {"rms_eps", d.rms_eps}};
}

inline ModelDims model_dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.name = j.value("name", std::string("custom"));
  d.hidden = j.at("hidden").get<std::size_t>();
  d.n_heads = j.at("n_heads").get<std::size_t>();
  d.n_kv_heads = j.value("n_kv_heads", d.n_heads);
  d.head_dim = j.value("head_dim", d.n_heads ? d.hidden / d.n_heads : 0);
  d.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  d.gated_ffn = j.value("gated_ffn", true);
  d.rms_eps = j.value("rms_eps", 1e-6);
  d.validate();
  return d;
}

enum class NodeKind { RMSNorm, Linear, SDPA, SiLU, Mul, Add };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::RMSNorm: return "rmsnorm";
    case NodeKind::Linear: return "linear";
    case NodeKind::SDPA: return "sdpa";
    case NodeKind::SiLU: return "silu";
    case NodeKind::Mul: return "mul";
    case NodeKind::Add: return "add";
  }
  return "?";
}

inline NodeKind node_kind_from_string(std::string_view s) {
  for (NodeKind k : {NodeKind::RMSNorm, NodeKind::Linear, NodeKind::SDPA, NodeKind::SiLU, NodeKind::Mul, NodeKind::Add})
    if (to_string(k) == s) return k;
  throw ParseError("unknown node kind '" + std::string(s) + "'");
}

struct GraphNode {
  NodeKind kind = NodeKind::Add;
  std::string name;
  std::vector<std::string> inputs;
  std::string output;
  std::string weight;  // Linear: W_INT (out x in, UINT4); RMSNorm: gain
  std::string scale;   // Linear: S_W (1 x out, FI32)
};

struct LayerGraph {
  ModelDims dims;
  std::size_t seq_len = 0;
  std::vector<GraphNode> nodes;
  std::string input = "x";
  std::string output = "out";

  /// Shapes of every weight, scale and gain.
  std::map<std::string, std::pair<std::size_t, std::size_t>> parameters() const {
    std::map<std::string, std::pair<std::size_t, std::size_t>> m;
    const std::size_t H = dims.hidden, F = dims.ffn_dim;
    auto lin = [&](const std::string& w, std::size_t out, std::size_t in) {
      m[w] = {out, in};
      m["s" + w.substr(1)] = {1, out};
    };
    lin("wq", dims.q_width(), H);
    lin("wk", dims.kv_width(), H);
    lin("wv", dims.kv_width(), H);
    lin("wo", H, dims.q_width());
    if (dims.gated_ffn) lin("wg", F, H);
    lin("wu", F, H);
    lin("wd", H, F);
    m["g1"] = {1, H};
    m["g2"] = {1, H};
    return m;
  }

  /// Activation shapes implied by the edges; throws on any inconsistency.
  std::map<std::string, std::pair<std::size_t, std::size_t>> activation_shapes() const {
    dims.validate();
    if (seq_len == 0) throw ShapeError("layer graph: seq_len must be positive");
    const auto params = parameters();
    std::map<std::string, std::pair<std::size_t, std::size_t>> s;
    s[input] = {seq_len, dims.hidden};
    auto get = [&](const GraphNode& n, std::size_t i) {
      if (i >= n.inputs.size()) throw ShapeError("node '" + n.name + "': missing input");
      const auto it = s.find(n.inputs[i]);
      if (it == s.end()) throw ShapeError("node '" + n.name + "': input '" + n.inputs[i] + "' not produced earlier");
      return it->second;
    };
    auto param = [&](const GraphNode& n, const std::string& id) {
      const auto it = params.find(id);
      if (it == params.end()) throw ShapeError("node '" + n.name + "': unknown parameter '" + id + "'");
      return it->second;
    };
    for (const GraphNode& n : nodes) {
      if (s.count(n.output)) throw ShapeError("node '" + n.name + "': output '" + n.output + "' produced twice");
      switch (n.kind) {
        case NodeKind::RMSNorm: {
          const auto x = get(n, 0);
          if (param(n, n.weight) != std::pair<std::size_t, std::size_t>{1, x.second})
            throw ShapeError("node '" + n.name + "': gain width differs from input");
          s[n.output] = x;
          break;
        }
        case NodeKind::Linear: {
          const auto x = get(n, 0);
          const auto w = param(n, n.weight);
          if (w.second != x.second) throw ShapeError("node '" + n.name + "': weight input width differs");
          if (param(n, n.scale) != std::pair<std::size_t, std::size_t>{1, w.first})
            throw ShapeError("node '" + n.name + "': scale width differs from weight rows");
          s[n.output] = {x.first, w.first};
          break;
        }
        case NodeKind::SDPA: {
          const auto q = get(n, 0), k = get(n, 1), v = get(n, 2);
          if (q.second != dims.q_width() || k.second != dims.kv_width() || v.second != dims.kv_width())
            throw ShapeError("node '" + n.name + "': head dims x heads must equal the projection widths");
          if (q.first != k.first || k.first != v.first) throw ShapeError("node '" + n.name + "': sequence lengths differ");
          s[n.output] = q;
          break;
        }
        case NodeKind::SiLU: s[n.output] = get(n, 0); break;
        case NodeKind::Mul:
        case NodeKind::Add:
          if (get(n, 0) != get(n, 1)) throw ShapeError("node '" + n.name + "': operand shapes differ");
          s[n.output] = get(n, 0);
          break;
      }
    }
    if (!s.count(output)) throw ShapeError("layer graph: output '" + output + "' never produced");
    return s;
  }

  void validate() const { activation_shapes(); }

  const GraphNode* producer(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.output == id) return &n;
    return nullptr;
  }
  std::size_t consumers(const std::string& id) const {
    std::size_t c = 0;
    for (const auto& n : nodes)
      for (const auto& i : n.inputs) c += i == id;
    return c + (id == output);
  }
};

/// The decoder-layer template.
inline LayerGraph decoder_layer(const ModelDims& d, std::size_t seq_len) {
  LayerGraph g;
  g.dims = d;
  g.seq_len = seq_len;
  auto add = [&](NodeKind k, std::string name, std::vector<std::string> in, std::string out, std::string w = {},
                 std::string s = {}) {
    g.nodes.push_back({k, std::move(name), std::move(in), std::move(out), std::move(w), std::move(s)});
  };
  add(NodeKind::RMSNorm, "rms1", {"x"}, "xn1", "g1");
  add(NodeKind::Linear, "q_proj", {"xn1"}, "q", "wq", "sq");
  add(NodeKind::Linear, "k_proj", {"xn1"}, "k", "wk", "sk");
  add(NodeKind::Linear, "v_proj", {"xn1"}, "v", "wv", "sv");
  add(NodeKind::SDPA, "sdpa", {"q", "k", "v"}, "y");
  add(NodeKind::Linear, "o_proj", {"y"}, "o", "wo", "so");
  add(NodeKind::Add, "res1", {"o", "x"}, "h1");
  add(NodeKind::RMSNorm, "rms2", {"h1"}, "xn2", "g2");
  if (d.gated_ffn) {
    add(NodeKind::Linear, "gate_proj", {"xn2"}, "gate", "wg", "sg");
    add(NodeKind::SiLU, "act", {"gate"}, "act");
    add(NodeKind::Linear, "up_proj", {"xn2"}, "up", "wu", "su");
    add(NodeKind::Mul, "gate_mul", {"act", "up"}, "m");
    add(NodeKind::Linear, "down_proj", {"m"}, "d", "wd", "sd");
  } else {
    add(NodeKind::Linear, "up_proj", {"xn2"}, "up", "wu", "su");
    add(NodeKind::SiLU, "act", {"up"}, "act");
    add(NodeKind::Linear, "down_proj", {"act"}, "d", "wd", "sd");
  }
  add(NodeKind::Add, "res2", {"d", "h1"}, "out");
  g.validate();
  return g;
}

inline nlohmann::json to_json(const LayerGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json j = {{"kind", std::string(to_string(n.kind))}, {"name", n.name}, {"inputs", n.inputs}, {"output", n.output}};
    if (!n.weight.empty()) j["weight"] = n.weight;
    if (!n.scale.empty()) j["scale"] = n.scale;
    nodes.push_back(j);
  }
  return {{"dims", to_json(g.dims)}, {"seq_len", g.seq_len}, {"input", g.input}, {"output", g.output}, {"nodes", nodes}};
}

inline LayerGraph layer_graph_from_json(const nlohmann::json& j) {
  const ModelDims d = model_dims_from_json(j.at("dims"));
  const std::size_t seq = j.at("seq_len").get<std::size_t>();
  if (!j.contains("nodes")) return decoder_layer(d, seq);
  LayerGraph g;
  g.dims = d;
  g.seq_len = seq;
  g.input = j.value("input", std::string("x"));
  g.output = j.value("output", std::string("out"));
  for (const auto& n : j.at("nodes")) {
    g.nodes.push_back({node_kind_from_string(n.at("kind").get<std::string>()), n.value("name", std::string()),
                       n.at("inputs").get<std::vector<std::string>>(), n.at("output").get<std::string>(),
                       n.value("weight", std::string()), n.value("scale", std::string())});
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct LoweringOptions {
  bool mxint8 = true;      // MXINT8 activations (INT16 otherwise)
  bool lut = true;         // on-chip LUT; off offloads nonlinear functions to the SFU
  bool qkv_batch = true;   // per-group Q/K/V weight slices co-resident, activations streamed once
  bool trans_fuse = true;  // V^T produced directly by swapping TMATMUL operands
  bool mask_fuse = true;   // causal mask carried in PSUM, fully masked tiles skipped
  std::optional<PlannerConfig> planner;  // overrides the planner derived from SimConfig

  DType act() const { return mxint8 ? DType::MXINT8 : DType::INT16; }

  static LoweringOptions none() { return {false, false, false, false, false, std::nullopt}; }
  static LoweringOptions all() { return {}; }

  friend bool operator==(const LoweringOptions& a, const LoweringOptions& b) {
    return a.mxint8 == b.mxint8 && a.lut == b.lut && a.qkv_batch == b.qkv_batch && a.trans_fuse == b.trans_fuse &&
           a.mask_fuse == b.mask_fuse;
  }
};

inline nlohmann::json to_json(const LoweringOptions& o) {
  return {{"mxint8", o.mxint8}, {"lut", o.lut}, {"qkv_batch", o.qkv_batch}, {"trans_fuse", o.trans_fuse},
          {"mask_fuse", o.mask_fuse}};
}

inline LoweringOptions lowering_options_from_json(const nlohmann::json& j) {
  LoweringOptions o = LoweringOptions::none();
  for (const auto& [k, v] : j.items()) {
    if (k == "mxint8") o.mxint8 = v.get<bool>();
    else if (k == "lut") o.lut = v.get<bool>();
    else if (k == "qkv_batch") o.qkv_batch = v.get<bool>();
    else if (k == "trans_fuse") o.trans_fuse = v.get<bool>();
    else if (k == "mask_fuse") o.mask_fuse = v.get<bool>();
    else throw ParseError("unknown lowering option '" + k + "'");
  }
  return o;
}

/// Without the LUT, offloaded instructions run on the SFU.
inline SimConfig sim_config_for(const LoweringOptions& o, SimConfig cfg) {
  cfg.sfu_mode = !o.lut;
  return cfg;
}

// ---------------------------------------------------------------------------
// RMSNorm tiling and its SRAM ledger
// ---------------------------------------------------------------------------

struct LedgerEntry {
  std::string buffer;
  std::size_t bytes = 0;
};

struct RmsnormLedger {
  std::size_t tile_rows = 0;
  std::vector<LedgerEntry> entries;  // IN0, IN1, OUT, SQSUM, LUT

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& e : entries) t += e.bytes;
    return t;
  }
};

/// IN0 and OUT hold the current tile, IN1 the prefetched next tile, SQSUM the
/// per-row mean squares and LUT the inverse-square-root table pair.
inline RmsnormLedger rmsnorm_ledger(std::size_t hidden, DType act, std::size_t tile_rows) {
  const std::size_t tile = storage_bytes(act, tile_rows, hidden);
  RmsnormLedger l;
  l.tile_rows = tile_rows;
  l.entries = {{"IN0", tile},
               {"IN1", tile},
               {"OUT", tile},
               {"SQSUM", storage_bytes(DType::FI32, tile_rows, 1)},
               {"LUT", default_lut_engine().pair(LutFunc::ISQR).storage_bytes()}};
  return l;
}

/// Largest 32-row multiple whose ledger fits; InfeasibleError when 32 rows do not.
inline std::size_t rmsnorm_tile_rows(std::size_t hidden, DType act, std::size_t sram_bytes) {
  std::size_t best = 0;
  for (std::size_t t = kTileQuantum;; t += kTileQuantum) {
    if (rmsnorm_ledger(hidden, act, t).total() > sram_bytes) break;
    best = t;
  }
  if (best == 0) throw InfeasibleError("rmsnorm: a 32-row tile of width " + std::to_string(hidden) + " exceeds SRAM");
  return best;
}

// ---------------------------------------------------------------------------
// Generated constants
// ---------------------------------------------------------------------------

struct ConstantInit {
  enum class Kind { Fill, CausalPsum, CausalMask };
  std::string id;
  Kind kind = Kind::Fill;
  double value = 0;         // Fill
  std::int64_t offset = 0;  // (i, j) visible iff j <= i + offset
};

/// Integer activations carry one power-of-two scale per row.
inline IntTensor quantize_int_rows(const RealTensor& src, DType d) {
  IntTensor t(src.rows, src.cols, d);
  for (std::size_t r = 0; r < src.rows; ++r) {
    double mx = 0;
    for (std::size_t c = 0; c < src.cols; ++c) mx = std::max(mx, std::fabs(src.at(r, c)));
    const double s = std::ldexp(1.0, detail::pow2_scale_exp(mx, t.max_code()));
    t.scale[r] = fi32_from_real(s);
    for (std::size_t c = 0; c < src.cols; ++c)
      t.elems[r * src.cols + c] = static_cast<std::int32_t>(std::nearbyint(src.at(r, c) / s));
  }
  return t;
}

inline Value quantize_as(const RealTensor& src, DType d) {
  if (d == DType::MXINT8) return quantize_mx(src);
  if (d == DType::FI32) {
    Fi32Tensor t(src.rows, src.cols);
    for (std::size_t i = 0; i < src.data.size(); ++i) t.data[i] = fi32_from_real(src.data[i]);
    return t;
  }
  return quantize_int_rows(src, d);
}

inline Value make_constant(const TensorDecl& d, const ConstantInit& c) {
  if (c.kind == ConstantInit::Kind::Fill) return quantize_as(RealTensor(d.rows, d.cols, c.value), d.dtype);
  auto visible = [&](std::size_t i, std::size_t j) {
    return static_cast<std::int64_t>(j) <= static_cast<std::int64_t>(i) + c.offset;
  };
  if (c.kind == ConstantInit::Kind::CausalPsum) {
    if (d.dtype != DType::FI32) throw ShapeError("causal PSUM '" + d.id + "' must be FI32");
    Fi32Tensor t(d.rows, d.cols);
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t j = 0; j < d.cols; ++j) t.at(i, j) = visible(i, j) ? Fi32::zero() : Fi32::lowest();
    return t;
  }
  RealTensor m(d.rows, d.cols);
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j) m.at(i, j) = visible(i, j) ? 1.0 : 0.0;
  return quantize_as(m, d.dtype);
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

struct LoweredLayer {
  Program program;
  std::vector<ConstantInit> constants;
  std::vector<std::string> inputs;  // activation input, weights, scales, gains
  std::string output;
  int npu = 0, n_npus = 1;
  std::size_t row0 = 0, rows = 0;
  std::size_t skipped_blocks = 0;  // attention key blocks never issued
};

/// Row range of one NPU: 32-aligned blocks, the last one ragged.
inline std::pair<std::size_t, std::size_t> npu_rows(std::size_t seq, int n_npus, int npu) {
  if (n_npus < 1 || npu < 0 || npu >= n_npus) throw Error("npu_rows: bad NPU index");
  const std::size_t per = ceil_div(ceil_div(seq, static_cast<std::size_t>(n_npus)), kTileQuantum) * kTileQuantum;
  const std::size_t r0 = per * static_cast<std::size_t>(npu);
  if (r0 >= seq) throw InfeasibleError("sequence of " + std::to_string(seq) + " rows is too short for " +
                                       std::to_string(n_npus) + " NPUs");
  return {r0, std::min(seq, r0 + per)};
}

/// Emission state for one NPU's program.
class LoweringContext {
 public:
  LoweringContext(const LayerGraph& g, const LoweringOptions& o, const SimConfig& cfg, int npu)
      : graph(g), opts(o), cfg_(cfg), npu_(npu) {
    std::tie(r0, r1) = npu_rows(g.seq_len, cfg.n_npus, npu);
    planner = o.planner ? *o.planner : cfg.planner();
    shapes_ = g.activation_shapes();
    for (const auto& [id, shp] : g.parameters()) {
      const DType d = id[0] == 'w' ? DType::UINT4 : DType::FI32;
      out.program.declare({id, shp.first, shp.second, d});
      out.inputs.push_back(id);
    }
    declare_act(g.input);
    out.inputs.insert(out.inputs.begin(), g.input);
    out.output = g.output;
    out.npu = npu;
    out.n_npus = cfg.n_npus;
    out.row0 = r0;
    out.rows = r1 - r0;
    constant("const.eps", 1, 1, DType::FI32, {"const.eps", ConstantInit::Kind::Fill, g.dims.rms_eps, 0});
  }

  const LayerGraph& graph;
  LoweringOptions opts;
  PlannerConfig planner;
  std::size_t r0 = 0, r1 = 0;
  LoweredLayer out;

  Program& prog() { return out.program; }
  DType act() const { return opts.act(); }
  std::size_t rows() const { return r1 - r0; }
  bool multi() const { return cfg_.n_npus > 1; }
  std::string priv(const std::string& id) const { return "n" + std::to_string(npu_) + "." + id; }

  /// Declares `id` unless present; a present tensor must match.
  const TensorDecl& tensor(const std::string& id, std::size_t rows, std::size_t cols, DType d,
                           Residence res = Residence::DRAM) {
    if (prog().has(id)) {
      const TensorDecl& t = prog().decl(id);
      if (t.rows != rows || t.cols != cols || t.dtype != d) throw ShapeError("tensor '" + id + "' redeclared differently");
      return t;
    }
    return prog().declare({id, rows, cols, d, res});
  }

  /// Graph activation in the activation dtype, S x cols.
  const TensorDecl& declare_act(const std::string& id) {
    const auto it = shapes_.find(id);
    if (it == shapes_.end()) throw ShapeError("unknown activation '" + id + "'");
    return tensor(id, it->second.first, it->second.second, act());
  }

  void constant(const std::string& id, std::size_t rows, std::size_t cols, DType d, ConstantInit c,
                Residence res = Residence::DRAM) {
    if (prog().has(id)) return;
    tensor(id, rows, cols, d, res);
    c.id = id;
    out.constants.push_back(c);
  }

  /// This NPU's rows of an S-row tensor.
  View my_rows(const std::string& id) {
    const TensorDecl& d = prog().decl(id);
    return {id, r0, 0, rows(), d.cols};
  }
  static View sub(View v, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
    v.row0 += row0;
    v.col0 += col0;
    v.rows = nrows;
    v.cols = ncols;
    return v;
  }

  MatmulSpec spec_for(const std::string& name, const View& in0, const View& in1, DType out_dtype) const {
    MatmulSpec s;
    s.name = name;
    s.a = {in0.rows, in0.cols, out.program.decl(in0.id).dtype};
    s.b = {in1.rows, in1.cols, out.program.decl(in1.id).dtype};
    s.c_dtype = out_dtype;
    return s;
  }

  int plan(const MatmulSpec& s) { return prog().add_plan({s, select_plan(s, planner)}); }

  Instruction& emit(Instruction i) {
    validate_instruction(prog(), i);
    return prog().emit(std::move(i));
  }

  Instruction& matmul(const std::string& tag, View o, View a, View b, int plan_idx, std::optional<View> cwq = {},
                      std::optional<View> psum = {}, LutFlags lut = {}, bool follower = false) {
    Instruction i;
    i.op = Opcode::TMATMUL;
    i.out = o;
    i.in0 = a;
    i.in1 = b;
    i.cwq = cwq;
    i.psum = psum;
    i.lut = lut;
    i.plan = plan_idx;
    i.plan_follower = follower;
    i.tag = tag;
    return emit(std::move(i));
  }

  static Instruction make(Opcode op, const std::string& tag, View o, View a, View b = {}) {
    Instruction i;
    i.op = op;
    i.out = o;
    i.in0 = a;
    i.in1 = b;
    i.tag = tag;
    return i;
  }

  Instruction& vec(Opcode op, const std::string& tag, View o, View a, View b = {}) {
    return emit(make(op, tag, o, a, b));
  }

  Instruction& lut(const std::string& tag, View o, View a, LutFlags f) {
    Instruction i = make(Opcode::LUT, tag, o, a);
    i.lut = f;
    i.offload = !opts.lut;
    return emit(std::move(i));
  }

  void sync() {
    if (!multi()) return;
    Instruction i;
    i.op = Opcode::SYNC;
    i.sync_id = next_sync_++;
    i.tag = "sync";
    emit(std::move(i));
  }

 private:
  SimConfig cfg_;
  int npu_ = 0;
  int next_sync_ = 1;
  std::map<std::string, std::pair<std::size_t, std::size_t>> shapes_;
};

/// MEAN_SQUARE (+eps) -> LUT(INV|SQR) -> RESCALE per row tile, gain as CWQ.
inline void lower_rmsnorm(LoweringContext& cx, const GraphNode& n) {
  const std::string& in = n.inputs.at(0);
  cx.declare_act(in);
  const TensorDecl& o = cx.declare_act(n.output);
  const std::string ms = n.output + ".ms", rs = n.output + ".rinv";
  cx.tensor(ms, o.rows, 1, DType::FI32);
  cx.tensor(rs, o.rows, 1, DType::FI32);
  const std::size_t tile = rmsnorm_tile_rows(o.cols, cx.act(), cx.planner.sram_bytes);
  for (std::size_t t0 = cx.r0; t0 < cx.r1; t0 += tile) {
    const std::size_t tn = std::min(tile, cx.r1 - t0);
    const View x{in, t0, 0, tn, o.cols}, y{n.output, t0, 0, tn, o.cols};
    const View m{ms, t0, 0, tn, 1}, r{rs, t0, 0, tn, 1};
    const std::string tag = n.name + ".t" + std::to_string(t0);
    Instruction ms_i = LoweringContext::make(Opcode::MEAN_SQUARE, tag, m, x);
    ms_i.bias = cx.prog().whole("const.eps");
    cx.emit(std::move(ms_i));
    cx.lut(tag, r, m, {.inv = true, .sqr = true});
    Instruction rs_i = LoweringContext::make(Opcode::RESCALE, tag, y, x, r);
    rs_i.cwq = cx.prog().whole(n.weight);
    cx.emit(std::move(rs_i));
  }
}

namespace detail {

inline std::string head_id(const std::string& base, std::size_t h) { return base + ".h" + std::to_string(h); }

/// Per-head output view of a linear node's weight and scale.
struct HeadSlice {
  View w, s;
};
inline HeadSlice head_slice(const Program& p, const GraphNode& n, std::size_t h, std::size_t hd) {
  const TensorDecl& w = p.decl(n.weight);
  return {{n.weight, h * hd, 0, hd, w.cols}, {n.scale, 0, h * hd, 1, hd}};
}

}  // namespace detail

/// Per-head Q, K and V projections (heads split before projection). Writes
/// q.hI and k.hJ (S x head_dim) and vt.hJ (head_dim x S); without transpose
/// fusion V is produced in INT16, transposed, and converted to the activation dtype.
inline void lower_qkv(LoweringContext& cx, const GraphNode& qn, const GraphNode& kn, const GraphNode& vn) {
  const ModelDims& d = cx.graph.dims;
  const std::size_t hd = d.head_dim, S = cx.graph.seq_len, R = cx.rows();
  const DType A = cx.act();
  for (const GraphNode* n : {&qn, &kn, &vn}) cx.declare_act(n->inputs.at(0));
  for (std::size_t h = 0; h < d.n_heads; ++h) cx.tensor(detail::head_id("q", h), S, hd, A);
  for (std::size_t j = 0; j < d.n_kv_heads; ++j) {
    cx.tensor(detail::head_id("k", j), S, hd, A);
    cx.tensor(detail::head_id("vt", j), hd, S, A);
    if (!cx.opts.trans_fuse) {
      cx.tensor(detail::head_id("v", j), S, hd, DType::INT16);
      if (A != DType::INT16) cx.tensor(detail::head_id("vt16", j), hd, S, DType::INT16);
    }
  }
  Program& p = cx.prog();
  const View xq = cx.my_rows(qn.inputs[0]), xk = cx.my_rows(kn.inputs[0]), xv = cx.my_rows(vn.inputs[0]);

  // One projection; `plan_idx` < 0 plans it alone.
  auto proj = [&](const GraphNode& n, const std::string& base, std::size_t h, const View& x, int plan_idx,
                  bool follower) {
    const auto sl = detail::head_slice(p, n, h, hd);
    const std::string tag = n.name + ".h" + std::to_string(h);
    if (base == "vt" && cx.opts.trans_fuse) {
      // V^T = W_V,h x^T X: weights as IN0, scale deferred to the A x V^T product.
      const View o{detail::head_id("vt", h), 0, cx.r0, hd, R};
      if (plan_idx < 0) plan_idx = cx.plan(cx.spec_for(tag, sl.w, x, A));
      cx.matmul(tag, o, sl.w, x, plan_idx, std::nullopt, std::nullopt, {}, follower);
      return;
    }
    // Unfused V is produced in INT16 so that its transpose is lossless.
    const std::string id = detail::head_id(base == "vt" ? "v" : base, h);
    const View o{id, cx.r0, 0, R, hd};
    if (plan_idx < 0) plan_idx = cx.plan(cx.spec_for(tag, x, sl.w, base == "vt" ? DType::INT16 : A));
    cx.matmul(tag, o, x, sl.w, plan_idx, sl.s, std::nullopt, {}, follower);
  };

  const bool batch = cx.opts.qkv_batch && qn.inputs[0] == kn.inputs[0] && kn.inputs[0] == vn.inputs[0];
  if (batch) {
    for (std::size_t j = 0; j < d.n_kv_heads; ++j) {
      // Group weight slices stay resident; the activation tile streams once for all of them.
      MatmulSpec s;
      s.name = "qkv.g" + std::to_string(j);
      s.a = {R, d.hidden, A};
      s.b = {(d.group() + 2) * hd, d.hidden, DType::UINT4};
      s.c_dtype = A;
      const int pi = cx.plan(s);
      for (std::size_t i = 0; i < d.group(); ++i) proj(qn, "q", j * d.group() + i, xq, pi, i != 0);
      proj(kn, "k", j, xk, pi, true);
      proj(vn, "vt", j, xv, pi, true);
    }
  } else {
    for (std::size_t h = 0; h < d.n_heads; ++h) proj(qn, "q", h, xq, -1, false);
    for (std::size_t j = 0; j < d.n_kv_heads; ++j) proj(kn, "k", j, xk, -1, false);
    for (std::size_t j = 0; j < d.n_kv_heads; ++j) proj(vn, "vt", j, xv, -1, false);
  }

  if (!cx.opts.trans_fuse) {
    for (std::size_t j = 0; j < d.n_kv_heads; ++j) {
      const std::string tag = vn.name + ".h" + std::to_string(j) + ".transpose";
      const View v{detail::head_id("v", j), cx.r0, 0, R, hd};
      const View vt{detail::head_id("vt", j), 0, cx.r0, hd, R};
      if (A == DType::INT16) {
        cx.vec(Opcode::TRANSPOSE, tag, vt, v);
        continue;
      }
      const View vt16{detail::head_id("vt16", j), 0, cx.r0, hd, R};
      cx.vec(Opcode::TRANSPOSE, tag, vt16, v);
      cx.vec(Opcode::CONVERT, tag, vt, vt16);
    }
  }
}

/// Query and key block sizes of tiled attention.
struct AttentionTiles {
  std::size_t query = 0, key = 0;
};

/// Largest 32-multiple query block (at most 1024 rows) whose working set fits:
/// the query block, FI32 accumulator, row sums, score blocks and
/// double-buffered K and V^T blocks.
inline AttentionTiles attention_tiles(std::size_t head_dim, std::size_t rows, const LoweringOptions& o,
                                      std::size_t sram) {
  const DType A = o.act();
  const std::size_t key = 128;
  const DType sd = o.mask_fuse && !o.lut ? DType::FI32 : A;
  const std::size_t cap = std::min<std::size_t>(1024, ceil_div(rows, kTileQuantum) * kTileQuantum);
  for (std::size_t tq = cap; tq >= kTileQuantum; tq -= kTileQuantum) {
    std::size_t b = storage_bytes(A, tq, head_dim) + storage_bytes(DType::FI32, tq, head_dim) +
                    storage_bytes(DType::FI32, tq, 2) + storage_bytes(A, tq, key) +
                    2 * (storage_bytes(A, key, head_dim) + storage_bytes(A, head_dim, key));
    if (!o.lut) b += storage_bytes(sd, tq, key);
    if (!o.mask_fuse) b += storage_bytes(A, tq, key);
    if (b <= sram) return {tq, key};
  }
  throw InfeasibleError("attention with head_dim " + std::to_string(head_dim) + " does not fit in " +
                        std::to_string(sram) + " B of SRAM");
}

/// Causal attention over this NPU's query rows, tiled into query and key
/// blocks. Score blocks stay in SRAM: e = exp(q k^T / sqrt(hd) [+ mask]),
/// row sums accumulate across key blocks and the E x V^T product accumulates
/// in FI32 through PSUM; the row normalization (MEAN, LUT(INV), RESCALE)
/// applies to that accumulator. With mask fusion key blocks past the diagonal
/// are never issued.
inline void lower_attention(LoweringContext& cx, const GraphNode& n, const GraphNode& vn) {
  const ModelDims& d = cx.graph.dims;
  const std::size_t hd = d.head_dim, S = cx.graph.seq_len;
  const DType A = cx.act();
  const bool fused = cx.opts.mask_fuse;
  cx.declare_act(n.output);
  cx.constant("const.qk_scale", 1, S, DType::FI32,
              {"", ConstantInit::Kind::Fill, 1.0 / std::sqrt(static_cast<double>(hd)), 0});
  if (!fused) {
    cx.constant(cx.priv("mask"), cx.rows(), S, A,
                {"", ConstantInit::Kind::CausalMask, 0, static_cast<std::int64_t>(cx.r0)});
  }
  const AttentionTiles t = attention_tiles(hd, cx.rows(), cx.opts, cx.planner.sram_bytes);
  // Scores leave the array before EXP only without the LUT; masked ones must stay FI32 then.
  const DType score_dtype = fused && !cx.opts.lut ? DType::FI32 : A;
  const LutFlags exp_flag{.exp = true};

  std::map<std::tuple<int, std::size_t, std::size_t, std::int64_t>, int> plans;
  auto plan_for = [&](int kind, std::size_t tq, std::size_t tk, std::optional<std::int64_t> off) {
    const auto key = std::make_tuple(kind, tq, tk, off.value_or(std::numeric_limits<std::int64_t>::min()));
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    MatmulSpec s;
    const std::size_t side = storage_bytes(DType::FI32, tq, 2);
    if (kind == 0) {
      s.name = n.name + ".score";
      s.a = {tq, hd, A, true};
      s.b = {tk, hd, A};
      s.c_dtype = cx.opts.lut ? A : score_dtype;
      if (off) s.mask = CausalMask{*off};
      s.reserved_bytes = storage_bytes(DType::FI32, tq, hd) + side;
    } else {
      s.name = n.name + ".av";
      s.a = {tq, tk, A, true};
      s.b = {hd, tk, A};
      s.c_dtype = DType::FI32;
      s.reserved_bytes = storage_bytes(A, tq, hd) + side;
    }
    s.c_on_chip = true;
    return plans[key] = cx.plan(s);
  };
  auto sram_tensor = [&](const std::string& id, std::size_t r, std::size_t c, DType dt) {
    return cx.prog().whole(cx.tensor(cx.priv(id), r, c, dt, Residence::SRAM).id);
  };
  auto free_ = [&](const View& v) { cx.vec(Opcode::FREE, v.id, {}, v); };

  for (std::size_t h = 0; h < d.n_heads; ++h) {
    const std::size_t kv = h / d.group();
    const std::string hname = n.name + ".h" + std::to_string(h);
    std::optional<View> cwq_v;
    if (cx.opts.trans_fuse) cwq_v = detail::head_slice(cx.prog(), vn, kv, hd).s;
    for (std::size_t b0 = cx.r0; b0 < cx.r1; b0 += t.query) {
      const std::size_t tq = std::min(t.query, cx.r1 - b0), b1 = b0 + tq;
      const std::string tag = hname + ".q" + std::to_string(b0);
      const View q{detail::head_id("q", h), b0, 0, tq, hd};
      cx.vec(Opcode::LOAD, tag, {}, q);
      const View acc = sram_tensor(tag + ".acc", tq, hd, DType::FI32);
      const View sum = sram_tensor(tag + ".sum", tq, 1, DType::FI32);
      const std::size_t k_end = fused ? b1 : S;
      for (std::size_t k0 = 0; k0 < S; k0 += t.key) {
        if (k0 >= k_end) {
          ++cx.out.skipped_blocks;
          continue;
        }
        const std::size_t tk = std::min(t.key, S - k0);
        const std::string kt = tag + ".k" + std::to_string(k0);
        const View k{detail::head_id("k", kv), k0, 0, tk, hd};
        const View vt{detail::head_id("vt", kv), 0, k0, hd, tk};
        const View qk_scale{"const.qk_scale", 0, k0, 1, tk};
        const bool crossing = k0 + tk > b0 + 1;  // some key j > some query i
        std::optional<View> psum;
        std::optional<std::int64_t> off;
        if (fused && crossing) {
          off = static_cast<std::int64_t>(b0) - static_cast<std::int64_t>(k0);
          const std::string id = cx.priv("mask.o" + std::to_string(*off));
          // Generated on chip: 0 where visible, the most negative FI32 where masked.
          cx.constant(id, t.query, t.key, DType::FI32, {"", ConstantInit::Kind::CausalPsum, 0, *off}, Residence::SRAM);
          psum = View{id, 0, 0, tq, tk};
        }
        const int sp = plan_for(0, tq, tk, off);
        View e;
        std::vector<View> tmp;
        if (cx.opts.lut) {
          e = sram_tensor(kt + ".e", tq, tk, A);
          cx.matmul(kt + ".score", e, q, k, sp, qk_scale, psum, exp_flag);
        } else {
          const View s = sram_tensor(kt + ".s", tq, tk, score_dtype);
          cx.matmul(kt + ".score", s, q, k, sp, qk_scale, psum);
          e = sram_tensor(kt + ".e", tq, tk, A);
          cx.lut(kt + ".exp", e, s, exp_flag);
          tmp.push_back(s);
        }
        tmp.push_back(e);
        View pm = e;
        if (!fused) {
          pm = sram_tensor(kt + ".p", tq, tk, A);
          cx.vec(Opcode::MUL, kt + ".mask", pm, e, View{cx.priv("mask"), b0 - cx.r0, k0, tq, tk});
          tmp.push_back(pm);
        }
        Instruction m = LoweringContext::make(Opcode::MEAN, kt + ".sum", sum, pm);
        if (k0 > 0) m.bias = sum;
        cx.emit(std::move(m));
        cx.matmul(kt + ".av", acc, pm, vt, plan_for(1, tq, tk, std::nullopt), std::nullopt,
                  k0 > 0 ? std::optional<View>(acc) : std::nullopt);
        for (const View& v : tmp) free_(v);
      }
      const View inv = sram_tensor(tag + ".inv", tq, 1, DType::FI32);
      cx.lut(tag + ".inv", inv, sum, {.inv = true});
      Instruction r = LoweringContext::make(Opcode::RESCALE, tag + ".norm", View{n.output, b0, h * hd, tq, hd}, acc, inv);
      r.cwq = cwq_v;
      cx.emit(std::move(r));
      for (const View& v : {q, acc, sum, inv}) free_(v);
    }
  }
}

/// Chains of Linear, SiLU and Mul nodes (the FFN, or a lone projection). A
/// SiLU whose input comes only from a Linear fuses into that TMATMUL as RLU.
inline void lower_ffn(LoweringContext& cx, const std::vector<const GraphNode*>& chain) {
  std::set<const GraphNode*> fused_silu;
  std::map<const GraphNode*, const GraphNode*> silu_of;
  for (const GraphNode* n : chain) {
    if (n->kind != NodeKind::SiLU || !cx.opts.lut) continue;
    const GraphNode* src = cx.graph.producer(n->inputs.at(0));
    if (src && src->kind == NodeKind::Linear && cx.graph.consumers(src->output) == 1) {
      fused_silu.insert(n);
      silu_of[src] = n;
    }
  }
  for (const GraphNode* n : chain) {
    switch (n->kind) {
      case NodeKind::Linear: {
        const auto it = silu_of.find(n);
        const std::string& out_id = it != silu_of.end() ? it->second->output : n->output;
        cx.declare_act(n->inputs.at(0));
        cx.declare_act(out_id);
        const View x = cx.my_rows(n->inputs[0]);
        const View w = cx.prog().whole(n->weight);
        const View o = cx.my_rows(out_id);
        LutFlags f;
        f.rlu = it != silu_of.end();
        cx.matmul(n->name, o, x, w, cx.plan(cx.spec_for(n->name, x, w, cx.act())), cx.prog().whole(n->scale),
                  std::nullopt, f);
        break;
      }
      case NodeKind::SiLU:
        if (fused_silu.count(n)) break;
        cx.declare_act(n->inputs.at(0));
        cx.declare_act(n->output);
        cx.lut(n->name, cx.my_rows(n->output), cx.my_rows(n->inputs[0]), {.rlu = true});
        break;
      case NodeKind::Mul:
        for (const auto& i : n->inputs) cx.declare_act(i);
        cx.declare_act(n->output);
        cx.vec(Opcode::MUL, n->name, cx.my_rows(n->output), cx.my_rows(n->inputs[0]), cx.my_rows(n->inputs[1]));
        break;
      default: throw Error("lower_ffn: unexpected node '" + n->name + "'");
    }
  }
}

inline void lower_add(LoweringContext& cx, const GraphNode& n) {
  for (const auto& i : n.inputs) cx.declare_act(i);
  cx.declare_act(n.output);
  cx.vec(Opcode::ADD, n.name, cx.my_rows(n.output), cx.my_rows(n.inputs.at(0)), cx.my_rows(n.inputs.at(1)));
}

/// Lowers the whole graph for one NPU. Sync points: after Q/K/V, after
/// attention and at the end of the layer.
inline LoweredLayer lower_layer(const LayerGraph& g, const LoweringOptions& opts, const SimConfig& cfg, int npu = 0) {
  cfg.validate();
  LoweringContext cx(g, opts, cfg, npu);
  // Linear nodes feeding attention are lowered with it.
  std::map<std::string, const GraphNode*> qkv_of;
  std::set<const GraphNode*> deferred;
  for (const auto& n : g.nodes) {
    if (n.kind != NodeKind::SDPA) continue;
    for (const auto& in : n.inputs) {
      const GraphNode* src = g.producer(in);
      if (!src || src->kind != NodeKind::Linear)
        throw ShapeError("sdpa '" + n.name + "': inputs must come from linear projections");
      deferred.insert(src);
    }
  }
  std::vector<const GraphNode*> chain;
  auto flush = [&] {
    if (!chain.empty()) lower_ffn(cx, chain);
    chain.clear();
  };
  for (const auto& n : g.nodes) {
    if (deferred.count(&n)) continue;
    switch (n.kind) {
      case NodeKind::Linear:
      case NodeKind::SiLU:
      case NodeKind::Mul: chain.push_back(&n); break;
      case NodeKind::RMSNorm:
        flush();
        lower_rmsnorm(cx, n);
        break;
      case NodeKind::Add:
        flush();
        lower_add(cx, n);
        break;
      case NodeKind::SDPA: {
        flush();
        const GraphNode &qn = *g.producer(n.inputs[0]), &kn = *g.producer(n.inputs[1]), &vn = *g.producer(n.inputs[2]);
        lower_qkv(cx, qn, kn, vn);
        cx.sync();
        lower_attention(cx, n, vn);
        cx.sync();
        break;
      }
    }
  }
  flush();
  cx.sync();
  cx.prog().validate();
  return std::move(cx.out);
}

inline std::vector<LoweredLayer> lower_layer_multi(const LayerGraph& g, const LoweringOptions& opts,
                                                   const SimConfig& cfg) {
  std::vector<LoweredLayer> v;
  for (int i = 0; i < cfg.n_npus; ++i) v.push_back(lower_layer(g, opts, cfg, i));
  return v;
}

// ---------------------------------------------------------------------------
// Inputs, binding and functional multi-NPU runs
// ---------------------------------------------------------------------------

using TensorMap = std::map<std::string, Value>;

/// Seeded layer inputs: N(0,1) activations, UINT4 weights (zero point 8) with
/// per-channel scales sized for unit-variance outputs, gains near 1.
inline TensorMap random_layer_inputs(const LayerGraph& g, DType act, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, 15);
  std::uniform_real_distribution<double> spread(0.5, 1.5);
  TensorMap m;
  RealTensor x(g.seq_len, g.dims.hidden);
  for (double& v : x.data) v = normal(rng);
  m[g.input] = quantize_as(x, act);
  for (const auto& [id, shp] : g.parameters()) {
    if (id[0] != 'w') continue;
    IntTensor w(shp.first, shp.second, DType::UINT4);
    std::fill(w.zero_point.begin(), w.zero_point.end(), 8);
    for (auto& q : w.elems) q = code(rng);
    m[id] = w;
    Fi32Tensor sc(1, shp.first);
    // Centered uniform codes have a standard deviation of about 4.6.
    const double base = 1.0 / (4.6 * std::sqrt(static_cast<double>(shp.second)));
    for (Fi32& v : sc.data) v = fi32_from_real(base * spread(rng));
    m["s" + id.substr(1)] = sc;
  }
  for (const char* gid : {"g1", "g2"}) {
    Fi32Tensor t(1, g.dims.hidden);
    for (Fi32& v : t.data) v = fi32_from_real(1.0 + 0.1 * normal(rng));
    m[gid] = t;
  }
  return m;
}

/// Binds inputs and generated constants into an Executor or ShadowExecutor.
template <class Exec>
void bind_layer(Exec& e, const LoweredLayer& l, const TensorMap& inputs) {
  for (const std::string& id : l.inputs) {
    const auto it = inputs.find(id);
    if (it == inputs.end()) throw ShapeError("missing layer input '" + id + "'");
    e.bind(id, it->second);
  }
  for (const ConstantInit& c : l.constants) e.bind(c.id, make_constant(l.program.decl(c.id), c));
}

/// Sequential program equivalent to the NPU programs run in lock step: the
/// segments between consecutive SYNCs are concatenated NPU by NPU.
inline LoweredLayer merge_by_sync(const std::vector<LoweredLayer>& parts) {
  if (parts.empty()) throw Error("merge_by_sync: no programs");
  LoweredLayer m;
  m.inputs = parts[0].inputs;
  m.output = parts[0].output;
  m.rows = 0;
  std::vector<int> plan_base;
  std::vector<std::vector<std::vector<const Instruction*>>> segs;
  std::set<std::string> consts;
  for (const auto& l : parts) {
    for (const auto& d : l.program.tensors) {
      if (m.program.has(d.id)) {
        const TensorDecl& e = m.program.decl(d.id);
        if (e.rows != d.rows || e.cols != d.cols || e.dtype != d.dtype)
          throw ShapeError("merge_by_sync: tensor '" + d.id + "' differs between NPUs");
      } else {
        m.program.declare(d);
      }
    }
    for (const auto& c : l.constants)
      if (consts.insert(c.id).second) m.constants.push_back(c);
    plan_base.push_back(static_cast<int>(m.program.plans.size()));
    for (const auto& pm : l.program.plans) m.program.plans.push_back(pm);
    segs.emplace_back(1);
    for (const auto& i : l.program.code) {
      if (i.op == Opcode::SYNC) segs.back().emplace_back();
      else segs.back().back().push_back(&i);
    }
    m.rows += l.rows;
  }
  std::size_t nseg = 0;
  for (const auto& s : segs) nseg = std::max(nseg, s.size());
  for (std::size_t k = 0; k < nseg; ++k) {
    for (std::size_t n = 0; n < segs.size(); ++n) {
      if (k >= segs[n].size()) continue;
      for (const Instruction* i : segs[n][k]) {
        Instruction c = *i;
        if (c.plan >= 0) c.plan += plan_base[n];
        m.program.emit(std::move(c));
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Graph description files
// ---------------------------------------------------------------------------

struct GraphFile {
  LayerGraph graph;
  LoweringOptions options;
  std::map<std::string, std::string> blobs;  // tensor id -> raw tensor file
  std::uint64_t seed = 1;                    // inputs without a blob are generated
};

inline nlohmann::json to_json(const GraphFile& f) {
  nlohmann::json j = to_json(f.graph);
  j["format"] = "trigen-graph";
  j["version"] = 1;
  j["options"] = to_json(f.options);
  j["blobs"] = f.blobs;
  j["seed"] = f.seed;
  return j;
}

inline GraphFile graph_file_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "trigen-graph") throw ParseError("not a trigen graph file");
  GraphFile f;
  f.graph = layer_graph_from_json(j);
  f.options = j.contains("options") ? lowering_options_from_json(j.at("options")) : LoweringOptions::all();
  f.blobs = j.value("blobs", std::map<std::string, std::string>{});
  f.seed = j.value("seed", std::uint64_t{1});
  return f;
}

inline std::vector<std::uint8_t> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Layer inputs from blobs (raw tensor bytes as written by to_bytes; integer
/// blobs get unit scales, UINT4 weights zero point 8) with the rest generated
/// from the seed.
inline TensorMap load_layer_inputs(const GraphFile& f, const std::string& base_dir = ".") {
  TensorMap m = random_layer_inputs(f.graph, f.options.act(), f.seed);
  const auto params = f.graph.parameters();
  for (const auto& [id, file] : f.blobs) {
    const std::string path = !file.empty() && file[0] == '/' ? file : base_dir + "/" + file;
    const auto bytes = read_blob(path);
    const auto it = m.find(id);
    if (it == m.end()) throw ShapeError("blob for unknown tensor '" + id + "'");
    const std::size_t r = rows_of(it->second), c = cols_of(it->second);
    const DType d = dtype_of(it->second);
    if (d == DType::MXINT8) it->second = mx_from_bytes(r, c, SharedAxis::Cols, bytes);
    else if (d == DType::FI32) it->second = fi32_from_bytes(r, c, bytes);
    else {
      IntTensor t = int_from_bytes(r, c, d, bytes);
      if (d == DType::UINT4) std::fill(t.zero_point.begin(), t.zero_point.end(), 8);
      it->second = std::move(t);
    }
  }
  return m;
}

}  // namespace trigen
