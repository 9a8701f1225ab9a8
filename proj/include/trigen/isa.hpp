// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Instruction set, programs and their serialized forms.
//
// Seven compute opcodes plus SYNC. LOAD, STORE, FREE, TRANSPOSE and CONVERT are
// pseudo-instructions for data movement and the host-side utilities the
// unfused baseline needs.

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trigen/dataflow_opt.hpp"
#include "trigen/error.hpp"
#include "trigen/mx_numerics.hpp"

namespace trigen {

enum class Opcode {
  TMATMUL,
  MEAN_SQUARE,
  LUT,
  RESCALE,
  MEAN,
  MUL,
  ADD,
  SYNC,
  LOAD,
  STORE,
  FREE,
  TRANSPOSE,
  CONVERT,
};

inline constexpr std::array<Opcode, 13> kAllOpcodes = {
    Opcode::TMATMUL, Opcode::MEAN_SQUARE, Opcode::LUT,  Opcode::RESCALE,   Opcode::MEAN,
    Opcode::MUL,     Opcode::ADD,         Opcode::SYNC, Opcode::LOAD,      Opcode::STORE,
    Opcode::FREE,    Opcode::TRANSPOSE,   Opcode::CONVERT};

inline std::string_view to_string(Opcode o) {
  switch (o) {
    case Opcode::TMATMUL: return "TMATMUL";
    case Opcode::MEAN_SQUARE: return "MEAN_SQUARE";
    case Opcode::LUT: return "LUT";
    case Opcode::RESCALE: return "RESCALE";
    case Opcode::MEAN: return "MEAN";
    case Opcode::MUL: return "MUL";
    case Opcode::ADD: return "ADD";
    case Opcode::SYNC: return "SYNC";
    case Opcode::LOAD: return "LOAD";
    case Opcode::STORE: return "STORE";
    case Opcode::FREE: return "FREE";
    case Opcode::TRANSPOSE: return "TRANSPOSE";
    case Opcode::CONVERT: return "CONVERT";
  }
  return "?";
}

inline Opcode opcode_from_string(std::string_view s) {
  for (Opcode o : kAllOpcodes)
    if (to_string(o) == s) return o;
  throw ParseError("unknown opcode '" + std::string(s) + "'");
}

enum class Phase { Linear, Nonlinear, Data };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Linear: return "linear";
    case Phase::Nonlinear: return "nonlinear";
    case Phase::Data: return "data";
  }
  return "?";
}

enum class Residence { DRAM, SRAM };

struct TensorDecl {
  std::string id;
  std::size_t rows = 0, cols = 0;
  DType dtype = DType::FI32;
  Residence residence = Residence::DRAM;

  std::size_t bytes() const { return storage_bytes(dtype, rows, cols); }
};

/// Rectangular window into a declared tensor.
struct View {
  std::string id;
  std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;

  bool empty() const { return id.empty(); }
  std::size_t elements() const { return rows * cols; }
  friend bool operator==(const View&, const View&) = default;
};

struct LutFlags {
  bool inv = false, sqr = false, exp = false, rlu = false;

  bool any() const { return inv || sqr || exp || rlu; }
  friend bool operator==(const LutFlags&, const LutFlags&) = default;

  std::string str() const {
    std::string s;
    auto add = [&](bool on, const char* n) {
      if (!on) return;
      if (!s.empty()) s += '|';
      s += n;
    };
    add(inv, "inv");
    add(sqr, "sqr");
    add(exp, "exp");
    add(rlu, "rlu");
    return s;
  }

  static LutFlags parse(std::string_view s) {
    LutFlags f;
    std::size_t p = 0;
    while (p <= s.size()) {
      const std::size_t q = std::min(s.find('|', p), s.size());
      const std::string_view t = s.substr(p, q - p);
      if (t == "inv") f.inv = true;
      else if (t == "sqr") f.sqr = true;
      else if (t == "exp") f.exp = true;
      else if (t == "rlu") f.rlu = true;
      else throw ParseError("unknown lut flag '" + std::string(t) + "'");
      p = q + 1;
    }
    return f;
  }

  /// Legal combinations: inv, sqr, inv|sqr, exp, rlu.
  bool legal() const {
    if (exp || rlu) return !inv && !sqr && (exp != rlu);
    return inv || sqr;
  }
};

struct Instruction {
  Opcode op = Opcode::SYNC;
  View out, in0, in1;
  std::optional<View> psum, bias, cwq;
  LutFlags lut;
  int sync_id = 0;
  int plan = -1;              // index into Program::plans for TMATMUL
  bool plan_follower = false;  // data movement accounted by the instruction owning the shared plan
  bool offload = false;        // handled by an external special function unit in the baseline
  std::string tag;

  Phase phase() const {
    switch (op) {
      case Opcode::TMATMUL: return Phase::Linear;
      case Opcode::LOAD:
      case Opcode::STORE:
      case Opcode::FREE:
      case Opcode::TRANSPOSE:
      case Opcode::CONVERT: return Phase::Data;
      case Opcode::SYNC: return Phase::Data;
      default: return Phase::Nonlinear;
    }
  }
};

struct PlannedMatmul {
  MatmulSpec spec;
  TilePlan plan;
};

struct Program {
  std::vector<TensorDecl> tensors;
  std::vector<Instruction> code;
  std::vector<PlannedMatmul> plans;

  const TensorDecl& decl(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ShapeError("unknown tensor '" + id + "'");
    return tensors[it->second];
  }
  bool has(const std::string& id) const { return index_.count(id) != 0; }

  const TensorDecl& declare(TensorDecl d) {
    if (has(d.id)) throw ShapeError("tensor '" + d.id + "' declared twice");
    if (d.rows == 0 || d.cols == 0) throw ShapeError("tensor '" + d.id + "' has an empty shape");
    index_[d.id] = tensors.size();
    tensors.push_back(std::move(d));
    return tensors.back();
  }

  View whole(const std::string& id) const {
    const TensorDecl& d = decl(id);
    return {id, 0, 0, d.rows, d.cols};
  }

  int add_plan(PlannedMatmul p) {
    plans.push_back(std::move(p));
    return static_cast<int>(plans.size()) - 1;
  }

  Instruction& emit(Instruction i) {
    code.push_back(std::move(i));
    return code.back();
  }

  /// Multiply-accumulates performed by all TMATMUL instructions.
  std::uint64_t mac_count() const {
    std::uint64_t n = 0;
    for (const auto& i : code)
      if (i.op == Opcode::TMATMUL) n += std::uint64_t{i.in0.rows} * i.in1.rows * i.in0.cols;
    return n;
  }

  void validate() const;

 private:
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_view(const Program& p, const View& v, const char* role, const Instruction& ins) {
  const TensorDecl& d = p.decl(v.id);
  if (v.rows == 0 || v.cols == 0 || v.row0 + v.rows > d.rows || v.col0 + v.cols > d.cols) {
    throw ShapeError(std::string(to_string(ins.op)) + " " + role + " view of '" + v.id + "' out of bounds");
  }
}

inline void require(bool ok, const Instruction& ins, const std::string& what) {
  if (!ok) throw ShapeError(std::string(to_string(ins.op)) + (ins.tag.empty() ? "" : " [" + ins.tag + "]") + ": " + what);
}

inline bool shape_is(const View& v, std::size_t r, std::size_t c) { return v.rows == r && v.cols == c; }

/// Broadcastable second operand: same shape, 1x1, 1xN or Mx1.
inline bool broadcastable(const View& v, std::size_t r, std::size_t c) {
  return shape_is(v, r, c) || shape_is(v, 1, 1) || shape_is(v, 1, c) || shape_is(v, r, 1);
}

}  // namespace detail

inline void validate_instruction(const Program& p, const Instruction& ins) {
  using detail::require;
  using detail::shape_is;
  auto dt = [&](const View& v) { return p.decl(v.id).dtype; };
  auto fi32 = [&](const std::optional<View>& v) { return !v || dt(*v) == DType::FI32; };
  for (const View* v : {&ins.out, &ins.in0, &ins.in1})
    if (!v->empty()) detail::check_view(p, *v, "operand", ins);
  for (const auto* v : {&ins.psum, &ins.bias, &ins.cwq})
    if (*v) detail::check_view(p, **v, "flag", ins);
  require(fi32(ins.psum) && fi32(ins.bias) && fi32(ins.cwq), ins, "PSUM/BIAS/CWQ must be FI32");
  if (ins.lut.any()) require(ins.lut.legal(), ins, "illegal LUT flag combination " + ins.lut.str());
  if (ins.lut.any()) require(ins.op == Opcode::TMATMUL || ins.op == Opcode::LUT, ins, "LUT flags only on TMATMUL/LUT");
  if (ins.psum) require(ins.op == Opcode::TMATMUL, ins, "PSUM only on TMATMUL");

  switch (ins.op) {
    case Opcode::TMATMUL: {
      const View &a = ins.in0, &b = ins.in1, &o = ins.out;
      require(!a.empty() && !b.empty() && !o.empty(), ins, "needs IN0, IN1, OUT");
      require(a.cols == b.cols, ins, "reduction dims differ");
      require(shape_is(o, a.rows, b.rows), ins, "OUT must be rows(IN0) x rows(IN1)");
      require(dt(a) != DType::FI32 && dt(b) != DType::FI32, ins, "unsupported dtype pairing with FI32");
      require(!(ins.lut.any() && !(ins.lut.exp || ins.lut.rlu)), ins, "only EXP or RLU fuse into TMATMUL");
      if (ins.psum) require(shape_is(*ins.psum, o.rows, o.cols), ins, "PSUM must match OUT");
      if (ins.bias) require(detail::broadcastable(*ins.bias, o.rows, o.cols), ins, "BIAS shape");
      if (ins.cwq) require(shape_is(*ins.cwq, 1, o.cols), ins, "CWQ must be 1 x cols(OUT)");
      for (const View* v : {&a, &b}) {
        if (dt(*v) == DType::MXINT8) require(v->col0 % std::size_t{kMxBlock} == 0, ins, "MX operand view must start on a block");
      }
      break;
    }
    case Opcode::MEAN_SQUARE:
    case Opcode::MEAN:
      require(!ins.in0.empty() && shape_is(ins.out, ins.in0.rows, 1), ins, "OUT must be rows(IN0) x 1");
      if (ins.bias) require(shape_is(*ins.bias, 1, 1) || shape_is(*ins.bias, ins.out.rows, 1), ins, "BIAS shape");
      break;
    case Opcode::LUT:
      require(ins.lut.any(), ins, "LUT needs a function flag");
      require(shape_is(ins.out, ins.in0.rows, ins.in0.cols), ins, "OUT shape");
      break;
    case Opcode::RESCALE:
      require(shape_is(ins.out, ins.in0.rows, ins.in0.cols), ins, "OUT shape");
      require(!ins.in1.empty() && dt(ins.in1) == DType::FI32, ins, "scale must be FI32");
      require(shape_is(ins.in1, 1, 1) || shape_is(ins.in1, ins.in0.rows, 1), ins, "scale is scalar or per-row");
      if (ins.cwq) require(shape_is(*ins.cwq, 1, ins.in0.cols), ins, "CWQ must be 1 x cols");
      break;
    case Opcode::MUL:
    case Opcode::ADD:
      require(shape_is(ins.out, ins.in0.rows, ins.in0.cols), ins, "OUT shape");
      require(!ins.in1.empty() && detail::broadcastable(ins.in1, ins.in0.rows, ins.in0.cols), ins, "IN1 shape");
      break;
    case Opcode::SYNC: require(ins.sync_id >= 0, ins, "negative Sync-ID"); break;
    case Opcode::LOAD:
    case Opcode::STORE:
    case Opcode::FREE: require(!ins.in0.empty(), ins, "needs a buffer operand"); break;
    case Opcode::TRANSPOSE:
      require(shape_is(ins.out, ins.in0.cols, ins.in0.rows), ins, "OUT must be the transpose shape");
      break;
    case Opcode::CONVERT: require(shape_is(ins.out, ins.in0.rows, ins.in0.cols), ins, "OUT shape"); break;
  }
  if (ins.plan >= 0) require(static_cast<std::size_t>(ins.plan) < p.plans.size(), ins, "plan index out of range");
}

inline void Program::validate() const {
  for (const auto& i : code) validate_instruction(*this, i);
}

// ---------------------------------------------------------------------------
// Command decomposition
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCommandRows = 64;
/// Each command drives two 64-register accumulator groups.
inline constexpr std::size_t kCommandCols = 128;

struct Command {
  std::size_t instr = 0;
  std::size_t row0 = 0, rows = 0;  // IN0 rows
  std::size_t col0 = 0, cols = 0;  // OUT columns (IN1 rows)
};

inline std::vector<Command> decompose(std::size_t in0_rows, std::size_t out_cols, std::size_t instr = 0) {
  std::vector<Command> cmds;
  for (std::size_t r = 0; r < in0_rows; r += kCommandRows)
    for (std::size_t c = 0; c < out_cols; c += kCommandCols)
      cmds.push_back({instr, r, std::min(kCommandRows, in0_rows - r), c, std::min(kCommandCols, out_cols - c)});
  return cmds;
}

inline std::vector<Command> decompose(const Instruction& ins, std::size_t instr = 0) {
  if (ins.op != Opcode::TMATMUL) throw Error("decompose: not a TMATMUL");
  return decompose(ins.in0.rows, ins.in1.rows, instr);
}

// ---------------------------------------------------------------------------
// Text assembly: one instruction per line,
//   OPCODE out, in0[, in1] [psum=V] [bias=V] [cwq=V] [lut=f|g] [plan=N] [follow] [offload] [tag=S]
//   SYNC id
//   LOAD|STORE|FREE view
// with views written as name or name[r0:r1,c0:c1].
// ---------------------------------------------------------------------------

inline std::string format_view(const Program& p, const View& v) {
  const TensorDecl& d = p.decl(v.id);
  if (v.row0 == 0 && v.col0 == 0 && v.rows == d.rows && v.cols == d.cols) return v.id;
  std::ostringstream os;
  os << v.id << '[' << v.row0 << ':' << v.row0 + v.rows << ',' << v.col0 << ':' << v.col0 + v.cols << ']';
  return os.str();
}

inline std::string format_instruction(const Program& p, const Instruction& i) {
  std::ostringstream os;
  os << to_string(i.op);
  switch (i.op) {
    case Opcode::SYNC: os << ' ' << i.sync_id; break;
    case Opcode::LOAD:
    case Opcode::STORE:
    case Opcode::FREE: os << ' ' << format_view(p, i.in0); break;
    default:
      os << ' ' << format_view(p, i.out) << ", " << format_view(p, i.in0);
      if (!i.in1.empty()) os << ", " << format_view(p, i.in1);
  }
  if (i.psum) os << " psum=" << format_view(p, *i.psum);
  if (i.bias) os << " bias=" << format_view(p, *i.bias);
  if (i.cwq) os << " cwq=" << format_view(p, *i.cwq);
  if (i.lut.any()) os << " lut=" << i.lut.str();
  if (i.plan >= 0) os << " plan=" << i.plan;
  if (i.plan_follower) os << " follow";
  if (i.offload) os << " offload";
  if (!i.tag.empty()) os << " tag=" << i.tag;
  return os.str();
}

inline std::string write_assembly(const Program& p) {
  std::string s;
  for (const auto& i : p.code) s += format_instruction(p, i) + '\n';
  return s;
}

namespace detail {

inline std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  if (s.empty()) throw ParseError("expected a number");
  for (char c : s) {
    if (c < '0' || c > '9') throw ParseError("bad number '" + std::string(s) + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

inline View parse_view(const Program& p, std::string_view s) {
  const std::size_t br = s.find('[');
  if (br == std::string_view::npos) return p.whole(std::string(s));
  if (s.back() != ']') throw ParseError("unterminated view '" + std::string(s) + "'");
  View v;
  v.id = std::string(s.substr(0, br));
  p.decl(v.id);
  const std::string_view body = s.substr(br + 1, s.size() - br - 2);
  const std::size_t comma = body.find(',');
  if (comma == std::string_view::npos) throw ParseError("view needs row and column ranges");
  auto range = [&](std::string_view r, std::size_t& lo, std::size_t& n) {
    const std::size_t c = r.find(':');
    if (c == std::string_view::npos) throw ParseError("range needs ':'");
    lo = parse_size(r.substr(0, c));
    const std::size_t hi = parse_size(r.substr(c + 1));
    if (hi <= lo) throw ParseError("empty range");
    n = hi - lo;
  };
  range(body.substr(0, comma), v.row0, v.rows);
  range(body.substr(comma + 1), v.col0, v.cols);
  return v;
}

}  // namespace detail

/// Parses instructions against the tensors and plans already in `p`.
inline void parse_assembly(Program& p, std::string_view text) {
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string op;
    if (!(ls >> op)) continue;
    try {
      Instruction ins;
      ins.op = opcode_from_string(op);
      std::vector<std::string> toks;
      for (std::string t; ls >> t;) toks.push_back(t);
      std::vector<std::string> ops;
      std::size_t k = 0;
      // Positional operands are comma separated and precede key=value flags.
      for (; k < toks.size(); ++k) {
        std::string t = toks[k];
        if (t.find('=') != std::string::npos || t == "follow" || t == "offload") break;
        const bool more = !t.empty() && t.back() == ',';
        if (more) t.pop_back();
        ops.push_back(t);
        if (!more) {
          ++k;
          break;
        }
      }
      if (ins.op == Opcode::SYNC) {
        if (ops.size() != 1) throw ParseError("SYNC takes one id");
        ins.sync_id = static_cast<int>(detail::parse_size(ops[0]));
      } else if (ins.op == Opcode::LOAD || ins.op == Opcode::STORE || ins.op == Opcode::FREE) {
        if (ops.size() != 1) throw ParseError("expects one buffer");
        ins.in0 = detail::parse_view(p, ops[0]);
      } else {
        if (ops.size() < 2 || ops.size() > 3) throw ParseError("expects out, in0[, in1]");
        ins.out = detail::parse_view(p, ops[0]);
        ins.in0 = detail::parse_view(p, ops[1]);
        if (ops.size() == 3) ins.in1 = detail::parse_view(p, ops[2]);
      }
      for (; k < toks.size(); ++k) {
        const std::string& t = toks[k];
        if (t == "follow") {
          ins.plan_follower = true;
          continue;
        }
        if (t == "offload") {
          ins.offload = true;
          continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value, got '" + t + "'");
        const std::string key = t.substr(0, eq), val = t.substr(eq + 1);
        if (key == "psum") ins.psum = detail::parse_view(p, val);
        else if (key == "bias") ins.bias = detail::parse_view(p, val);
        else if (key == "cwq") ins.cwq = detail::parse_view(p, val);
        else if (key == "lut") ins.lut = LutFlags::parse(val);
        else if (key == "plan") ins.plan = static_cast<int>(detail::parse_size(val));
        else if (key == "tag") ins.tag = val;
        else throw ParseError("unknown flag '" + key + "'");
      }
      validate_instruction(p, ins);
      p.code.push_back(std::move(ins));
    } catch (const Error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// JSON manifest: tensors and plans
// ---------------------------------------------------------------------------

inline nlohmann::json plan_record_to_json(const PlannedMatmul& pm) {
  const TilePlan& p = pm.plan;
  return {{"spec", to_json(pm.spec)},
          {"stationary", std::string(to_string(p.stationary))},
          {"stat_rows", p.stat_rows},
          {"stream_rows", p.stream_rows},
          {"axis", std::string(to_string(p.axis))},
          {"cores_used", p.cores_used},
          {"n_cores", p.n_cores},
          {"min_stat_rows", p.min_stat_rows},
          {"read_bytes", p.read_bytes},
          {"total_bytes", p.total_bytes},
          {"footprint_bytes", p.footprint_bytes},
          {"mac_utilization", p.mac_utilization}};
}

inline PlannedMatmul plan_record_from_json(const nlohmann::json& j) {
  PlannedMatmul pm;
  pm.spec = matmul_spec_from_json(j.at("spec"));
  TilePlan& p = pm.plan;
  p.stationary = j.at("stationary").get<std::string>() == "in0" ? Stationary::IN0 : Stationary::IN1;
  p.stat_rows = j.at("stat_rows").get<std::size_t>();
  p.stream_rows = j.at("stream_rows").get<std::size_t>();
  p.axis = j.at("axis").get<std::string>() == "in0_rows" ? SplitAxis::IN0Rows : SplitAxis::IN1Rows;
  p.cores_used = j.at("cores_used").get<int>();
  p.n_cores = j.at("n_cores").get<int>();
  p.min_stat_rows = j.value("min_stat_rows", std::size_t{0});
  p.read_bytes = j.at("read_bytes").get<std::uint64_t>();
  p.total_bytes = j.at("total_bytes").get<std::uint64_t>();
  p.footprint_bytes = j.value("footprint_bytes", std::size_t{0});
  p.mac_utilization = j.value("mac_utilization", 0.0);
  if (p.stat_rows == 0 || p.stream_rows == 0) throw ParseError("plan with empty tiles");
  return pm;
}

inline nlohmann::json manifest_to_json(const Program& p) {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& d : p.tensors) {
    t.push_back({{"id", d.id},
                 {"rows", d.rows},
                 {"cols", d.cols},
                 {"dtype", std::string(to_string(d.dtype))},
                 {"residence", d.residence == Residence::SRAM ? "sram" : "dram"}});
  }
  nlohmann::json pl = nlohmann::json::array();
  for (const auto& pm : p.plans) pl.push_back(plan_record_to_json(pm));
  return {{"format", "trigen-manifest"}, {"version", 1}, {"tensors", t}, {"plans", pl}};
}

inline Program program_from(const nlohmann::json& manifest, std::string_view assembly) {
  Program p;
  if (manifest.value("format", std::string()) != "trigen-manifest") throw ParseError("not a trigen manifest");
  for (const auto& t : manifest.at("tensors")) {
    const std::string res = t.value("residence", std::string("dram"));
    if (res != "dram" && res != "sram") throw ParseError("bad residence '" + res + "'");
    p.declare({t.at("id").get<std::string>(), t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
               dtype_from_string(t.at("dtype").get<std::string>()), res == "sram" ? Residence::SRAM : Residence::DRAM});
  }
  for (const auto& j : manifest.value("plans", nlohmann::json::array())) p.plans.push_back(plan_record_from_json(j));
  parse_assembly(p, assembly);
  return p;
}

}  // namespace trigen
