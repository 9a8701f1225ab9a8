// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Functional execution of programs on quantized tensors.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "trigen/error.hpp"
#include "trigen/isa.hpp"
#include "trigen/lut_engine.hpp"
#include "trigen/mx_numerics.hpp"

namespace trigen {

using Value = std::variant<MxTensor, IntTensor, Fi32Tensor>;

inline DType dtype_of(const Value& v) {
  if (std::holds_alternative<MxTensor>(v)) return DType::MXINT8;
  if (const auto* t = std::get_if<IntTensor>(&v)) return t->dtype;
  return DType::FI32;
}
inline std::size_t rows_of(const Value& v) {
  return std::visit([](const auto& t) { return t.rows; }, v);
}
inline std::size_t cols_of(const Value& v) {
  return std::visit([](const auto& t) { return t.cols; }, v);
}

/// Exact FI32 image of one element (integer elements include their row scale).
inline Fi32 read_fi32(const Value& v, std::size_t r, std::size_t c, NumericFlags* flags = nullptr) {
  if (const auto* m = std::get_if<MxTensor>(&v)) return fi32_normalize(m->elem(r, c), m->lsb_exp(r, c), flags);
  if (const auto* t = std::get_if<IntTensor>(&v)) {
    const Fi32 q = fi32_normalize(t->centered(r, c), 0, flags);
    return t->scale[r] == fi32_from_real(1.0) ? q : fi32_mul(q, t->scale[r], flags);
  }
  return std::get<Fi32Tensor>(v).at(r, c);
}

inline RealTensor to_real(const Value& v) {
  RealTensor out(rows_of(v), cols_of(v));
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) = fi32_to_real(read_fi32(v, r, c));
  return out;
}

// ---------------------------------------------------------------------------
// SRAM occupancy
// ---------------------------------------------------------------------------

class SramLedger {
 public:
  explicit SramLedger(std::size_t capacity = std::size_t{1} << 20) : capacity_(capacity) {}

  void alloc(const std::string& key, std::size_t bytes) {
    if (live_.count(key)) return;
    if (used_ + bytes > capacity_) {
      throw SramOverflowError("SRAM overflow allocating '" + key + "': " + std::to_string(used_ + bytes) + " > " +
                              std::to_string(capacity_) + " bytes");
    }
    live_[key] = bytes;
    used_ += bytes;
    allocated_ += bytes;
    peak_ = std::max(peak_, used_);
  }
  void free(const std::string& key) {
    const auto it = live_.find(key);
    if (it == live_.end()) return;
    used_ -= it->second;
    freed_ += it->second;
    live_.erase(it);
  }

  std::size_t used() const { return used_; }
  std::size_t peak() const { return peak_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t allocated_total() const { return allocated_; }
  std::uint64_t freed_total() const { return freed_; }

 private:
  std::size_t capacity_;
  std::size_t used_ = 0, peak_ = 0;
  std::uint64_t allocated_ = 0, freed_ = 0;
  std::map<std::string, std::size_t> live_;
};

// ---------------------------------------------------------------------------
// Output conversion
// ---------------------------------------------------------------------------

namespace detail {

inline int pow2_scale_exp(double max_abs, std::int32_t max_code) {
  if (max_abs == 0.0) return 0;
  int e = static_cast<int>(std::ceil(std::log2(max_abs / max_code)));
  while (std::ldexp(static_cast<double>(max_code), e) < max_abs) ++e;
  return e;
}

inline Value blank_value(DType d, std::size_t rows, std::size_t cols) {
  if (d == DType::MXINT8) return MxTensor(rows, cols);
  if (d == DType::FI32) return Fi32Tensor(rows, cols);
  return IntTensor(rows, cols, d);
}

/// Integer outputs: zero point then round-to-nearest-even and clamp.
inline void write_int(IntTensor& dst, const View& v, const Fi32Tensor& src, NumericFlags* flags) {
  for (std::size_t r = 0; r < v.rows; ++r) {
    const std::size_t R = v.row0 + r;
    const double s = fi32_to_real(dst.scale[R]);
    for (std::size_t c = 0; c < v.cols; ++c) {
      double q = std::nearbyint(fi32_to_real(src.at(r, c)) / s) + dst.zero_point[R];
      if (q > dst.max_code() || q < dst.min_code()) {
        q = std::clamp<double>(q, dst.min_code(), dst.max_code());
        if (flags) flags->saturated = true;
      }
      dst.elems[R * dst.cols + v.col0 + c] = static_cast<std::int32_t>(q);
    }
  }
}

/// Widens the power-of-two row scales of an executor-created integer tensor so
/// the incoming rows fit; codes already stored are re-rounded onto the new grid.
inline void grow_int_rows(IntTensor& dst, const View& v, const Fi32Tensor& src) {
  for (std::size_t r = 0; r < v.rows; ++r) {
    const std::size_t R = v.row0 + r;
    double mx = 0.0;
    for (std::size_t c = 0; c < v.cols; ++c) mx = std::max(mx, std::fabs(fi32_to_real(src.at(r, c))));
    const int want = pow2_scale_exp(mx, dst.max_code());
    const int have = std::ilogb(fi32_to_real(dst.scale[R]));
    if (want <= have) continue;
    const double f = std::ldexp(1.0, want - have);
    for (std::size_t c = 0; c < dst.cols; ++c) {
      std::int32_t& q = dst.elems[R * dst.cols + c];
      q = dst.zero_point[R] + static_cast<std::int32_t>(std::nearbyint((q - dst.zero_point[R]) / f));
    }
    dst.scale[R] = fi32_from_real(std::ldexp(1.0, want));
  }
}

/// MX outputs: per-block max-exponent alignment. Blocks only partly covered by
/// the view are merged with the values already stored there.
inline void write_mx(MxTensor& dst, const View& v, const Fi32Tensor& src, NumericFlags* flags) {
  if (dst.axis != SharedAxis::Cols) throw ShapeError("MX outputs share exponents along columns");
  const std::size_t B = kMxBlock;
  const std::size_t b0 = v.col0 / B * B;
  const std::size_t b1 = std::min(dst.cols, ceil_div(v.col0 + v.cols, B) * B);
  Fi32Tensor span(v.rows, b1 - b0);
  for (std::size_t r = 0; r < v.rows; ++r) {
    for (std::size_t c = b0; c < b1; ++c) {
      const bool inside = c >= v.col0 && c < v.col0 + v.cols;
      span.at(r, c - b0) = inside ? src.at(r, c - v.col0)
                                  : fi32_normalize(dst.elem(v.row0 + r, c), dst.lsb_exp(v.row0 + r, c));
    }
  }
  const MxTensor q = align_fi32_to_mx(span, flags);
  for (std::size_t r = 0; r < v.rows; ++r) {
    const std::size_t R = v.row0 + r;
    for (std::size_t c = b0; c < b1; ++c) dst.elems[R * dst.cols + c] = q.elem(r, c - b0);
    for (std::size_t b = 0; b < q.block_cols(); ++b) dst.shared_exps[R * dst.block_cols() + b0 / B + b] = q.shared_exps[r * q.block_cols() + b];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------

struct ExecOptions {
  std::size_t sram_bytes = std::size_t{1} << 20;
  bool enforce_sram = true;
  bool command_wise = true;
};

struct ExecStats {
  std::size_t instructions = 0;
  std::size_t commands = 0;
  std::uint64_t macs = 0;
};

/// Tensor store plus SRAM ledger for one NPU.
class Executor {
 public:
  explicit Executor(const Program& p, ExecOptions opts = {}, const LutEngine& lut = default_lut_engine())
      : prog_(p), opts_(opts), lut_(lut), sram_(opts.sram_bytes) {}

  void bind(const std::string& id, Value v) {
    const TensorDecl& d = prog_.decl(id);
    if (rows_of(v) != d.rows || cols_of(v) != d.cols) throw ShapeError("bind '" + id + "': shape mismatch");
    if (dtype_of(v) != d.dtype) throw ShapeError("bind '" + id + "': dtype mismatch");
    store_[id] = std::move(v);
    if (d.residence == Residence::SRAM) track(id, d.bytes());
  }

  bool has(const std::string& id) const { return store_.count(id) != 0; }
  const Value& value(const std::string& id) const {
    const auto it = store_.find(id);
    if (it == store_.end()) throw ShapeError("read of unwritten tensor '" + id + "'");
    return it->second;
  }

  void run() {
    for (const auto& i : prog_.code) step(i);
  }

  void step(const Instruction& ins) {
    ++stats_.instructions;
    switch (ins.op) {
      case Opcode::TMATMUL: exec_tmatmul(ins); break;
      case Opcode::MEAN_SQUARE:
      case Opcode::MEAN: exec_reduce(ins); break;
      case Opcode::LUT: exec_lut(ins); break;
      case Opcode::RESCALE: exec_rescale(ins); break;
      case Opcode::MUL:
      case Opcode::ADD: exec_binary(ins); break;
      case Opcode::TRANSPOSE: exec_transpose(ins); break;
      case Opcode::CONVERT: write(ins.out, gather(ins.in0)); break;
      case Opcode::LOAD:
        value(ins.in0.id);
        track(format_view(prog_, ins.in0), storage_bytes(prog_.decl(ins.in0.id).dtype, ins.in0.rows, ins.in0.cols));
        break;
      case Opcode::STORE: value(ins.in0.id); break;
      case Opcode::FREE:
        sram_.free(format_view(prog_, ins.in0));
        sram_.free(ins.in0.id);
        break;
      case Opcode::SYNC: break;
    }
  }

  /// FI32 accumulators of a TMATMUL after bias, dequantization, CWQ and LUT,
  /// before output conversion.
  Fi32Tensor tmatmul_accumulate(const Instruction& ins) {
    Fi32Tensor acc(ins.in0.rows, ins.in1.rows);
    if (opts_.command_wise) {
      for (const Command& c : decompose(ins)) {
        ++stats_.commands;
        accumulate_block(ins, acc, c.row0, c.rows, c.col0, c.cols);
      }
    } else {
      accumulate_block(ins, acc, 0, acc.rows, 0, acc.cols);
    }
    return acc;
  }

  const NumericFlags& flags() const { return flags_; }
  const SramLedger& sram() const { return sram_; }
  const ExecStats& stats() const { return stats_; }

 private:
  void track(const std::string& key, std::size_t bytes) {
    if (opts_.enforce_sram) sram_.alloc(key, bytes);
  }

  Fi32 at(const View& v, std::size_t r, std::size_t c) {
    return read_fi32(value(v.id), v.row0 + r, v.col0 + c, &flags_);
  }

  /// Broadcast read: 1x1, 1xN, Mx1 or full.
  Fi32 bcast(const View& v, std::size_t r, std::size_t c) {
    return at(v, v.rows == 1 ? 0 : r, v.cols == 1 ? 0 : c);
  }

  Fi32Tensor gather(const View& v) {
    Fi32Tensor t(v.rows, v.cols);
    for (std::size_t r = 0; r < v.rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) t.at(r, c) = at(v, r, c);
    return t;
  }

  void write(const View& v, const Fi32Tensor& src) {
    const TensorDecl& d = prog_.decl(v.id);
    auto it = store_.find(v.id);
    if (it == store_.end()) {
      Value blank = detail::blank_value(d.dtype, d.rows, d.cols);
      if (auto* t = std::get_if<IntTensor>(&blank)) {
        // New integer tensors get one power-of-two scale sized to the first write.
        double mx = 0.0;
        for (const Fi32& x : src.data) mx = std::max(mx, std::fabs(fi32_to_real(x)));
        const Fi32 s = fi32_from_real(std::ldexp(1.0, detail::pow2_scale_exp(mx, t->max_code())));
        std::fill(t->scale.begin(), t->scale.end(), s);
      }
      it = store_.emplace(v.id, std::move(blank)).first;
      created_.insert(v.id);
      if (d.residence == Residence::SRAM) track(v.id, d.bytes());
    }
    Value& dst = it->second;
    if (auto* f = std::get_if<Fi32Tensor>(&dst)) {
      for (std::size_t r = 0; r < v.rows; ++r)
        for (std::size_t c = 0; c < v.cols; ++c) f->at(v.row0 + r, v.col0 + c) = src.at(r, c);
    } else if (auto* m = std::get_if<MxTensor>(&dst)) {
      detail::write_mx(*m, v, src, &flags_);
    } else {
      auto& t = std::get<IntTensor>(dst);
      if (created_.count(v.id)) detail::grow_int_rows(t, v, src);
      detail::write_int(t, v, src, &flags_);
    }
  }

  /// Integer codes and LSB exponent of one 32-element reduction block.
  struct Block {
    std::array<std::int32_t, kMxBlock> q{};
    std::size_t n = 0;
    int lsb = 0;
  };

  static Block fetch(const Value& t, std::size_t r, std::size_t c0, std::size_t n) {
    Block b;
    b.n = n;
    if (const auto* m = std::get_if<MxTensor>(&t)) {
      if (m->axis != SharedAxis::Cols) throw ShapeError("MX matmul operands share exponents along the reduction axis");
      b.lsb = m->lsb_exp(r, c0);
      for (std::size_t i = 0; i < n; ++i) b.q[i] = m->elem(r, c0 + i);
    } else if (const auto* it = std::get_if<IntTensor>(&t)) {
      for (std::size_t i = 0; i < n; ++i) b.q[i] = it->centered(r, c0 + i);
    } else {
      throw ShapeError("FI32 is not a matmul operand type");
    }
    return b;
  }

  void accumulate_block(const Instruction& ins, Fi32Tensor& acc, std::size_t r0, std::size_t nr, std::size_t c0,
                        std::size_t nc) {
    const Value& A = value(ins.in0.id);
    const Value& Bv = value(ins.in1.id);
    const auto* ai = std::get_if<IntTensor>(&A);
    const auto* bi = std::get_if<IntTensor>(&Bv);
    const Fi32 one = fi32_from_real(1.0);
    const std::size_t K = ins.in0.cols;
    std::vector<Block> arow(ceil_div(K, kMxBlock));
    for (std::size_t i = r0; i < r0 + nr; ++i) {
      const std::size_t ar = ins.in0.row0 + i;
      for (std::size_t kb = 0; kb < arow.size(); ++kb) {
        const std::size_t k0 = kb * kMxBlock;
        arow[kb] = fetch(A, ar, ins.in0.col0 + k0, std::min<std::size_t>(kMxBlock, K - k0));
      }
      for (std::size_t j = c0; j < c0 + nc; ++j) {
        const std::size_t br = ins.in1.row0 + j;
        Fi32 s = Fi32::zero();
        for (std::size_t kb = 0; kb < arow.size(); ++kb) {
          const Block& a = arow[kb];
          const Block b = fetch(Bv, br, ins.in1.col0 + kb * kMxBlock, a.n);
          const Fi32 d = dot32(std::span<const std::int32_t>(a.q.data(), a.n), a.lsb,
                               std::span<const std::int32_t>(b.q.data(), b.n), b.lsb, &flags_);
          s = fi32_align_add(s, d, &flags_);
        }
        stats_.macs += K;
        if (ins.bias) s = fi32_align_add(s, bcast(*ins.bias, i, j), &flags_);
        if (ai && ai->scale[ar] != one) s = fi32_mul(s, ai->scale[ar], &flags_);
        if (bi && bi->scale[br] != one) s = fi32_mul(s, bi->scale[br], &flags_);
        if (ins.cwq) s = fi32_mul(s, at(*ins.cwq, 0, j), &flags_);
        // Partial sums are in the output domain: chained K splits add scaled results.
        if (ins.psum) s = fi32_align_add(s, at(*ins.psum, i, j), &flags_);
        if (ins.lut.exp) s = lut_.evaluate(LutFunc::EXP, s, RangeCheck::Datapath, &flags_);
        if (ins.lut.rlu) s = lut_.evaluate(LutFunc::SILU, s, RangeCheck::Datapath, &flags_);
        acc.at(i, j) = s;
      }
    }
  }

  void exec_tmatmul(const Instruction& ins) { write(ins.out, tmatmul_accumulate(ins)); }

  /// Row reduction through a balanced adder tree over 32-element block sums.
  void exec_reduce(const Instruction& ins) {
    const bool square = ins.op == Opcode::MEAN_SQUARE;
    const View& v = ins.in0;
    const Fi32 inv_n = fi32_from_real(1.0 / static_cast<double>(v.cols));
    Fi32Tensor out(v.rows, 1);
    std::vector<Fi32> parts;
    for (std::size_t r = 0; r < v.rows; ++r) {
      parts.clear();
      for (std::size_t c0 = 0; c0 < v.cols; c0 += kMxBlock) {
        std::vector<Fi32> lane;
        for (std::size_t c = c0; c < std::min(v.cols, c0 + kMxBlock); ++c) {
          const Fi32 x = at(v, r, c);
          lane.push_back(square ? fi32_mul(x, x, &flags_) : x);
        }
        parts.push_back(tree_sum(lane));
      }
      Fi32 s = tree_sum(parts);
      if (square) s = fi32_mul(s, inv_n, &flags_);
      if (ins.bias) s = fi32_align_add(s, bcast(*ins.bias, r, 0), &flags_);
      out.at(r, 0) = s;
    }
    write(ins.out, out);
  }

  Fi32 tree_sum(std::vector<Fi32> v) {
    if (v.empty()) return Fi32::zero();
    while (v.size() > 1) {
      std::vector<Fi32> next;
      for (std::size_t i = 0; i + 1 < v.size(); i += 2) next.push_back(fi32_align_add(v[i], v[i + 1], &flags_));
      if (v.size() % 2) next.push_back(v.back());
      v.swap(next);
    }
    return v[0];
  }

  Fi32 apply_lut_flags(const LutFlags& f, Fi32 x) {
    if (f.exp) return lut_.evaluate(LutFunc::EXP, x, RangeCheck::Datapath, &flags_);
    if (f.rlu) return lut_.evaluate(LutFunc::SILU, x, RangeCheck::Datapath, &flags_);
    if (f.inv && f.sqr) return lut_.evaluate(LutFunc::ISQR, x, RangeCheck::Datapath, &flags_);
    if (f.inv) return lut_.evaluate(LutFunc::RECIP, x, RangeCheck::Datapath, &flags_);
    // SQR alone: x * x^-1/2
    return fi32_mul(x, lut_.evaluate(LutFunc::ISQR, x, RangeCheck::Datapath, &flags_), &flags_);
  }

  void exec_lut(const Instruction& ins) {
    Fi32Tensor t = gather(ins.in0);
    for (Fi32& x : t.data) x = apply_lut_flags(ins.lut, x);
    write(ins.out, t);
  }

  void exec_rescale(const Instruction& ins) {
    Fi32Tensor t = gather(ins.in0);
    for (std::size_t r = 0; r < t.rows; ++r) {
      const Fi32 s = bcast(ins.in1, r, 0);
      for (std::size_t c = 0; c < t.cols; ++c) {
        Fi32 x = fi32_mul(t.at(r, c), s, &flags_);
        if (ins.cwq) x = fi32_mul(x, at(*ins.cwq, 0, c), &flags_);
        t.at(r, c) = x;
      }
    }
    write(ins.out, t);
  }

  void exec_binary(const Instruction& ins) {
    Fi32Tensor t = gather(ins.in0);
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        const Fi32 y = bcast(ins.in1, r, c);
        t.at(r, c) = ins.op == Opcode::MUL ? fi32_mul(t.at(r, c), y, &flags_) : fi32_align_add(t.at(r, c), y, &flags_);
      }
    }
    write(ins.out, t);
  }

  void exec_transpose(const Instruction& ins) {
    const Fi32Tensor t = gather(ins.in0);
    Fi32Tensor u(t.cols, t.rows);
    for (std::size_t r = 0; r < t.rows; ++r)
      for (std::size_t c = 0; c < t.cols; ++c) u.at(c, r) = t.at(r, c);
    write(ins.out, u);
  }

  const Program& prog_;
  ExecOptions opts_;
  const LutEngine& lut_;
  SramLedger sram_;
  std::map<std::string, Value> store_;
  std::set<std::string> created_;
  NumericFlags flags_;
  ExecStats stats_;
};

// ---------------------------------------------------------------------------
// Shadow execution
// ---------------------------------------------------------------------------

/// Real-arithmetic twin of Executor: the same program evaluated in double
/// precision with exact nonlinear functions and no rounding on writes. Function
/// results are clamped to the FI32 range, as in the datapath.
class ShadowExecutor {
 public:
  explicit ShadowExecutor(const Program& p) : prog_(p) {}

  void bind(const std::string& id, RealTensor t) {
    const TensorDecl& d = prog_.decl(id);
    if (t.rows != d.rows || t.cols != d.cols) throw ShapeError("bind '" + id + "': shape mismatch");
    store_[id] = std::move(t);
  }
  void bind(const std::string& id, const Value& v) { bind(id, to_real(v)); }

  bool has(const std::string& id) const { return store_.count(id) != 0; }
  const RealTensor& value(const std::string& id) const {
    const auto it = store_.find(id);
    if (it == store_.end()) throw ShapeError("read of unwritten tensor '" + id + "'");
    return it->second;
  }

  void run() {
    for (const auto& i : prog_.code) step(i);
  }

  void step(const Instruction& ins) {
    switch (ins.op) {
      case Opcode::TMATMUL: exec_tmatmul(ins); break;
      case Opcode::MEAN_SQUARE:
      case Opcode::MEAN: exec_reduce(ins); break;
      case Opcode::LUT: {
        RealTensor t = gather(ins.in0);
        for (double& x : t.data) x = apply(ins.lut, x);
        write(ins.out, t);
        break;
      }
      case Opcode::RESCALE: {
        RealTensor t = gather(ins.in0);
        for (std::size_t r = 0; r < t.rows; ++r)
          for (std::size_t c = 0; c < t.cols; ++c)
            t.at(r, c) *= bcast(ins.in1, r, 0) * (ins.cwq ? at(*ins.cwq, 0, c) : 1.0);
        write(ins.out, t);
        break;
      }
      case Opcode::MUL:
      case Opcode::ADD: {
        RealTensor t = gather(ins.in0);
        for (std::size_t r = 0; r < t.rows; ++r) {
          for (std::size_t c = 0; c < t.cols; ++c) {
            const double y = bcast(ins.in1, r, c);
            t.at(r, c) = ins.op == Opcode::MUL ? t.at(r, c) * y : t.at(r, c) + y;
          }
        }
        write(ins.out, t);
        break;
      }
      case Opcode::TRANSPOSE: {
        const RealTensor t = gather(ins.in0);
        RealTensor u(t.cols, t.rows);
        for (std::size_t r = 0; r < t.rows; ++r)
          for (std::size_t c = 0; c < t.cols; ++c) u.at(c, r) = t.at(r, c);
        write(ins.out, u);
        break;
      }
      case Opcode::CONVERT: write(ins.out, gather(ins.in0)); break;
      case Opcode::LOAD:
      case Opcode::STORE: value(ins.in0.id); break;
      case Opcode::FREE:
      case Opcode::SYNC: break;
    }
  }

 private:
  static double clamp_fi32(double x) {
    const double m = fi32_to_real(Fi32::max_value());
    return std::clamp(x, -m, m);
  }

  static double apply(const LutFlags& f, double x) {
    long double y;
    if (f.exp) y = lut_reference(LutFunc::EXP, x);
    else if (f.rlu) y = lut_reference(LutFunc::SILU, x);
    else if (f.inv && f.sqr) y = lut_reference(LutFunc::ISQR, x);
    else if (f.inv) y = lut_reference(LutFunc::RECIP, x);
    else y = std::sqrt(static_cast<long double>(x));
    if (std::isnan(static_cast<double>(y))) throw RangeError("shadow lut: input outside the function domain");
    return clamp_fi32(static_cast<double>(y));
  }

  double at(const View& v, std::size_t r, std::size_t c) const {
    return value(v.id).at(v.row0 + r, v.col0 + c);
  }
  double bcast(const View& v, std::size_t r, std::size_t c) const {
    return at(v, v.rows == 1 ? 0 : r, v.cols == 1 ? 0 : c);
  }

  RealTensor gather(const View& v) const {
    RealTensor t(v.rows, v.cols);
    for (std::size_t r = 0; r < v.rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) t.at(r, c) = at(v, r, c);
    return t;
  }

  void write(const View& v, const RealTensor& src) {
    auto it = store_.find(v.id);
    if (it == store_.end()) {
      const TensorDecl& d = prog_.decl(v.id);
      it = store_.emplace(v.id, RealTensor(d.rows, d.cols)).first;
    }
    for (std::size_t r = 0; r < v.rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) it->second.at(v.row0 + r, v.col0 + c) = src.at(r, c);
  }

  void exec_tmatmul(const Instruction& ins) {
    const RealTensor a = gather(ins.in0), b = gather(ins.in1);
    RealTensor o(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t j = 0; j < b.rows; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
        if (ins.bias) s += bcast(*ins.bias, i, j);
        if (ins.cwq) s *= at(*ins.cwq, 0, j);
        if (ins.psum) s += at(*ins.psum, i, j);
        if (ins.lut.any()) s = apply(ins.lut, s);
        o.at(i, j) = s;
      }
    }
    write(ins.out, o);
  }

  void exec_reduce(const Instruction& ins) {
    const RealTensor t = gather(ins.in0);
    RealTensor o(t.rows, 1);
    for (std::size_t r = 0; r < t.rows; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < t.cols; ++c) s += ins.op == Opcode::MEAN_SQUARE ? t.at(r, c) * t.at(r, c) : t.at(r, c);
      if (ins.op == Opcode::MEAN_SQUARE) s /= static_cast<double>(t.cols);
      if (ins.bias) s += bcast(*ins.bias, r, 0);
      o.at(r, 0) = s;
    }
    write(ins.out, o);
  }

  const Program& prog_;
  std::map<std::string, RealTensor> store_;
};

}  // namespace trigen
