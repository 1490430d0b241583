#include "mafia/core.hpp"

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "mafia/isa.hpp"
#include "mafia/pipeline_state.hpp"

namespace mafia {

const char* trap_cause_name(TrapCause c) {
  switch (c) {
    case TrapCause::signature_mismatch: return "signature_mismatch";
    case TrapCause::csi_mismatch: return "csi_mismatch";
    case TrapCause::illegal_instruction: return "illegal_instruction";
    case TrapCause::watchdog_expiry: return "watchdog_expiry";
  }
  return "?";
}

const char* fault_target_name(FaultTarget t) {
  switch (t) {
    case FaultTarget::imem_word: return "imem_word";
    case FaultTarget::pipeline_state_bit: return "pipeline_state_bit";
    case FaultTarget::post_decode_signal: return "post_decode_signal";
    case FaultTarget::sig_register: return "sig_register";
    case FaultTarget::patch_register: return "patch_register";
    case FaultTarget::reference_word: return "reference_word";
  }
  return "?";
}

FaultRegion fault_region(FaultTarget t) {
  switch (t) {
    case FaultTarget::imem_word:
    case FaultTarget::reference_word: return FaultRegion::pre_decode;
    case FaultTarget::pipeline_state_bit: return FaultRegion::sigma;
    case FaultTarget::post_decode_signal: return FaultRegion::post_decode;
    case FaultTarget::sig_register: return FaultRegion::sig_reg;
    case FaultTarget::patch_register: return FaultRegion::patch_reg;
  }
  return FaultRegion::pre_decode;
}

const char* fault_region_name(FaultRegion r) {
  switch (r) {
    case FaultRegion::pre_decode: return "pre_decode";
    case FaultRegion::sigma: return "sigma";
    case FaultRegion::post_decode: return "post_decode";
    case FaultRegion::sig_reg: return "sig_reg";
    case FaultRegion::patch_reg: return "patch_reg";
  }
  return "?";
}

std::string FaultSpec::describe() const {
  std::string s = fault_target_name(target);
  if (target == FaultTarget::imem_word || target == FaultTarget::reference_word)
    s += "@" + hex32(addr);
  s += ".bit" + std::to_string(bit);
  if (target == FaultTarget::post_decode_signal)
    s += stage == 0 ? ".ex" : ".wb";
  if (occurrence)
    s += " at " + hex32(at_addr) + "#" + std::to_string(occurrence);
  else if (cycle)
    s += " at cycle " + std::to_string(cycle);
  return s;
}

namespace {

// ---- sigma field view -------------------------------------------------
//
// Execute re-derives everything it needs from the sigma latch, so a flipped
// sigma bit changes both the chained signature and the behavior it describes.

struct SigmaView {
  u64 s;
  u8 rs1() const { return u8(s & 31); }
  u8 rs2() const { return u8((s >> 5) & 31); }
  u8 rd_raw() const { return u8((s >> 10) & 31); }
  u8 opa_sel() const { return u8((s >> 15) & 7); }
  u8 opb_sel() const { return u8((s >> 18) & 7); }
  u8 imm_sel() const { return u8((s >> 21) & 3); }
  u8 fwd_a() const { return u8((s >> 23) & 3); }
  u8 fwd_b() const { return u8((s >> 25) & 3); }
  u32 w31_25() const { return u32((s >> 49) & 0x7F); }
  u32 w14_12() const { return u32((s >> 46) & 7); }
};

WbCtrl unpack_wb(u32 p) {
  WbCtrl w;
  w.rf_we = p & 1;
  w.wb_sel = u8((p >> 1) & 3);
  w.lsu_size = u8((p >> 3) & 7);
  w.ct_en = (p >> 6) & 1;
  w.ct_cond = (p >> 7) & 1;
  w.ct_indirect = (p >> 8) & 1;
  w.ct_verify = (p >> 9) & 1;
  return w;
}

PostDecodeSignals extract_bundle(u64 sigma) {
  PostDecodeSignals b;
  b.alu_op = u8((sigma >> sigma_bits::kAluLo) & 0x7F);
  b.lsu_read = (sigma >> sigma_bits::kLsuRead) & 1;
  b.lsu_write = (sigma >> sigma_bits::kLsuWrite) & 1;
  b.wb = u32((sigma >> sigma_bits::kWbLo) & 0x3FF);
  b.rd = u8((sigma >> 10) & 0x1F);
  return b;
}

void flip_bundle_bit(PostDecodeSignals& b, u32 bit) {
  if (bit < 7) b.alu_op ^= u8(1u << bit);
  else if (bit == 7) b.lsu_read = !b.lsu_read;
  else if (bit == 8) b.lsu_write = !b.lsu_write;
  else if (bit < 19) b.wb ^= 1u << (bit - 9);
  else if (bit < 24) b.rd ^= u8(1u << (bit - 19));
}

// Immediate reconstruction from the raw-field slots of sigma. ct_en
// disambiguates J from U inside the shared select value.
u32 sigma_imm(const SigmaView& v, bool ct_en) {
  const u32 w31_25 = v.w31_25(), w24_20 = v.rs2(), w19_15 = v.rs1();
  const u32 w14_12 = v.w14_12(), w11_7 = v.rd_raw();
  switch (v.imm_sel()) {
    case IMM_I: return sext((w31_25 << 5) | w24_20, 12);
    case IMM_S: return sext((w31_25 << 5) | w11_7, 12);
    case IMM_B: {
      const u32 b12 = w31_25 >> 6, b10_5 = w31_25 & 0x3F;
      const u32 b4_1 = (w11_7 >> 1) & 0xF, b11 = w11_7 & 1;
      return sext((b12 << 12) | (b11 << 11) | (b10_5 << 5) | (b4_1 << 1), 13);
    }
    default: {  // IMM_UJ
      const u32 u20 = (w31_25 << 13) | (w24_20 << 8) | (w19_15 << 3) | w14_12;
      if (!ct_en) return u20 << 12;  // lui/auipc
      const u32 b20 = (u20 >> 19) & 1, b10_1 = (u20 >> 9) & 0x3FF;
      const u32 b11 = (u20 >> 8) & 1, b19_12 = u20 & 0xFF;
      return sext((b20 << 20) | (b19_12 << 12) | (b11 << 11) | (b10_1 << 1), 21);
    }
  }
}

u32 sigma_ldp_off(const SigmaView& v) {
  const u32 imm = (((v.w31_25() << 5) | v.rs2()) << 8) | (v.rs1() << 3) |
                  ((v.rd_raw() >> 2) & 7);
  return imm;
}

u32 alu_eval(u8 op, u32 a, u32 b) {
  switch (op) {
    case ALU_ADD: return a + b;
    case ALU_SUB: return a - b;
    case ALU_SLL: return a << (b & 31);
    case ALU_SLT: return u32(i32(a) < i32(b));
    case ALU_SLTU: return u32(a < b);
    case ALU_XOR: return a ^ b;
    case ALU_SRL: return a >> (b & 31);
    case ALU_SRA: return u32(i32(a) >> (b & 31));
    case ALU_OR: return a | b;
    case ALU_AND: return a & b;
    case ALU_CMP_EQ: return u32(a == b);
    case ALU_CMP_NE: return u32(a != b);
    case ALU_CMP_LT: return u32(i32(a) < i32(b));
    case ALU_CMP_GE: return u32(i32(a) >= i32(b));
    case ALU_CMP_LTU: return u32(a < b);
    case ALU_CMP_GEU: return u32(a >= b);
    default: return 0;
  }
}

// ---- pipeline latches -------------------------------------------------

struct IfId {
  bool valid = false;
  bool fault = false;  // fetch outside executable memory
  u32 pc = 0;
  u32 word = 0;
  std::optional<Instruction> ins;
};

struct IdEx {
  bool valid = false;
  bool illegal = false;  // traps on reaching execute
  u32 pc = 0;
  u64 sigma = 0;
  PostDecodeSignals orig, dup;
  u32 rs1_val = 0, rs2_val = 0;
  u64 saved_sig = 0;  // restore point for mispredicted conditionals
  bool have_saved = false;
  Instruction ins{};  // trace and hazard bookkeeping only
};

struct ExWb {
  bool valid = false;
  u32 pc = 0;
  PostDecodeSignals orig, dup;
  u32 value = 0;  // ALU result, or the link for control transfers
  u32 load_value = 0;
  Instruction ins{};
};

struct LiveFault {
  FaultSpec s;
  u64 fire_at = 0;  // resolved trigger cycle; 0 = not armed yet
  u32 seen = 0;     // issue count for occurrence triggers
  bool spent = false;
};

struct Pending {
  bool trap = false;
  TrapCause cause{};
  u32 trap_pc = 0;
  bool halt = false;
  u32 exit_code = 0;
  bool flush = false;
  bool redirect = false;
  u32 target = 0;
  bool set_sig = false;
  u64 sig = 0;
  bool deliver = false;
  int line = -1;
  u64 ctx = 0;
  u32 epc = 0;
  bool id_redirect = false;
  u32 id_target = 0;
};

struct Machine {
  const ProgramImage& img;
  const RunConfig& cfg;

  std::vector<u32> text;
  std::vector<u8> ram;
  u32 regs[32] = {};
  u32 pc;

  u64 sig = 0, patch = 0, context = 0;
  u32 epc = 0;
  bool irq_active = false;

  IfId ifid;
  IdEx idex;
  ExWb exwb;
  bool fetch_frozen = false;
  u32 fwd_latch = 0;

  u64 cycle = 0;
  u64 instructions = 0, verifications = 0, irqs_delivered = 0;
  u64 cycles_since_verify = 0;
  std::vector<IssueRec> issue_log;

  std::vector<LiveFault> faults;
  std::vector<IrqEvent> sched;
  size_t sched_next = 0;
  std::vector<int> irq_queue;
  u32 handler_addr[size_t(memmap::kIrqLines)] = {};

  std::ofstream trace;
  bool tracing = false;

  Machine(const ProgramImage& im, const RunConfig& c)
      : img(im), cfg(c), text(im.text), ram(memmap::kRamSize, 0), pc(im.entry) {
    if (img.instrumented && !img.has_signatures)
      throw SimError("image is instrumented but carries no signature values");
    regs[2] = memmap::kStackTop;
    sig = sig_mask(img.sig, img.boot_iv);

    for (const auto& f : cfg.faults) {
      switch (f.target) {
        case FaultTarget::imem_word:
        case FaultTarget::reference_word: {
          if (!img.in_text(f.addr) || f.bit > 31)
            throw SimError("fault outside the instruction stream: " + f.describe());
          text[(f.addr - img.text_base) / 4] ^= 1u << f.bit;
          break;
        }
        default: {
          LiveFault lf;
          lf.s = f;
          if (f.occurrence == 0) lf.fire_at = f.cycle;
          faults.push_back(lf);
          break;
        }
      }
    }

    sched = cfg.irqs;
    std::sort(sched.begin(), sched.end(),
              [](const IrqEvent& a, const IrqEvent& b) {
                return a.cycle != b.cycle ? a.cycle < b.cycle : a.line < b.line;
              });
    for (const auto& ev : sched) {
      if (ev.line < 0 || ev.line >= memmap::kIrqLines)
        throw SimError("interrupt line out of range: " + std::to_string(ev.line));
      bool found = false;
      for (const auto& fn : img.functions)
        if (fn.handler_irq == ev.line) {
          handler_addr[size_t(ev.line)] = fn.addr;
          found = true;
        }
      if (!found)
        throw SimError("no handler registered for interrupt line " +
                       std::to_string(ev.line));
    }

    if (!cfg.trace_path.empty()) {
      trace.open(cfg.trace_path);
      if (!trace) throw SimError("cannot open trace file " + cfg.trace_path);
      tracing = true;
    }
  }

  u64 sig_width_mask() const { return img.sig.is64() ? ~0ull : 0xFFFFFFFFull; }

  // ---- memory ----

  bool readable(u32 a) const {
    return (a >= img.text_base && a < img.text_end()) ||
           (a >= img.patch_base() && a < img.patch_base() + img.patches.size()) ||
           (a >= memmap::kRamBase && a < memmap::kRamBase + memmap::kRamSize);
  }

  u8 read_byte(u32 a) const {
    if (a >= memmap::kRamBase && a < memmap::kRamBase + memmap::kRamSize)
      return ram[a - memmap::kRamBase];
    if (a >= img.text_base && a < img.text_end())
      return u8(text[(a - img.text_base) / 4] >> (8 * (a & 3)));
    return img.patches[a - img.patch_base()];
  }

  bool load_mem(u32 addr, u8 size, u32& out) {
    u32 n;
    switch (size) {
      case LSU_B: case LSU_BU: n = 1; break;
      case LSU_H: case LSU_HU: n = 2; break;
      case LSU_W: n = 4; break;
      default: return false;
    }
    if (addr % n != 0) return false;
    for (u32 i = 0; i < n; ++i)
      if (!readable(addr + i)) return false;
    u32 v = 0;
    for (u32 i = 0; i < n; ++i) v |= u32(read_byte(addr + i)) << (8 * i);
    if (size == LSU_B) v = sext(v, 8);
    if (size == LSU_H) v = sext(v, 16);
    out = v;
    return true;
  }

  bool store_mem(u32 addr, u8 size, u32 val) {
    u32 n;
    switch (size) {
      case LSU_B: n = 1; break;
      case LSU_H: n = 2; break;
      case LSU_W: n = 4; break;
      default: return false;
    }
    if (addr % n != 0) return false;
    if (addr < memmap::kRamBase || addr + n > memmap::kRamBase + memmap::kRamSize)
      return false;  // writes outside RAM fault (text is execute/read only)
    for (u32 i = 0; i < n; ++i)
      ram[addr - memmap::kRamBase + i] = u8(val >> (8 * i));
    return true;
  }

  // ---- one cycle ----

  void commit_wb(Pending& p) {
    if (!exwb.valid) return;
    for (auto& lf : faults)
      if (!lf.spent && lf.fire_at == cycle &&
          lf.s.target == FaultTarget::post_decode_signal && lf.s.stage == 1) {
        flip_bundle_bit(exwb.orig, lf.s.bit);
        lf.spent = true;
      }
    if (!(exwb.orig == exwb.dup)) {
      p.trap = true;
      p.cause = TrapCause::csi_mismatch;
      p.trap_pc = exwb.pc;
      return;
    }
    const WbCtrl w = unpack_wb(exwb.orig.wb);
    if (w.rf_we && exwb.orig.rd != 0) {
      regs[exwb.orig.rd] =
          w.wb_sel == WB_LOAD ? exwb.load_value : exwb.value;
    }
    ++instructions;
  }

  void execute(IdEx ex, Pending& p) {
    if (!ex.valid) {
      exwb = ExWb{};  // bubble: nothing moves into write-back
      return;
    }
    if (ex.illegal) {
      p.trap = true;
      p.cause = TrapCause::illegal_instruction;
      p.trap_pc = ex.pc;
      return;
    }
    for (auto& lf : faults)
      if (!lf.spent && lf.fire_at == cycle &&
          lf.s.target == FaultTarget::post_decode_signal && lf.s.stage == 0) {
        flip_bundle_bit(ex.orig, lf.s.bit);
        lf.spent = true;
      }
    if (!(ex.orig == ex.dup)) {
      p.trap = true;
      p.cause = TrapCause::csi_mismatch;
      p.trap_pc = ex.pc;
      return;
    }

    const SigmaView v{ex.sigma};
    const WbCtrl w = unpack_wb(ex.orig.wb);
    const u8 op = ex.orig.alu_op;

    if (op == ALU_ECALL || op == ALU_EBREAK) {
      p.trap = true;
      p.cause = TrapCause::illegal_instruction;
      p.trap_pc = ex.pc;
      return;
    }

    const u32 a_reg = v.fwd_a() == FWD_EX ? fwd_latch : ex.rs1_val;
    const u32 b_reg = v.fwd_b() == FWD_EX ? fwd_latch : ex.rs2_val;
    const u32 opa = v.opa_sel() == OPA_PC    ? ex.pc
                    : v.opa_sel() == OPA_ZERO ? 0
                                              : a_reg;
    const u32 imm = sigma_imm(v, w.ct_en);
    const u32 opb = v.opb_sel() == OPB_IMM ? imm : b_reg;
    const u32 alu_out = alu_eval(op, opa, opb);
    const u32 link = ex.pc + (w.ct_verify ? 8 : 4);

    u32 load_value = 0;

    if (op == ALU_LDP) {
      const u32 off = 4 * sigma_ldp_off(v);
      if (size_t(off) + 4 > img.patches.size()) {
        p.trap = true;
        p.cause = TrapCause::illegal_instruction;
        p.trap_pc = ex.pc;
        return;
      }
      u32 word = 0;
      for (u32 i = 0; i < 4; ++i) word |= u32(img.patches[off + i]) << (8 * i);
      if (img.sig.is64())
        patch = (sigma_ldp_off(v) & 1)
                    ? ((patch & ~0xFFFFFFFFull) | word)
                    : ((patch & 0xFFFFFFFFull) | (u64(word) << 32));
      else
        patch = word;
    } else if (ex.orig.lsu_read) {
      if (!load_mem(opa + imm, w.lsu_size, load_value)) {
        p.trap = true;
        p.cause = TrapCause::illegal_instruction;
        p.trap_pc = ex.pc;
        return;
      }
    } else if (ex.orig.lsu_write) {
      const u32 addr = opa + imm;
      if (addr == memmap::kHaltAddr && w.lsu_size == LSU_W) {
        p.halt = true;
        p.exit_code = b_reg;
      } else if (!store_mem(addr, w.lsu_size, b_reg)) {
        p.trap = true;
        p.cause = TrapCause::illegal_instruction;
        p.trap_pc = ex.pc;
        return;
      }
    }

    if (w.ct_en) {
      if (w.ct_verify) {
        ++verifications;
        const u32 ref_addr = ex.pc + 4;
        if (!img.in_text(ref_addr)) {
          p.trap = true;
          p.cause = TrapCause::illegal_instruction;
          p.trap_pc = ex.pc;
          return;
        }
        const u32 ref = text[(ref_addr - img.text_base) / 4];
        if (sig_verified_part(sig) != ref) {
          p.trap = true;
          p.cause = TrapCause::signature_mismatch;
          p.trap_pc = ex.pc;
          return;
        }
        cycles_since_verify = 0;
      }

      const bool is_mret = op == ALU_MRET;
      bool taken;
      u32 next;
      if (is_mret) {
        if (!irq_active) {
          p.trap = true;
          p.cause = TrapCause::illegal_instruction;
          p.trap_pc = ex.pc;
          return;
        }
        taken = true;
        next = epc;
        p.set_sig = true;
        p.sig = context;
        patch = 0;
        irq_active = false;
        p.redirect = true;
        p.target = next;
        p.flush = true;
      } else if (w.ct_cond) {
        taken = alu_out != 0;
        next = taken ? ex.pc + imm : link;
        if (taken) {
          p.set_sig = true;
          p.sig = (cfg.predictor && ex.have_saved) ? ex.saved_sig
                                                   : sig_update(sig, patch);
        }
        patch = 0;
        if (taken || !cfg.predictor) {
          p.redirect = true;
          p.target = next;
          p.flush = true;
        }
      } else if (w.ct_indirect) {
        taken = true;
        next = (opa + imm) & ~1u;
        p.set_sig = true;
        p.sig = sig_update(sig, patch);
        patch = 0;
        p.redirect = true;
        p.target = next;
        p.flush = true;
      } else {  // direct jump: fetch was steered at decode, only the
                // signature effect resolves here
        taken = true;
        next = ex.pc + imm;
        p.set_sig = true;
        p.sig = sig_update(sig, patch);
        patch = 0;
      }

      if (!is_mret && !irq_active && !irq_queue.empty()) {
        p.deliver = true;
        p.line = irq_queue.front();
        irq_queue.erase(irq_queue.begin());
        p.ctx = p.set_sig ? p.sig : sig;
        p.epc = next;
        p.redirect = true;
        p.target = handler_addr[size_t(p.line)];
        p.flush = true;
      }
      (void)taken;
    }

    ExWb out;
    out.valid = true;
    out.pc = ex.pc;
    out.orig = ex.orig;
    out.dup = ex.dup;
    out.value = w.wb_sel == WB_PC4 ? link : alu_out;
    out.load_value = load_value;
    out.ins = ex.ins;
    exwb = out;
    fwd_latch = alu_out;
  }

  // Decode and issue. Returns the new ID/EX latch; consumes ifid on issue.
  IdEx decode_issue(const IdEx& in_ex, Pending& p) {
    IdEx out;
    if (!ifid.valid) return out;

    if (ifid.fault || !ifid.ins) {
      out.valid = true;
      out.illegal = true;
      out.pc = ifid.pc;
      ifid = IfId{};
      return out;
    }
    const Instruction ins = *ifid.ins;

    // Hazard unit. The producer side reads the execute-stage bundle, so it
    // tracks whatever the hardware actually believes after a fault.
    if (in_ex.valid && !in_ex.illegal) {
      const WbCtrl pw = unpack_wb(in_ex.orig.wb);
      const bool prod_load =
          pw.rf_we && pw.wb_sel == WB_LOAD && in_ex.orig.rd != 0;
      const bool consumer_reads =
          (reads_rs1(ins) && ins.rs1 == in_ex.orig.rd) ||
          (reads_rs2(ins) && ins.rs2 == in_ex.orig.rd);
      if (prod_load && consumer_reads) return out;  // load-use interlock
      if (in_ex.orig.alu_op == ALU_LDP && ins.is_control_flow())
        return out;  // patch value must settle before the transfer issues
    }

    if (cfg.record_issues) issue_log.push_back({cycle, ifid.pc});

    // Issue: trigger occurrence-addressed faults, derive sigma, chain.
    u64 sigma_xor = 0;
    for (auto& lf : faults) {
      if (lf.spent) continue;
      if (lf.s.occurrence && lf.fire_at == 0 && ifid.pc == lf.s.at_addr) {
        if (++lf.seen == lf.s.occurrence) {
          switch (lf.s.target) {
            case FaultTarget::pipeline_state_bit:
              sigma_xor |= 1ull << lf.s.bit;
              lf.spent = true;
              break;
            case FaultTarget::sig_register:
              sig = (sig ^ (1ull << lf.s.bit)) & sig_width_mask();
              lf.spent = true;
              break;
            case FaultTarget::patch_register:
              patch = (patch ^ (1ull << lf.s.bit)) & sig_width_mask();
              lf.spent = true;
              break;
            case FaultTarget::post_decode_signal:
              lf.fire_at = cycle + (lf.s.stage == 0 ? 1 : 2);
              break;
            default:
              lf.spent = true;
              break;
          }
        }
      } else if (!lf.s.occurrence && lf.fire_at == cycle &&
                 lf.s.target == FaultTarget::pipeline_state_bit) {
        sigma_xor |= 1ull << lf.s.bit;
        lf.spent = true;
      }
    }

    FwdContext ctx = (in_ex.valid && !in_ex.illegal)
                         ? FwdContext::after(in_ex.ins)
                         : FwdContext::none();
    const u64 sigma = derive_pipeline_state(ins, ctx).sigma ^ sigma_xor;
    const SigmaView v{sigma};

    out.valid = true;
    out.pc = ifid.pc;
    out.sigma = sigma;
    out.orig = extract_bundle(sigma);
    out.dup = out.orig;
    out.rs1_val = regs[v.rs1()];
    out.rs2_val = regs[v.rs2()];
    out.ins = ins;

    sig = sig_step(img.sig, sig, sigma);

    const WbCtrl w = unpack_wb(out.orig.wb);
    if (w.ct_en && w.ct_cond && cfg.predictor) {
      out.saved_sig = sig_update(sig, patch);
      out.have_saved = true;
    }
    if (w.ct_en && !w.ct_cond && !w.ct_indirect && out.orig.alu_op != ALU_MRET) {
      p.id_redirect = true;
      p.id_target = ifid.pc + sigma_imm(v, true);
    }

    ifid = IfId{};
    return out;
  }

  void fetch() {
    if (ifid.valid || fetch_frozen) return;
    const u32 a = pc;
    if ((a & 3) || !(a >= img.text_base && a < img.text_end())) {
      ifid.valid = true;
      ifid.fault = true;
      ifid.pc = a;
      return;
    }
    ifid.valid = true;
    ifid.pc = a;
    ifid.word = text[(a - img.text_base) / 4];
    ifid.ins = decode(ifid.word);
    pc = a + (ifid.ins && ifid.ins->is_verification() ? 8 : 4);
    if (ifid.ins) {
      const Instruction& i = *ifid.ins;
      const bool cond =
          i.kind == InstrKind::branch || i.kind == InstrKind::mafia_branch;
      const bool indirect =
          i.kind == InstrKind::jalr || i.kind == InstrKind::mafia_jalr;
      if ((cond && !cfg.predictor) || indirect || i.mnemonic == Mnemonic::mret)
        fetch_frozen = true;  // resolves in execute; no speculation past it
    }
  }

  void write_trace() {
    auto slot = [](bool valid, const Instruction& i, u32 at) -> std::string {
      if (!valid) return "-";
      return std::string(mnemonic_name(i.mnemonic)) + "@" + hex32(at);
    };
    trace << "c" << cycle << " pc=" << hex32(pc)
          << " if=" << (ifid.valid ? (ifid.ins ? slot(true, *ifid.ins, ifid.pc)
                                               : "??@" + hex32(ifid.pc))
                                   : "-")
          << " ex=" << slot(idex.valid && !idex.illegal, idex.ins, idex.pc)
          << " wb=" << slot(exwb.valid, exwb.ins, exwb.pc)
          << " sig=" << hex64(sig) << " patch=" << hex64(patch) << "\n";
  }

  RunResult run() {
    RunResult res;
    while (true) {
      ++cycle;

      while (sched_next < sched.size() && sched[sched_next].cycle <= cycle)
        irq_queue.push_back(sched[sched_next++].line);

      for (auto& lf : faults) {
        if (lf.spent || lf.s.occurrence || lf.fire_at != cycle) continue;
        if (lf.s.target == FaultTarget::sig_register) {
          sig = (sig ^ (1ull << lf.s.bit)) & sig_width_mask();
          lf.spent = true;
        } else if (lf.s.target == FaultTarget::patch_register) {
          patch = (patch ^ (1ull << lf.s.bit)) & sig_width_mask();
          lf.spent = true;
        }
      }

      Pending p;
      const IdEx old_idex = idex;

      commit_wb(p);
      if (!p.trap) execute(old_idex, p);

      IdEx new_idex;
      if (!p.trap) {
        new_idex = decode_issue(old_idex, p);
        fetch();
      }

      if (p.trap) {
        res.trap = p.cause;
        res.trap_pc = p.trap_pc;
        break;
      }
      if (p.halt) {
        res.halted = true;
        res.exit_code = p.exit_code;
        break;
      }

      idex = new_idex;
      if (p.deliver) {
        context = p.ctx;
        sig = img.iv_table[size_t(p.line)];
        irq_active = true;
        epc = p.epc;
        pc = p.target;
        ifid = IfId{};
        idex = IdEx{};
        fetch_frozen = false;
        ++irqs_delivered;
      } else {
        if (p.set_sig) sig = p.sig;
        if (p.redirect) {
          pc = p.target;
          ifid = IfId{};
          idex = IdEx{};
          fetch_frozen = false;
        } else if (p.id_redirect) {
          pc = p.id_target;
          // The flushed fetch slot may have been a freeze-class instruction
          // (mret, jalr, unpredicted branch); its freeze dies with it.
          ifid = IfId{};
          fetch_frozen = false;
        }
      }

      if (tracing) write_trace();

      ++cycles_since_verify;
      if (cfg.watchdog && cycles_since_verify > cfg.watchdog) {
        res.trap = TrapCause::watchdog_expiry;
        res.trap_pc = pc;
        break;
      }
      if (cycle >= cfg.max_cycles) {
        res.timed_out = true;
        break;
      }
    }

    res.cycles = cycle;
    res.instructions = instructions;
    res.verifications = verifications;
    res.final_sig = sig;
    res.irqs_delivered = irqs_delivered;
    res.issue_log = std::move(issue_log);
    return res;
  }
};

}  // namespace

RunResult run_program(const ProgramImage& img, const RunConfig& cfg) {
  Machine m(img, cfg);
  return m.run();
}

}  // namespace mafia
