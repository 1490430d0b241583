// The 64-bit pipeline state (sigma): the decode-stage output vector that the
// CACFI monitor chains into the runtime signature. The same derivation runs
// in the simulator's decode stage and in the offline signature generator, so
// reference signatures and runtime signatures agree by construction.
//
// Layout (LSB first), 23 + 4 + 7 + 2 + 10 + 10 + 8 = 64 bits:
//   [4:0]    rs1 index        raw word[19:15]
//   [9:5]    rs2 index        raw word[24:20]
//   [14:10]  rd index         raw word[11:7]
//   [17:15]  operand-A select 0=rs1 1=pc 2=zero
//   [20:18]  operand-B select 0=rs2 1=imm
//   [22:21]  immediate-type select 0=I 1=S 2=B 3=U/J
//   [24:23]  forward-A mux    00=register file 01=from execute
//   [26:25]  forward-B mux
//   [33:27]  ALU op
//   [34]     LSU read enable
//   [35]     LSU write enable
//   [45:36]  write-back control, see WbCtrl
//   [55:46]  immediate field bits: raw word[31:25] | word[14:12]
//   [63:56]  zero padding
//
// The raw register-index and immediate-field slots cover word bits [31:7];
// the decoded control slots depend on the opcode bits [6:0]. Every bit of an
// instruction word therefore influences sigma.
#pragma once

#include "mafia/isa.hpp"

namespace mafia {

// ALU operation codes (7-bit slot).
enum AluOp : u8 {
  ALU_NONE = 0,
  ALU_ADD, ALU_SUB, ALU_SLL, ALU_SLT, ALU_SLTU, ALU_XOR, ALU_SRL, ALU_SRA,
  ALU_OR, ALU_AND,
  ALU_CMP_EQ, ALU_CMP_NE, ALU_CMP_LT, ALU_CMP_GE, ALU_CMP_LTU, ALU_CMP_GEU,
  ALU_MRET, ALU_LDP, ALU_ECALL, ALU_EBREAK,
};

enum OpASel : u8 { OPA_RS1 = 0, OPA_PC = 1, OPA_ZERO = 2 };
enum OpBSel : u8 { OPB_RS2 = 0, OPB_IMM = 1 };
enum ImmSel : u8 { IMM_I = 0, IMM_S = 1, IMM_B = 2, IMM_UJ = 3 };
enum FwdSel : u8 { FWD_NONE = 0, FWD_EX = 1 };

enum WbSel : u8 { WB_ALU = 0, WB_LOAD = 1, WB_PC4 = 2 };
enum LsuSize : u8 { LSU_B = 0, LSU_H = 1, LSU_W = 2, LSU_BU = 3, LSU_HU = 4 };

// Write-back / downstream control, 10 bits inside sigma.
struct WbCtrl {
  bool rf_we = false;      // bit 0
  u8 wb_sel = WB_ALU;      // bits 2:1
  u8 lsu_size = LSU_B;     // bits 5:3
  bool ct_en = false;      // bit 6: control transfer
  bool ct_cond = false;    // bit 7: conditional (taken from ALU compare)
  bool ct_indirect = false;// bit 8: target = operand A + imm
  bool ct_verify = false;  // bit 9: verification variant (in-line reference)

  u32 pack() const {
    return u32(rf_we) | (u32(wb_sel & 3) << 1) | (u32(lsu_size & 7) << 3) |
           (u32(ct_en) << 6) | (u32(ct_cond) << 7) | (u32(ct_indirect) << 8) |
           (u32(ct_verify) << 9);
  }
};

// Post-decode control signals that travel to execute and write-back. The CSI
// monitor carries a duplicate of this bundle per downstream stage and
// compares it against the original every cycle. The write register index is
// part of the bundle: it is consumed in write-back.
struct PostDecodeSignals {
  u8 alu_op = ALU_NONE;
  bool lsu_read = false;
  bool lsu_write = false;
  u32 wb = 0;  // packed WbCtrl
  u8 rd = 0;

  bool operator==(const PostDecodeSignals&) const = default;
};

// Forwarding context: the instruction occupying execute when this one leaves
// decode. Absent at basic-block entries reached through a control transfer
// (the pipeline gap guarantees no forwarding) and after stalls.
struct FwdContext {
  bool has_prev = false;
  bool prev_writes_in_execute = false;  // loads excluded: they produce in WB
  u8 prev_rd = 0;

  static FwdContext none() { return {}; }
  static FwdContext after(const Instruction& prev) {
    return {true, writes_in_execute(prev), prev.rd};
  }
};

// Decoded control view of one instruction, including the sigma word.
struct DecodedControls {
  u64 sigma = 0;
  u8 opa_sel = OPA_RS1;
  u8 opb_sel = OPB_RS2;
  u8 imm_sel = IMM_I;
  u8 fwd_a = FWD_NONE;
  u8 fwd_b = FWD_NONE;
  PostDecodeSignals sig;
};

// Pure function of (instruction, forwarding context).
DecodedControls derive_pipeline_state(const Instruction& ins,
                                      const FwdContext& ctx);

// Sigma field extraction helpers (used by tests and the fault harness).
namespace sigma_bits {
constexpr int kFwdALo = 23, kFwdBLo = 25;
constexpr int kAluLo = 27;
constexpr int kLsuRead = 34, kLsuWrite = 35;
constexpr int kWbLo = 36;
constexpr int kImmLo = 46;
constexpr u64 kPaddingMask = 0xFF00000000000000ull;
}  // namespace sigma_bits

}  // namespace mafia
