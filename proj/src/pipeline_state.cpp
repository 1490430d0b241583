#include "mafia/pipeline_state.hpp"

namespace mafia {

namespace {

u8 alu_op_for(const Instruction& ins) {
  switch (ins.mnemonic) {
    case Mnemonic::lui:
    case Mnemonic::auipc:
    case Mnemonic::addi:
    case Mnemonic::add:
    case Mnemonic::jal:
    case Mnemonic::jalr:
    case Mnemonic::mafia_jal:
    case Mnemonic::mafia_jalr:
    case Mnemonic::lb:
    case Mnemonic::lh:
    case Mnemonic::lw:
    case Mnemonic::lbu:
    case Mnemonic::lhu:
    case Mnemonic::sb:
    case Mnemonic::sh:
    case Mnemonic::sw:
      return ALU_ADD;
    case Mnemonic::sub: return ALU_SUB;
    case Mnemonic::slli:
    case Mnemonic::sll: return ALU_SLL;
    case Mnemonic::slti:
    case Mnemonic::slt: return ALU_SLT;
    case Mnemonic::sltiu:
    case Mnemonic::sltu: return ALU_SLTU;
    case Mnemonic::xori:
    case Mnemonic::xor_: return ALU_XOR;
    case Mnemonic::srli:
    case Mnemonic::srl: return ALU_SRL;
    case Mnemonic::srai:
    case Mnemonic::sra: return ALU_SRA;
    case Mnemonic::ori:
    case Mnemonic::or_: return ALU_OR;
    case Mnemonic::andi:
    case Mnemonic::and_: return ALU_AND;
    case Mnemonic::beq:
    case Mnemonic::mafia_beq: return ALU_CMP_EQ;
    case Mnemonic::bne:
    case Mnemonic::mafia_bne: return ALU_CMP_NE;
    case Mnemonic::blt:
    case Mnemonic::mafia_blt: return ALU_CMP_LT;
    case Mnemonic::bge:
    case Mnemonic::mafia_bge: return ALU_CMP_GE;
    case Mnemonic::bltu:
    case Mnemonic::mafia_bltu: return ALU_CMP_LTU;
    case Mnemonic::bgeu:
    case Mnemonic::mafia_bgeu: return ALU_CMP_GEU;
    case Mnemonic::mret: return ALU_MRET;
    case Mnemonic::mafia_ldp: return ALU_LDP;
    case Mnemonic::ecall: return ALU_ECALL;
    case Mnemonic::ebreak: return ALU_EBREAK;
    case Mnemonic::fence: return ALU_NONE;
  }
  return ALU_NONE;
}

u8 imm_sel_for(const Instruction& ins) {
  switch (ins.kind) {
    case InstrKind::store: return IMM_S;
    case InstrKind::branch:
    case InstrKind::mafia_branch: return IMM_B;
    case InstrKind::jal:
    case InstrKind::mafia_jal: return IMM_UJ;
    default:
      switch (ins.mnemonic) {
        case Mnemonic::lui:
        case Mnemonic::auipc: return IMM_UJ;
        default: return IMM_I;
      }
  }
}

}  // namespace

DecodedControls derive_pipeline_state(const Instruction& ins,
                                      const FwdContext& ctx) {
  DecodedControls d;

  switch (ins.mnemonic) {
    case Mnemonic::lui:
      d.opa_sel = OPA_ZERO;
      d.opb_sel = OPB_IMM;
      break;
    case Mnemonic::auipc:
    case Mnemonic::jal:
    case Mnemonic::mafia_jal:
      d.opa_sel = OPA_PC;
      d.opb_sel = OPB_IMM;
      break;
    case Mnemonic::fence:
    case Mnemonic::ecall:
    case Mnemonic::ebreak:
    case Mnemonic::mret:
    case Mnemonic::mafia_ldp:
      d.opa_sel = OPA_ZERO;
      d.opb_sel = OPB_IMM;
      break;
    default:
      d.opa_sel = OPA_RS1;
      d.opb_sel = reads_rs2(ins) ? OPB_RS2 : OPB_IMM;
      break;
  }
  d.imm_sel = imm_sel_for(ins);

  // Forwarding is resolved in decode against the single execute-stage
  // producer; loads and the patch loader never forward.
  if (ctx.has_prev && ctx.prev_writes_in_execute && ctx.prev_rd != 0) {
    if (reads_rs1(ins) && ins.rs1 == ctx.prev_rd) d.fwd_a = FWD_EX;
    if (reads_rs2(ins) && ins.rs2 == ctx.prev_rd) d.fwd_b = FWD_EX;
  }

  PostDecodeSignals& s = d.sig;
  s.alu_op = alu_op_for(ins);
  s.lsu_read = ins.kind == InstrKind::load || ins.kind == InstrKind::ldp;
  s.lsu_write = ins.kind == InstrKind::store;
  s.rd = ins.rd;

  WbCtrl wb;
  switch (ins.kind) {
    case InstrKind::alu:
    case InstrKind::nop:
      wb.rf_we = true;
      wb.wb_sel = WB_ALU;
      break;
    case InstrKind::load:
      wb.rf_we = true;
      wb.wb_sel = WB_LOAD;
      switch (ins.mnemonic) {
        case Mnemonic::lb: wb.lsu_size = LSU_B; break;
        case Mnemonic::lh: wb.lsu_size = LSU_H; break;
        case Mnemonic::lw: wb.lsu_size = LSU_W; break;
        case Mnemonic::lbu: wb.lsu_size = LSU_BU; break;
        case Mnemonic::lhu: wb.lsu_size = LSU_HU; break;
        default: break;
      }
      break;
    case InstrKind::store:
      switch (ins.mnemonic) {
        case Mnemonic::sb: wb.lsu_size = LSU_B; break;
        case Mnemonic::sh: wb.lsu_size = LSU_H; break;
        case Mnemonic::sw: wb.lsu_size = LSU_W; break;
        default: break;
      }
      break;
    case InstrKind::branch:
    case InstrKind::mafia_branch:
      wb.ct_en = true;
      wb.ct_cond = true;
      wb.ct_verify = ins.kind == InstrKind::mafia_branch;
      break;
    case InstrKind::jal:
    case InstrKind::mafia_jal:
      wb.rf_we = true;
      wb.wb_sel = WB_PC4;
      wb.ct_en = true;
      wb.ct_verify = ins.kind == InstrKind::mafia_jal;
      break;
    case InstrKind::jalr:
    case InstrKind::mafia_jalr:
      wb.rf_we = true;
      wb.wb_sel = WB_PC4;
      wb.ct_en = true;
      wb.ct_indirect = true;
      wb.ct_verify = ins.kind == InstrKind::mafia_jalr;
      break;
    case InstrKind::ldp:
      wb.lsu_size = LSU_W;
      break;
    case InstrKind::system:
      if (ins.mnemonic == Mnemonic::mret) wb.ct_en = true;
      break;
  }
  s.wb = wb.pack();

  const u32 w = ins.word;
  u64 sigma = 0;
  sigma |= u64((w >> 15) & 31);            // rs1 raw
  sigma |= u64((w >> 20) & 31) << 5;       // rs2 raw
  sigma |= u64((w >> 7) & 31) << 10;       // rd raw
  sigma |= u64(d.opa_sel & 7) << 15;
  sigma |= u64(d.opb_sel & 7) << 18;
  sigma |= u64(d.imm_sel & 3) << 21;
  sigma |= u64(d.fwd_a & 3) << 23;
  sigma |= u64(d.fwd_b & 3) << 25;
  sigma |= u64(s.alu_op & 0x7F) << 27;
  sigma |= u64(s.lsu_read) << 34;
  sigma |= u64(s.lsu_write) << 35;
  sigma |= u64(s.wb & 0x3FF) << 36;
  sigma |= (u64((w >> 25) & 0x7F) << 3 | u64((w >> 12) & 7)) << 46;
  d.sigma = sigma;
  return d;
}

}  // namespace mafia
