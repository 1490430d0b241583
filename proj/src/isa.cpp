#include "mafia/isa.hpp"

#include <array>
#include <cstring>

namespace mafia {

namespace {

enum class Fmt : u8 { R, I, Ishift, S, B, U, J, Sys, LdpFmt };

struct EncInfo {
  Mnemonic m;
  Fmt fmt;
  u32 opcode;
  u32 funct3;
  u32 funct7;  // also the fixed word for Fmt::Sys
  const char* name;
};

constexpr u32 kOpcLui = 0x37, kOpcAuipc = 0x17, kOpcJal = 0x6F, kOpcJalr = 0x67;
constexpr u32 kOpcBranch = 0x63, kOpcLoad = 0x03, kOpcStore = 0x23;
constexpr u32 kOpcOpImm = 0x13, kOpcOp = 0x33, kOpcFence = 0x0F, kOpcSystem = 0x73;
constexpr u32 kOpcCustom0 = 0x0B, kOpcCustom1 = 0x2B;

const std::array<EncInfo, 49> kEncTable = {{
    {Mnemonic::lui, Fmt::U, kOpcLui, 0, 0, "lui"},
    {Mnemonic::auipc, Fmt::U, kOpcAuipc, 0, 0, "auipc"},
    {Mnemonic::jal, Fmt::J, kOpcJal, 0, 0, "jal"},
    {Mnemonic::jalr, Fmt::I, kOpcJalr, 0, 0, "jalr"},
    {Mnemonic::beq, Fmt::B, kOpcBranch, 0, 0, "beq"},
    {Mnemonic::bne, Fmt::B, kOpcBranch, 1, 0, "bne"},
    {Mnemonic::blt, Fmt::B, kOpcBranch, 4, 0, "blt"},
    {Mnemonic::bge, Fmt::B, kOpcBranch, 5, 0, "bge"},
    {Mnemonic::bltu, Fmt::B, kOpcBranch, 6, 0, "bltu"},
    {Mnemonic::bgeu, Fmt::B, kOpcBranch, 7, 0, "bgeu"},
    {Mnemonic::lb, Fmt::I, kOpcLoad, 0, 0, "lb"},
    {Mnemonic::lh, Fmt::I, kOpcLoad, 1, 0, "lh"},
    {Mnemonic::lw, Fmt::I, kOpcLoad, 2, 0, "lw"},
    {Mnemonic::lbu, Fmt::I, kOpcLoad, 4, 0, "lbu"},
    {Mnemonic::lhu, Fmt::I, kOpcLoad, 5, 0, "lhu"},
    {Mnemonic::sb, Fmt::S, kOpcStore, 0, 0, "sb"},
    {Mnemonic::sh, Fmt::S, kOpcStore, 1, 0, "sh"},
    {Mnemonic::sw, Fmt::S, kOpcStore, 2, 0, "sw"},
    {Mnemonic::addi, Fmt::I, kOpcOpImm, 0, 0, "addi"},
    {Mnemonic::slti, Fmt::I, kOpcOpImm, 2, 0, "slti"},
    {Mnemonic::sltiu, Fmt::I, kOpcOpImm, 3, 0, "sltiu"},
    {Mnemonic::xori, Fmt::I, kOpcOpImm, 4, 0, "xori"},
    {Mnemonic::ori, Fmt::I, kOpcOpImm, 6, 0, "ori"},
    {Mnemonic::andi, Fmt::I, kOpcOpImm, 7, 0, "andi"},
    {Mnemonic::slli, Fmt::Ishift, kOpcOpImm, 1, 0x00, "slli"},
    {Mnemonic::srli, Fmt::Ishift, kOpcOpImm, 5, 0x00, "srli"},
    {Mnemonic::srai, Fmt::Ishift, kOpcOpImm, 5, 0x20, "srai"},
    {Mnemonic::add, Fmt::R, kOpcOp, 0, 0x00, "add"},
    {Mnemonic::sub, Fmt::R, kOpcOp, 0, 0x20, "sub"},
    {Mnemonic::sll, Fmt::R, kOpcOp, 1, 0x00, "sll"},
    {Mnemonic::slt, Fmt::R, kOpcOp, 2, 0x00, "slt"},
    {Mnemonic::sltu, Fmt::R, kOpcOp, 3, 0x00, "sltu"},
    {Mnemonic::xor_, Fmt::R, kOpcOp, 4, 0x00, "xor"},
    {Mnemonic::srl, Fmt::R, kOpcOp, 5, 0x00, "srl"},
    {Mnemonic::sra, Fmt::R, kOpcOp, 5, 0x20, "sra"},
    {Mnemonic::or_, Fmt::R, kOpcOp, 6, 0x00, "or"},
    {Mnemonic::and_, Fmt::R, kOpcOp, 7, 0x00, "and"},
    {Mnemonic::fence, Fmt::I, kOpcFence, 0, 0, "fence"},
    {Mnemonic::ecall, Fmt::Sys, kOpcSystem, 0, 0x00000073u, "ecall"},
    {Mnemonic::ebreak, Fmt::Sys, kOpcSystem, 0, 0x00100073u, "ebreak"},
    {Mnemonic::mret, Fmt::Sys, kOpcSystem, 0, 0x30200073u, "mret"},
    {Mnemonic::mafia_beq, Fmt::B, kOpcCustom0, 0, 0, "mafia.beq"},
    {Mnemonic::mafia_bne, Fmt::B, kOpcCustom0, 1, 0, "mafia.bne"},
    {Mnemonic::mafia_blt, Fmt::B, kOpcCustom0, 4, 0, "mafia.blt"},
    {Mnemonic::mafia_bge, Fmt::B, kOpcCustom0, 5, 0, "mafia.bge"},
    {Mnemonic::mafia_bltu, Fmt::B, kOpcCustom0, 6, 0, "mafia.bltu"},
    {Mnemonic::mafia_bgeu, Fmt::B, kOpcCustom0, 7, 0, "mafia.bgeu"},
    {Mnemonic::mafia_jal, Fmt::J, kOpcCustom1, 0, 0, "mafia.jal"},
    {Mnemonic::mafia_jalr, Fmt::I, kOpcCustom0, 2, 0, "mafia.jalr"},
}};

const EncInfo& enc_info(Mnemonic m) {
  for (const auto& e : kEncTable)
    if (e.m == m) return e;
  // mafia.ldp is the only mnemonic outside the table (dedicated format).
  static const EncInfo ldp{Mnemonic::mafia_ldp, Fmt::LdpFmt, kOpcCustom0, 3, 0,
                           "mafia.ldp"};
  return ldp;
}

InstrKind kind_of(Mnemonic m, u8 rd, u8 rs1, i32 imm) {
  switch (m) {
    case Mnemonic::lui:
    case Mnemonic::auipc:
    case Mnemonic::slti:
    case Mnemonic::sltiu:
    case Mnemonic::xori:
    case Mnemonic::ori:
    case Mnemonic::andi:
    case Mnemonic::slli:
    case Mnemonic::srli:
    case Mnemonic::srai:
    case Mnemonic::add:
    case Mnemonic::sub:
    case Mnemonic::sll:
    case Mnemonic::slt:
    case Mnemonic::sltu:
    case Mnemonic::xor_:
    case Mnemonic::srl:
    case Mnemonic::sra:
    case Mnemonic::or_:
    case Mnemonic::and_:
      return InstrKind::alu;
    case Mnemonic::addi:
      return (rd == 0 && rs1 == 0 && imm == 0) ? InstrKind::nop : InstrKind::alu;
    case Mnemonic::lb:
    case Mnemonic::lh:
    case Mnemonic::lw:
    case Mnemonic::lbu:
    case Mnemonic::lhu:
      return InstrKind::load;
    case Mnemonic::sb:
    case Mnemonic::sh:
    case Mnemonic::sw:
      return InstrKind::store;
    case Mnemonic::beq:
    case Mnemonic::bne:
    case Mnemonic::blt:
    case Mnemonic::bge:
    case Mnemonic::bltu:
    case Mnemonic::bgeu:
      return InstrKind::branch;
    case Mnemonic::jal:
      return InstrKind::jal;
    case Mnemonic::jalr:
      return InstrKind::jalr;
    case Mnemonic::mafia_beq:
    case Mnemonic::mafia_bne:
    case Mnemonic::mafia_blt:
    case Mnemonic::mafia_bge:
    case Mnemonic::mafia_bltu:
    case Mnemonic::mafia_bgeu:
      return InstrKind::mafia_branch;
    case Mnemonic::mafia_jal:
      return InstrKind::mafia_jal;
    case Mnemonic::mafia_jalr:
      return InstrKind::mafia_jalr;
    case Mnemonic::mafia_ldp:
      return InstrKind::ldp;
    case Mnemonic::fence:
    case Mnemonic::ecall:
    case Mnemonic::ebreak:
    case Mnemonic::mret:
      return InstrKind::system;
  }
  return InstrKind::system;
}

void check_range(bool ok, const char* what) {
  if (!ok) throw ToolError(std::string("immediate out of range for ") + what);
}

}  // namespace

const char* mnemonic_name(Mnemonic m) { return enc_info(m).name; }

u32 encode(const Instruction& ins) {
  const EncInfo& e = enc_info(ins.mnemonic);
  const u32 imm = static_cast<u32>(ins.imm);
  switch (e.fmt) {
    case Fmt::R:
      return (e.funct7 << 25) | (u32(ins.rs2) << 20) | (u32(ins.rs1) << 15) |
             (e.funct3 << 12) | (u32(ins.rd) << 7) | e.opcode;
    case Fmt::I:
      check_range(ins.imm >= -2048 && ins.imm <= 2047, e.name);
      return ((imm & 0xFFF) << 20) | (u32(ins.rs1) << 15) | (e.funct3 << 12) |
             (u32(ins.rd) << 7) | e.opcode;
    case Fmt::Ishift:
      check_range(ins.imm >= 0 && ins.imm <= 31, e.name);
      return (e.funct7 << 25) | ((imm & 0x1F) << 20) | (u32(ins.rs1) << 15) |
             (e.funct3 << 12) | (u32(ins.rd) << 7) | e.opcode;
    case Fmt::S:
      check_range(ins.imm >= -2048 && ins.imm <= 2047, e.name);
      return (((imm >> 5) & 0x7F) << 25) | (u32(ins.rs2) << 20) |
             (u32(ins.rs1) << 15) | (e.funct3 << 12) | ((imm & 0x1F) << 7) |
             e.opcode;
    case Fmt::B:
      check_range(ins.imm >= -4096 && ins.imm <= 4094 && (ins.imm & 1) == 0,
                  e.name);
      return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3F) << 25) |
             (u32(ins.rs2) << 20) | (u32(ins.rs1) << 15) | (e.funct3 << 12) |
             (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 1) << 7) | e.opcode;
    case Fmt::U:
      check_range((ins.imm & 0xFFF) == 0, e.name);
      return (imm & 0xFFFFF000u) | (u32(ins.rd) << 7) | e.opcode;
    case Fmt::J:
      check_range(ins.imm >= -(1 << 20) && ins.imm <= (1 << 20) - 2 &&
                      (ins.imm & 1) == 0,
                  e.name);
      return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) |
             (((imm >> 11) & 1) << 20) | (((imm >> 12) & 0xFF) << 12) |
             (u32(ins.rd) << 7) | e.opcode;
    case Fmt::Sys:
      return e.funct7;  // fixed word
    case Fmt::LdpFmt:
      check_range(ins.imm >= 0 && ins.imm <= 0xFFFFF, e.name);
      return (((imm >> 8) & 0xFFF) << 20) | (((imm >> 3) & 0x1F) << 15) |
             (3u << 12) | ((imm & 0x7) << 9) | kOpcCustom0;
  }
  return 0;
}

Instruction make_instr(Mnemonic m, u8 rd, u8 rs1, u8 rs2, i32 imm) {
  Instruction ins;
  ins.mnemonic = m;
  ins.rd = rd & 31;
  ins.rs1 = rs1 & 31;
  ins.rs2 = rs2 & 31;
  ins.imm = imm;
  ins.kind = kind_of(m, ins.rd, ins.rs1, imm);
  ins.word = encode(ins);
  return ins;
}

namespace {

std::optional<Instruction> finish(Mnemonic m, u8 rd, u8 rs1, u8 rs2, i32 imm,
                                  u32 word) {
  Instruction ins;
  ins.mnemonic = m;
  ins.rd = rd;
  ins.rs1 = rs1;
  ins.rs2 = rs2;
  ins.imm = imm;
  ins.kind = kind_of(m, rd, rs1, imm);
  ins.word = word;
  return ins;
}

}  // namespace

std::optional<Instruction> decode(u32 w) {
  const u32 opcode = w & 0x7F;
  const u8 rd = (w >> 7) & 31;
  const u32 funct3 = (w >> 12) & 7;
  const u8 rs1 = (w >> 15) & 31;
  const u8 rs2 = (w >> 20) & 31;
  const u32 funct7 = (w >> 25) & 0x7F;
  const i32 imm_i = static_cast<i32>(sext(w >> 20, 12));
  const i32 imm_s =
      static_cast<i32>(sext(((w >> 25) << 5) | ((w >> 7) & 0x1F), 12));
  const i32 imm_b = static_cast<i32>(
      sext(((w >> 31) << 12) | (((w >> 7) & 1) << 11) |
               (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1),
           13));
  const i32 imm_u = static_cast<i32>(w & 0xFFFFF000u);
  const i32 imm_j = static_cast<i32>(
      sext(((w >> 31) << 20) | (((w >> 12) & 0xFF) << 12) |
               (((w >> 20) & 1) << 11) | (((w >> 21) & 0x3FF) << 1),
           21));

  switch (opcode) {
    case kOpcLui:
      return finish(Mnemonic::lui, rd, 0, 0, imm_u, w);
    case kOpcAuipc:
      return finish(Mnemonic::auipc, rd, 0, 0, imm_u, w);
    case kOpcJal:
      return finish(Mnemonic::jal, rd, 0, 0, imm_j, w);
    case kOpcJalr:
      if (funct3 != 0) return std::nullopt;
      return finish(Mnemonic::jalr, rd, rs1, 0, imm_i, w);
    case kOpcBranch: {
      Mnemonic m;
      switch (funct3) {
        case 0: m = Mnemonic::beq; break;
        case 1: m = Mnemonic::bne; break;
        case 4: m = Mnemonic::blt; break;
        case 5: m = Mnemonic::bge; break;
        case 6: m = Mnemonic::bltu; break;
        case 7: m = Mnemonic::bgeu; break;
        default: return std::nullopt;
      }
      return finish(m, 0, rs1, rs2, imm_b, w);
    }
    case kOpcLoad: {
      Mnemonic m;
      switch (funct3) {
        case 0: m = Mnemonic::lb; break;
        case 1: m = Mnemonic::lh; break;
        case 2: m = Mnemonic::lw; break;
        case 4: m = Mnemonic::lbu; break;
        case 5: m = Mnemonic::lhu; break;
        default: return std::nullopt;
      }
      return finish(m, rd, rs1, 0, imm_i, w);
    }
    case kOpcStore: {
      Mnemonic m;
      switch (funct3) {
        case 0: m = Mnemonic::sb; break;
        case 1: m = Mnemonic::sh; break;
        case 2: m = Mnemonic::sw; break;
        default: return std::nullopt;
      }
      return finish(m, 0, rs1, rs2, imm_s, w);
    }
    case kOpcOpImm:
      switch (funct3) {
        case 0: return finish(Mnemonic::addi, rd, rs1, 0, imm_i, w);
        case 2: return finish(Mnemonic::slti, rd, rs1, 0, imm_i, w);
        case 3: return finish(Mnemonic::sltiu, rd, rs1, 0, imm_i, w);
        case 4: return finish(Mnemonic::xori, rd, rs1, 0, imm_i, w);
        case 6: return finish(Mnemonic::ori, rd, rs1, 0, imm_i, w);
        case 7: return finish(Mnemonic::andi, rd, rs1, 0, imm_i, w);
        case 1:
          if (funct7 != 0) return std::nullopt;
          return finish(Mnemonic::slli, rd, rs1, 0, static_cast<i32>(rs2), w);
        case 5:
          if (funct7 == 0x00)
            return finish(Mnemonic::srli, rd, rs1, 0, static_cast<i32>(rs2), w);
          if (funct7 == 0x20)
            return finish(Mnemonic::srai, rd, rs1, 0, static_cast<i32>(rs2), w);
          return std::nullopt;
      }
      return std::nullopt;
    case kOpcOp: {
      Mnemonic m;
      if (funct7 == 0x00) {
        switch (funct3) {
          case 0: m = Mnemonic::add; break;
          case 1: m = Mnemonic::sll; break;
          case 2: m = Mnemonic::slt; break;
          case 3: m = Mnemonic::sltu; break;
          case 4: m = Mnemonic::xor_; break;
          case 5: m = Mnemonic::srl; break;
          case 6: m = Mnemonic::or_; break;
          case 7: m = Mnemonic::and_; break;
          default: return std::nullopt;
        }
      } else if (funct7 == 0x20) {
        if (funct3 == 0) m = Mnemonic::sub;
        else if (funct3 == 5) m = Mnemonic::sra;
        else return std::nullopt;
      } else {
        return std::nullopt;
      }
      return finish(m, rd, rs1, rs2, 0, w);
    }
    case kOpcFence:
      if (funct3 != 0) return std::nullopt;
      return finish(Mnemonic::fence, rd, rs1, 0, imm_i, w);
    case kOpcSystem:
      if (w == 0x00000073u) return finish(Mnemonic::ecall, 0, 0, 0, 0, w);
      if (w == 0x00100073u) return finish(Mnemonic::ebreak, 0, 0, 0, 0, w);
      if (w == 0x30200073u) return finish(Mnemonic::mret, 0, 0, 0, 0, w);
      return std::nullopt;
    case kOpcCustom0: {
      switch (funct3) {
        case 0: return finish(Mnemonic::mafia_beq, 0, rs1, rs2, imm_b, w);
        case 1: return finish(Mnemonic::mafia_bne, 0, rs1, rs2, imm_b, w);
        case 4: return finish(Mnemonic::mafia_blt, 0, rs1, rs2, imm_b, w);
        case 5: return finish(Mnemonic::mafia_bge, 0, rs1, rs2, imm_b, w);
        case 6: return finish(Mnemonic::mafia_bltu, 0, rs1, rs2, imm_b, w);
        case 7: return finish(Mnemonic::mafia_bgeu, 0, rs1, rs2, imm_b, w);
        case 2: return finish(Mnemonic::mafia_jalr, rd, rs1, 0, imm_i, w);
        case 3: {
          if ((w >> 7 & 3) != 0) return std::nullopt;
          i32 imm = static_cast<i32>((((w >> 20) & 0xFFF) << 8) |
                                     (((w >> 15) & 0x1F) << 3) | ((w >> 9) & 7));
          return finish(Mnemonic::mafia_ldp, 0, 0, 0, imm, w);
        }
      }
      return std::nullopt;
    }
    case kOpcCustom1:
      return finish(Mnemonic::mafia_jal, rd, 0, 0, imm_j, w);
  }
  return std::nullopt;
}

namespace {
const char* kRegNames[32] = {
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0",
    "a1",   "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3", "s4", "s5",
    "s6",   "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};
}

std::optional<u8> reg_from_name(const std::string& name) {
  for (u8 i = 0; i < 32; i++)
    if (name == kRegNames[i]) return i;
  if (name == "fp") return 8;
  if (name.size() >= 2 && name[0] == 'x') {
    int v = 0;
    for (size_t i = 1; i < name.size(); i++) {
      if (name[i] < '0' || name[i] > '9') return std::nullopt;
      v = v * 10 + (name[i] - '0');
    }
    if (v < 32) return static_cast<u8>(v);
  }
  return std::nullopt;
}

const char* reg_name(u8 idx) { return kRegNames[idx & 31]; }

bool writes_in_execute(const Instruction& ins) {
  switch (ins.kind) {
    case InstrKind::alu:
    case InstrKind::nop:
    case InstrKind::jal:
    case InstrKind::jalr:
    case InstrKind::mafia_jal:
    case InstrKind::mafia_jalr:
      return ins.rd != 0;
    default:
      return false;
  }
}

bool reads_rs1(const Instruction& ins) {
  switch (ins.mnemonic) {
    case Mnemonic::lui:
    case Mnemonic::auipc:
    case Mnemonic::jal:
    case Mnemonic::mafia_jal:
    case Mnemonic::mafia_ldp:
    case Mnemonic::fence:
    case Mnemonic::ecall:
    case Mnemonic::ebreak:
    case Mnemonic::mret:
      return false;
    default:
      return true;
  }
}

bool reads_rs2(const Instruction& ins) {
  switch (ins.kind) {
    case InstrKind::branch:
    case InstrKind::mafia_branch:
    case InstrKind::store:
      return true;
    case InstrKind::alu:
      // R-type only; immediates use the imm operand port.
      switch (ins.mnemonic) {
        case Mnemonic::add:
        case Mnemonic::sub:
        case Mnemonic::sll:
        case Mnemonic::slt:
        case Mnemonic::sltu:
        case Mnemonic::xor_:
        case Mnemonic::srl:
        case Mnemonic::sra:
        case Mnemonic::or_:
        case Mnemonic::and_:
          return true;
        default:
          return false;
      }
    default:
      return false;
  }
}

}  // namespace mafia
