// RV32I subset plus the MAFIA extension instructions.
//
// Extension encodings (this project's convention, kept inside the RISC-V
// custom opcode space):
//   mafia.beq/bne/blt/bge/bltu/bgeu  custom-0 (0001011), B-type, funct3 as base
//   mafia.jalr                       custom-0, funct3=010, I-type
//   mafia.ldp                        custom-0, funct3=011, 20-bit unsigned imm
//                                    split imm[19:8]=w[31:20], imm[7:3]=w[19:15],
//                                    imm[2:0]=w[11:9], w[8:7]=00
//   mafia.jal                        custom-1 (0101011), J-type
//
// Verification variants (mafia.b*/mafia.jal/mafia.jalr) are followed in the
// instruction stream by one 32-bit reference word which is fetched as data,
// never decoded.
#pragma once

#include <optional>
#include <string>

#include "mafia/common.hpp"

namespace mafia {

enum class Mnemonic : u8 {
  lui, auipc, jal, jalr,
  beq, bne, blt, bge, bltu, bgeu,
  lb, lh, lw, lbu, lhu, sb, sh, sw,
  addi, slti, sltiu, xori, ori, andi, slli, srli, srai,
  add, sub, sll, slt, sltu, xor_, srl, sra, or_, and_,
  fence, ecall, ebreak, mret,
  mafia_beq, mafia_bne, mafia_blt, mafia_bge, mafia_bltu, mafia_bgeu,
  mafia_jal, mafia_jalr, mafia_ldp,
};

enum class InstrKind : u8 {
  alu, load, store, branch, jal, jalr,
  mafia_branch, mafia_jal, mafia_jalr, ldp,
  nop, system,
};

const char* mnemonic_name(Mnemonic m);

struct Instruction {
  Mnemonic mnemonic{};
  InstrKind kind{};
  u8 rd = 0;
  u8 rs1 = 0;
  u8 rs2 = 0;
  i32 imm = 0;   // sign-extended; mafia.ldp keeps its unsigned 20-bit word offset here
  u32 word = 0;  // encoding this instruction was decoded from / encoded to

  bool is_control_flow() const {
    switch (kind) {
      case InstrKind::branch:
      case InstrKind::jal:
      case InstrKind::jalr:
      case InstrKind::mafia_branch:
      case InstrKind::mafia_jal:
      case InstrKind::mafia_jalr:
        return true;
      default:
        return mnemonic == Mnemonic::mret;
    }
  }
  bool is_verification() const {
    return kind == InstrKind::mafia_branch || kind == InstrKind::mafia_jal ||
           kind == InstrKind::mafia_jalr;
  }
  // Size in the instruction stream: verification instructions own their
  // in-line reference word.
  u32 stream_bytes() const { return is_verification() ? 8 : 4; }
};

// Encoding never fails for a well-formed Instruction; throws ToolError on
// out-of-range immediates.
u32 encode(const Instruction& ins);

// Decoding is total: unknown or malformed words yield nullopt (the
// illegal-instruction marker).
std::optional<Instruction> decode(u32 word);

// Builds an Instruction from fields and encodes it. Checks immediate ranges.
Instruction make_instr(Mnemonic m, u8 rd, u8 rs1, u8 rs2, i32 imm);

// ABI register name ("t0", "a0", ...) to index; nullopt when unknown.
std::optional<u8> reg_from_name(const std::string& name);
const char* reg_name(u8 idx);

// True when the instruction writes rd with a value produced in the execute
// stage (forwardable). Loads produce in writeback and are never forwardable.
bool writes_in_execute(const Instruction& ins);

// Registers the instruction actually reads through the operand ports.
bool reads_rs1(const Instruction& ins);
bool reads_rs2(const Instruction& ins);

}  // namespace mafia
