// Assembly front end and the instruction-list form used by the passes.
//
// A Module is a list of functions, each a list of items. An item is one
// instruction (a verification instruction carries its inline reference word
// with it) or one literal data word. Control transfers hold symbolic targets:
// an item index inside the same function, or a callee name for cross-function
// jumps. Addresses are assigned by relayout(), so passes may insert or
// replace items freely and lower the result back to a binary image.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mafia/image.hpp"
#include "mafia/isa.hpp"

namespace mafia {

struct AsmItem {
  bool is_data = false;
  Instruction ins{};  // valid when !is_data
  u32 data = 0;       // valid when is_data
  u32 ref = 0;        // inline reference word, used when ins.is_verification()
  int target = -1;    // intra-function target item index (branches, local jal)
  std::string callee;               // cross-function jal target
  bool has_reloc = false;           // hi/lo address fixup on this instruction
  RelocKind reloc_kind{};
  std::string reloc_symbol;
  i32 reloc_addend = 0;
  std::string icall_proto;  // nonempty: tagged indirect call awaiting dispatch
  u32 addr = 0;             // assigned by relayout()

  u32 size() const { return is_data ? 4 : ins.stream_bytes(); }
};

struct AsmFunction {
  std::string name;
  bool secured = false;
  std::string proto;  // normalized, e.g. "i32(i32,ptr)"
  int handler_irq = -1;
  u32 addr = 0;  // assigned by relayout()
  u32 end = 0;
  std::vector<AsmItem> items;
};

struct Module {
  std::vector<AsmFunction> funcs;

  AsmFunction* find(const std::string& name);
  const AsmFunction* find(const std::string& name) const;
};

// "i32(ptr,ptr)" from return tag and argument tags. Throws on unknown tags.
std::string normalize_proto(const std::string& ret, const std::vector<std::string>& args);

Module parse_asm(const std::string& source, const std::string& filename = "<input>");

// Assign item and function addresses from text_base onward.
void relayout(Module& m, u32 text_base = memmap::kTextBase);

// Encode a module into an image. `carry` propagates configuration and
// bookkeeping (signature config, stats, dispatcher table, interrupt vector,
// flags) from the image a pass lifted.
ProgramImage lower(const Module& m, const ProgramImage* carry = nullptr);

// Decode an image back into a module. Requires a well-formed image: every
// text word is either a decodable instruction, a recorded data word, or the
// reference word of the verification instruction before it.
Module lift(const ProgramImage& img);

// parse + lower, recording the uninstrumented size for overhead accounting.
ProgramImage assemble(const std::string& source, const SigConfig& sig, u64 boot_iv,
                      const std::string& filename = "<input>");

}  // namespace mafia
