// Program image: the binary container shared by the assembler, the
// instrumentation passes, the signature generator and the simulator.
//
// On disk an image is a directory:
//   text.bin      instruction stream, little-endian 32-bit words
//   patches.bin   patch values, raw bytes (4-byte entries for crc32,
//                 8-byte pairs for cbcmac)
//   manifest.json symbols, functions, relocations, block map, plan, config
//
// The manifest keeps enough structure (relocations, data-word map, call
// annotations) that a pass can lift the image back to an instruction list,
// rewrite it, and lay it out again bit-exactly.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "mafia/common.hpp"
#include "mafia/sigfun.hpp"

namespace mafia {

namespace memmap {
constexpr u32 kTextBase = 0x1000;
constexpr u32 kRamBase = 0x20000;
constexpr u32 kRamSize = 0x10000;  // 64 KiB
constexpr u32 kStackTop = kRamBase + kRamSize;
// A word store to this address halts the machine; the stored value is the
// exit code. Chosen over ecall so that no single-bit instruction corruption
// can fabricate a clean halt.
constexpr u32 kHaltAddr = 0x40000000;
constexpr int kIrqLines = 8;
}  // namespace memmap

enum class RelocKind : u8 { hi20, lo12 };

// Address-materializing fixup: instruction at addr carries the high or low
// part of symbol+addend. Kept in the manifest so relayout can recompute the
// fields after instructions move.
struct Reloc {
  u32 addr = 0;
  RelocKind kind{};
  std::string symbol;
  i32 addend = 0;
};

struct FuncInfo {
  std::string name;
  u32 addr = 0;
  u32 end = 0;  // one past the last word of the function
  bool secured = false;
  std::string proto;    // normalized, e.g. "i32(i32,ptr)"
  int handler_irq = -1;  // >= 0: interrupt handler for that line
};

// Indirect-call site awaiting dispatch rewriting.
struct IcallSite {
  u32 addr = 0;  // address of the tagged jalr
  std::string proto;
};

struct DispatcherInfo {
  std::string name;
  std::string proto;
  u8 reg = 0;  // register holding the target address at the call sites
  std::vector<std::string> members;
  std::vector<std::string> legitimate;  // members whose address is taken
};

struct InstrumentationStats {
  u32 nops = 0;
  u32 verifications = 0;
  u32 patch_loads = 0;
  u32 dispatcher_words = 0;
  u32 relaxed_branches = 0;  // this core never needs branch relaxation
  u32 baseline_text_bytes = 0;
};

enum class PatchEdgeKind : u8 { merge, call, ret, loop, tail };

struct PatchPlanEdge {
  u32 from = 0;  // address of the transferring instruction
  u32 to = 0;    // target block leader (callee entry for call/tail edges)
  u32 slot = 0;  // patch value index in the patches section
  PatchEdgeKind kind{};
};

struct ProgramImage {
  u32 text_base = memmap::kTextBase;
  u32 entry = memmap::kTextBase;
  std::vector<u32> text;
  std::vector<u8> patches;
  SigConfig sig;
  u64 boot_iv = 0;
  std::map<std::string, u32> symbols;
  std::vector<FuncInfo> functions;
  std::vector<u32> block_starts;  // sorted leader addresses (filled by build)
  std::vector<u32> data_words;    // sorted addrs of non-instruction words
  std::vector<Reloc> relocs;
  std::vector<IcallSite> icall_sites;
  std::vector<DispatcherInfo> dispatchers;
  std::vector<u64> iv_table = std::vector<u64>(memmap::kIrqLines, 0);
  std::vector<PatchPlanEdge> patch_plan;
  InstrumentationStats stats;
  bool instrumented = false;    // passes ran
  bool has_signatures = false;  // references and patch values filled

  u32 text_end() const { return text_base + u32(text.size()) * 4; }
  // Patch section base, the value bootstrapped into the patch-base CSR.
  u32 patch_base() const { return (text_end() + 7) & ~7u; }
  bool in_text(u32 addr) const {
    return addr >= text_base && addr < text_end() && (addr & 3) == 0;
  }
  u32 word_at(u32 addr) const;
  void set_word(u32 addr, u32 w);
  bool is_data_word(u32 addr) const;
  const FuncInfo* function_at(u32 addr) const;
  const FuncInfo* function_named(const std::string& name) const;
};

void save_image(const ProgramImage& img, const std::string& dir);
ProgramImage load_image(const std::string& dir);

// Structural checks: alignment, section bounds, symbol/function consistency,
// ldp offsets inside the patches section. Throws ToolError on violation.
void validate_image(const ProgramImage& img);

}  // namespace mafia
