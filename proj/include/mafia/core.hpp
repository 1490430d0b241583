// Cycle-level model of the 4-stage protected core (fetch, decode, execute,
// write-back) with both runtime monitors attached:
//
//  - CACFI: decode derives the 64-bit pipeline state and chains it into the
//    signature register the cycle an instruction issues. Control transfers
//    verify (when carrying an in-line reference), apply the patch register on
//    the taken path, and always clear it. With the static not-taken predictor
//    the fall-through path chains speculatively; a taken resolution restores
//    the signature captured at the branch's issue.
//  - CSI: decode emits the post-decode control bundle twice; the copies ride
//    the pipeline and are compared entering execute and write-back.
//
// Interrupts are accepted only when a control transfer resolves in execute,
// after its verification and patch application. That keeps every handler
// entry and every return point at a block leader, so the handler swap
// (context <- sig, sig <- line IV) and the mret restore stay exact. Nested
// requests are held until mret.
//
// Fault injection is built in: the run configuration carries a list of
// single-bit faults (instruction memory, the sigma latch, the duplicated
// post-decode bundles, the signature and patch registers), each persistent or
// triggered by cycle or by the n-th issue of a given instruction.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mafia/image.hpp"

namespace mafia {

enum class TrapCause : u8 {
  signature_mismatch,  // CACFI: reference word vs running signature
  csi_mismatch,        // CSI: post-decode bundle copies disagree
  illegal_instruction, // undecodable word, bad access, ecall/ebreak
  watchdog_expiry,     // too many cycles without a committed verification
};
const char* trap_cause_name(TrapCause c);

enum class FaultTarget : u8 {
  imem_word,           // persistent: flip a bit of one text word
  pipeline_state_bit,  // transient: flip a sigma bit as an instruction issues
  post_decode_signal,  // transient: flip a bit of one duplicated bundle copy
  sig_register,        // transient: flip a signature register bit
  patch_register,      // transient: flip a patch register bit
  reference_word,      // persistent: flip a bit of an in-line reference
};
const char* fault_target_name(FaultTarget t);

// Which hardware region the fault lands in. Decode-input faults are visible
// to CACFI only, duplicated-bundle faults to CSI only; the harness checks
// that detections respect this split.
enum class FaultRegion : u8 { pre_decode, sigma, post_decode, sig_reg, patch_reg };
FaultRegion fault_region(FaultTarget t);
const char* fault_region_name(FaultRegion r);

// Post-decode bundle bit map (24 bits): [6:0] alu_op, [7] lsu_read,
// [8] lsu_write, [18:9] packed write-back control, [23:19] rd.
constexpr int kPostDecodeBits = 24;

struct FaultSpec {
  FaultTarget target{};
  u32 addr = 0;        // imem_word / reference_word: the text word
  u32 bit = 0;         // bit to flip
  int stage = 0;       // post_decode_signal: 0 = execute copy, 1 = write-back copy
  u64 cycle = 0;       // transient trigger cycle (used when occurrence == 0)
  u32 at_addr = 0;     // occurrence trigger: instruction address and ...
  u32 occurrence = 0;  // ... fire on its n-th issue (1-based); 0 = use cycle
  std::string describe() const;
};

struct IrqEvent {
  u64 cycle = 0;
  int line = 0;
};

struct RunConfig {
  u64 max_cycles = 2'000'000;
  u32 watchdog = 0;        // max cycles between verification commits, 0 = off
  bool predictor = false;  // speculate conditional branches as not taken
  bool record_issues = false;  // keep a log of (cycle, pc) per issued instruction
  std::vector<IrqEvent> irqs;
  std::vector<FaultSpec> faults;
  std::string trace_path;  // nonempty: append a per-cycle trace to this file
};

// One decode-stage issue event, the unit the fault sweeps enumerate over.
struct IssueRec {
  u64 cycle = 0;
  u32 pc = 0;
};

struct RunResult {
  bool halted = false;  // reached the exit store
  u32 exit_code = 0;
  std::optional<TrapCause> trap;
  u32 trap_pc = 0;
  bool timed_out = false;  // hit max_cycles
  u64 cycles = 0;
  u64 instructions = 0;    // committed through write-back
  u64 verifications = 0;   // committed verification checks
  u64 final_sig = 0;       // signature register when the machine stopped
  u64 irqs_delivered = 0;
  std::vector<IssueRec> issue_log;  // filled only when cfg.record_issues

  bool stopped_clean() const { return halted && !trap; }
};

RunResult run_program(const ProgramImage& img, const RunConfig& cfg);

}  // namespace mafia
