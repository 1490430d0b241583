#pragma once

#include <string>
#include <vector>

#include "mafia/image.hpp"

namespace mafia {

// Code-size accounting: where the bytes of an instrumented image went,
// measured against the uninstrumented baseline of the same program.
//
// Buckets, all recomputed from the final image rather than trusted from
// pass counters:
//   signatures   in-line reference words, outside generated dispatchers
//   patch_loads  ldp instructions, outside generated dispatchers
//   patch_table  the patch value section appended after text
//   nops         forwarding-isolation fillers (from the pass counter; a nop
//                in the final text is indistinguishable from a source nop)
//   dispatchers  whole generated dispatcher bodies, references included
struct OverheadReport {
  u32 baseline_text_bytes = 0;
  u32 final_text_bytes = 0;

  u32 signature_bytes = 0;
  u32 patch_load_bytes = 0;
  u32 patch_table_bytes = 0;
  u32 nop_bytes = 0;
  u32 dispatcher_bytes = 0;
  u32 relaxed_branch_bytes = 0;  // always 0: every transfer reaches its target

  struct FuncRow {
    std::string name;
    u32 baseline_bytes = 0;  // 0 for functions that only exist instrumented
    u32 final_bytes = 0;
    u32 patch_bytes = 0;  // patch table entries for edges leaving this function
    double factor = 0.0;  // (final + patches) / baseline, 0 when no baseline
  };
  std::vector<FuncRow> funcs;

  // Total growth: everything the loader must place, over the baseline text.
  double ratio() const {
    if (!baseline_text_bytes) return 0.0;
    return double(final_text_bytes + patch_table_bytes) /
           double(baseline_text_bytes);
  }
};

OverheadReport measure_overheads(const ProgramImage& baseline,
                                 const ProgramImage& built);

// Human-readable table for the CLI.
std::string format_overheads(const OverheadReport& r);

}  // namespace mafia
