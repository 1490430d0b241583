#include "mafia/overhead.hpp"

#include <cstdio>
#include <sstream>

#include "mafia/isa.hpp"

namespace mafia {

namespace {

bool in_dispatcher(const ProgramImage& img, u32 addr) {
  for (const auto& d : img.dispatchers) {
    const FuncInfo* f = img.function_named(d.name);
    if (f && addr >= f->addr && addr < f->end) return true;
  }
  return false;
}

struct CauseBytes {
  u32 signatures = 0;
  u32 patch_loads = 0;
};

// Verification references (and guard jumps that exist only to carry one)
// plus patch loads, in bytes, outside generated dispatchers. Measured on
// both images so hand-written verification code never counts as growth.
CauseBytes count_causes(const ProgramImage& img) {
  CauseBytes c;
  for (const auto& fn : img.functions) {
    if (in_dispatcher(img, fn.addr)) continue;
    for (u32 a = fn.addr; a < fn.end; a += 4) {
      if (img.is_data_word(a)) continue;
      const auto ins = decode(img.word_at(a));
      if (!ins) continue;
      if (ins->is_verification()) c.signatures += 4;
      // A verified jump whose target is the mret right past its own
      // reference does nothing but check; it is the guard in front of the
      // mret, and its 4 bytes are signature cost along with its reference.
      if (ins->mnemonic == Mnemonic::mafia_jal && ins->rd == 0 &&
          ins->imm == 8 && a + 8 < fn.end) {
        const auto tgt = decode(img.word_at(a + 8));
        if (tgt && tgt->mnemonic == Mnemonic::mret) c.signatures += 4;
      }
      if (ins->mnemonic == Mnemonic::mafia_ldp) c.patch_loads += 4;
    }
  }
  return c;
}

}  // namespace

OverheadReport measure_overheads(const ProgramImage& baseline,
                                 const ProgramImage& built) {
  OverheadReport r;
  r.baseline_text_bytes = u32(baseline.text.size()) * 4;
  r.final_text_bytes = u32(built.text.size()) * 4;
  r.patch_table_bytes = u32(built.patches.size());
  r.nop_bytes = built.stats.nops * 4;

  for (const auto& fn : built.functions)
    if (in_dispatcher(built, fn.addr)) r.dispatcher_bytes += fn.end - fn.addr;

  const CauseBytes before = count_causes(baseline);
  const CauseBytes after = count_causes(built);
  r.signature_bytes = after.signatures - before.signatures;
  r.patch_load_bytes = after.patch_loads - before.patch_loads;

  const u32 pb = built.sig.patch_bytes();
  for (const auto& fn : built.functions) {
    OverheadReport::FuncRow row;
    row.name = fn.name;
    row.final_bytes = fn.end - fn.addr;
    if (const FuncInfo* bf = baseline.function_named(fn.name))
      row.baseline_bytes = bf->end - bf->addr;
    for (const auto& pe : built.patch_plan)
      if (pe.from >= fn.addr && pe.from < fn.end) row.patch_bytes += pb;
    if (row.baseline_bytes)
      row.factor = double(row.final_bytes + row.patch_bytes) /
                   double(row.baseline_bytes);
    r.funcs.push_back(std::move(row));
  }
  return r;
}

std::string format_overheads(const OverheadReport& r) {
  std::ostringstream out;
  auto line = [&](const char* what, u32 bytes) {
    out << "  " << what;
    for (size_t n = std::string(what).size(); n < 20; ++n) out << ' ';
    out << bytes << "\n";
  };
  out << "code size:\n";
  line("baseline text", r.baseline_text_bytes);
  line("final text", r.final_text_bytes);
  line("patch table", r.patch_table_bytes);
  out << "growth by cause:\n";
  line("signatures", r.signature_bytes);
  line("patch loads", r.patch_load_bytes);
  line("nops", r.nop_bytes);
  line("dispatchers", r.dispatcher_bytes);
  line("relaxed branches", r.relaxed_branch_bytes);
  out << "per function:\n";
  for (const auto& f : r.funcs) {
    out << "  " << f.name;
    for (size_t n = f.name.size(); n < 20; ++n) out << ' ';
    out << f.baseline_bytes << " -> " << f.final_bytes;
    if (f.patch_bytes) out << " (+" << f.patch_bytes << " patch)";
    if (f.factor > 0.0) {
      char buf[32];
      snprintf(buf, sizeof buf, "  x%.2f", f.factor);
      out << buf;
    }
    out << "\n";
  }
  char buf[64];
  snprintf(buf, sizeof buf, "total: x%.2f of baseline text\n", r.ratio());
  out << buf;
  return out.str();
}

}  // namespace mafia
