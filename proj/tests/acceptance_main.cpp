// Acceptance suite: end-to-end checks of the toolchain, the monitors and
// the fault harness. Each criterion prints one PASS/FAIL line; the binary
// exits nonzero if any failed.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mafia/asm.hpp"
#include "mafia/core.hpp"
#include "mafia/harness.hpp"
#include "mafia/isa.hpp"
#include "mafia/overhead.hpp"
#include "mafia/passes.hpp"
#include "mafia/siggen.hpp"
#include "support.hpp"

using namespace mafia;

namespace {

std::string corpus_source(const std::string& name) {
  const std::string path = std::string(MAFIA_CORPUS_DIR) + "/" + name + ".s";
  std::ifstream in(path);
  if (!in.good()) throw ToolError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ProgramImage build_corpus(const std::string& name, const SigConfig& cfg) {
  return generate_signatures(
      instrument(assemble(corpus_source(name), cfg, 0, name + ".s")));
}

struct Expect {
  bool ok = true;
  std::string why;
  void that(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      why = msg;
    }
  }
};

const std::map<std::string, u32> kCorpusExits = {
    {"calls", 11},     {"fig2b", 3},        {"fig3", 23},
    {"indirect", 42},  {"indirect2", 9},    {"interrupt", 1275},
    {"listing1", 16},  {"loops", 12},       {"memops", 244},
    {"multiexit", 200}, {"recurse", 15},    {"rotated", 55},
    {"straight", 7},   {"verifypin", 1},    {"worstcase", 0},
};

// 1. Every corpus program builds and halts with its pinned exit code, under
// the narrow checksum and the wide cipher signature alike.
bool c1_corpus_exits(Expect& e) {
  for (const SigConfig& cfg : {ts::crc_cfg(), ts::mac_cfg()}) {
    const char* cname = cfg.kind == SigKind::crc32 ? "crc32" : "cbcmac";
    for (const auto& [name, want] : kCorpusExits) {
      ProgramImage img = build_corpus(name, cfg);
      RunResult r = run_program(img, RunConfig{});
      const std::string tag = name + " (" + cname + ")";
      e.that(r.stopped_clean(), tag + " did not halt clean");
      e.that(r.exit_code == want, tag + " exited " + std::to_string(r.exit_code) +
                                      ", want " + std::to_string(want));
      if (name == "interrupt")
        e.that(r.irqs_delivered == 0, tag + " delivered a phantom interrupt");
      if (!e.ok) return false;
    }
  }
  return e.ok;
}

// 2. A pinned loop branch under attack. The baseline encoding of the branch
// is frozen; a stored-bit flip on its verifying replacement and a pipeline
// state flip at its last issue must both die as signature mismatches.
bool c2_pinned_branch_attack(Expect& e) {
  ProgramImage base = assemble(corpus_source("listing1"), ts::crc_cfg(), 0,
                               "listing1.s");
  const FuncInfo* count = base.function_named("count");
  e.that(count != nullptr, "count missing from baseline");
  if (!e.ok) return false;
  e.that(base.word_at(count->addr + 24) == 0xFE0418E3u,
         "loop branch encoding moved; the pinned layout is gone");

  ProgramImage img = build_corpus("listing1", ts::crc_cfg());
  GoldenRun g = golden_run(img, RunConfig{});
  e.that(g.result.exit_code == 16, "golden exit is not 16");

  const FuncInfo* fc = img.function_named("count");
  u32 bne_addr = 0;
  int found = 0;
  for (u32 a = fc->addr; a < fc->end; a += 4) {
    if (img.is_data_word(a)) continue;
    const auto ins = decode(img.word_at(a));
    if (ins && ins->mnemonic == Mnemonic::mafia_bne) {
      bne_addr = a;
      found++;
    }
  }
  e.that(found == 1, "expected exactly one verifying bne in count");
  if (!e.ok) return false;

  u64 issues = 0;
  for (const auto& rec : g.result.issue_log)
    if (rec.pc == bne_addr) issues++;
  e.that(issues == 16, "loop branch issued " + std::to_string(issues) +
                           " times, want 16");

  FaultSpec stored;
  stored.target = FaultTarget::imem_word;
  stored.addr = bne_addr;
  stored.bit = 12;  // funct3 bit: flips the branch sense
  FaultResult r1 = run_fault(img, g, stored);
  e.that(r1.outcome == Outcome::detected_cacfi,
         std::string("stored-bit flip ended as ") + outcome_name(r1.outcome));

  FaultSpec state;
  state.target = FaultTarget::pipeline_state_bit;
  state.bit = 23;  // operand-A forward select
  state.at_addr = bne_addr;
  state.occurrence = 16;  // the final, falling-through resolution
  FaultResult r2 = run_fault(img, g, state);
  e.that(r2.outcome == Outcome::detected_cacfi,
         std::string("state flip ended as ") + outcome_name(r2.outcome));
  return e.ok;
}

// 3. Exhaustive single-bit sweep over the secured part of the PIN check:
// every stored bit, every state bit at every issue, both monitor registers.
// The full monitor suite is armed, watchdog included; a fault that stops
// the machine making progress (a suppressed control-transfer resolution
// wedges fetch) is the watchdog's catch. Nothing may corrupt the result
// silently.
bool c3_pin_sweep(Expect& e) {
  ProgramImage img = build_corpus("verifypin", ts::crc_cfg());
  RunConfig cfg;
  cfg.watchdog = 64;
  GoldenRun g = golden_run(img, cfg);
  e.that(g.result.exit_code == 1, "golden PIN check did not accept");

  SweepSpec spec;  // all six targets, secured only, exhaustive
  std::vector<FaultSpec> faults = enumerate_faults(img, g, spec);
  e.that(faults.size() > 5000, "sweep surface is implausibly small");
  std::vector<FaultResult> results = run_campaign(img, g, faults, 4);
  CampaignSummary s = summarize(results);
  e.that(s.total == faults.size(), "campaign dropped trials");

  u64 corrupting = 0;
  auto it = s.by_outcome.find("silent_corrupting");
  if (it != s.by_outcome.end()) corrupting = it->second;
  e.that(corrupting == 0, std::to_string(corrupting) + " of " +
                              std::to_string(s.total) +
                              " faults corrupted the result silently");
  return e.ok;
}

// 4. The deployed checksum polynomial admits no codeword of weight 4 or
// less within 16 chained blocks, so no combination of up to 4 state-bit
// flips inside that window can cancel. A degenerate polynomial planted in
// the same search must be caught immediately.
bool c4_polynomial_floor(Expect& e) {
  auto res = crc_collision_search(0xFA567D89u, 16, 4);
  e.that(!res.found, "a light codeword exists in the deployed polynomial");
  e.that(res.searched_weight == 4, "search stopped early");

  auto planted = crc_collision_search(0x00000002u, 1, 4);
  e.that(planted.found && planted.weight == 2,
         "planted degenerate polynomial was not flagged at weight 2");
  if (planted.found) {
    SigConfig cfg;
    cfg.poly = 0x00000002u;
    std::vector<u64> msg = {0x5bd4b3e1a2c90f77ull};
    std::vector<u64> mod = msg;
    for (int p : planted.positions) mod[p / 64] ^= 1ull << (63 - (p % 64));
    e.that(sig_chain(cfg, 9, msg) == sig_chain(cfg, 9, mod),
           "reported codeword is not a real collision");
  }
  return e.ok;
}

// 5. The block cipher matches its published vectors, and the chaining
// layer has the properties the monitors rely on: order sensitivity, patch
// involution, and permanent divergence after an error.
bool c5_cipher_and_chaining(Expect& e) {
  struct Kat {
    u64 pt, k0, k1, ct;
  };
  const Kat kats[] = {
      {0x0000000000000000ull, 0x0000000000000000ull, 0x0000000000000000ull,
       0x818665aa0d02dfdaull},
      {0xffffffffffffffffull, 0x0000000000000000ull, 0x0000000000000000ull,
       0x604ae6ca03c20adaull},
      {0x0000000000000000ull, 0xffffffffffffffffull, 0x0000000000000000ull,
       0x9fb51935fc3df524ull},
      {0x0000000000000000ull, 0x0000000000000000ull, 0xffffffffffffffffull,
       0x78a54cbe737bb7efull},
      {0x0123456789abcdefull, 0x0000000000000000ull, 0xfedcba9876543210ull,
       0xae25ad3ca8fa9ccfull},
  };
  for (const auto& k : kats) {
    e.that(prince_encrypt(k.pt, k.k0, k.k1) == k.ct, "cipher vector mismatch");
    e.that(prince_decrypt(k.ct, k.k0, k.k1) == k.pt, "decrypt vector mismatch");
  }

  std::mt19937_64 rng(101);
  for (int i = 0; i < 1000; i++) {
    u64 s = rng(), p = rng();
    e.that(sig_update(sig_update(s, p), p) == s, "patching is not an involution");
  }

  SigConfig crc = ts::crc_cfg();
  int swaps = 0;
  for (u64 a = 0; a < 256; a++)
    for (u64 b = 0; b < 256; b++) {
      if (a == b) continue;
      std::vector<u64> ab = {a, b}, ba = {b, a};
      if (sig_chain(crc, 0, ab) == sig_chain(crc, 0, ba)) swaps++;
    }
  e.that(swaps == 0, "checksum chaining is order-insensitive somewhere");
  SigConfig mac = ts::mac_cfg();
  for (int i = 0; i < 10000; i++) {
    u64 a = rng(), b = rng();
    if (a == b) continue;
    std::vector<u64> ab = {a, b}, ba = {b, a};
    e.that(sig_chain(mac, 1, ab) != sig_chain(mac, 1, ba),
           "cipher chaining is order-insensitive somewhere");
  }

  for (const SigConfig& cfg : {crc, mac}) {
    int preserved = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; i++) {
      u64 good = rng() & (cfg.is64() ? ~0ull : 0xFFFFFFFFull);
      u64 bad = good ^ (1ull << (rng() % (cfg.is64() ? 64 : 32)));
      std::vector<u64> xs(1 + size_t(rng() % 8));
      for (auto& s : xs) s = rng();
      if (sig_chain(cfg, good, xs) != sig_chain(cfg, bad, xs)) preserved++;
    }
    e.that(preserved == trials, "a corrupted signature healed itself");
  }
  return e.ok;
}

// 6. The patch plan of a diamond-shaped function covers exactly the taken
// edges that need a value: the call into it, the jump into the merge, and
// the startup loop. Fall-through edges never carry a patch, and every
// planned source decodes to a real control transfer hitting its target.
bool c6_patch_plan_shape(Expect& e) {
  ProgramImage img = build_corpus("fig3", ts::crc_cfg());
  std::map<PatchEdgeKind, int> hist;
  for (const auto& pe : img.patch_plan) hist[pe.kind]++;
  e.that(img.patch_plan.size() == 3, "plan has " +
                                         std::to_string(img.patch_plan.size()) +
                                         " edges, want 3");
  e.that(hist[PatchEdgeKind::call] == 1, "want exactly one call edge");
  e.that(hist[PatchEdgeKind::merge] == 1, "want exactly one merge edge");
  e.that(hist[PatchEdgeKind::loop] == 1, "want exactly one loop edge");
  e.that(hist[PatchEdgeKind::ret] == 0, "single-exit function planned a ret patch");
  e.that(hist[PatchEdgeKind::tail] == 0, "no tail call exists in this program");

  std::vector<bool> slot_seen(img.patch_plan.size(), false);
  for (const auto& pe : img.patch_plan) {
    const auto ins = decode(img.word_at(pe.from));
    e.that(ins.has_value() && ins->is_control_flow(),
           "planned source is not a control transfer");
    if (!ins) continue;
    const u32 fall = pe.from + ins->stream_bytes();
    e.that(pe.to != fall, "a fall-through edge carries a patch");
    if (ins->kind != InstrKind::jalr && ins->kind != InstrKind::mafia_jalr)
      e.that(pe.to == pe.from + u32(ins->imm),
             "edge target does not match the transfer's taken target");
    e.that(pe.slot < slot_seen.size() && !slot_seen[pe.slot],
           "patch slots are not dense and unique");
    if (pe.slot < slot_seen.size()) slot_seen[pe.slot] = true;
  }
  return e.ok;
}

// 7. The worst case: a one-instruction secured function. Its jump gains a
// patch load and a reference word, and its loop edge needs one table
// entry, so 4 bytes become exactly 16.
bool c7_worst_case_factor(Expect& e) {
  ProgramImage base = assemble(corpus_source("worstcase"), ts::crc_cfg(), 0,
                               "worstcase.s");
  ProgramImage built = build_corpus("worstcase", ts::crc_cfg());
  OverheadReport rep = measure_overheads(base, built);
  bool found = false;
  for (const auto& row : rep.funcs) {
    if (row.name != "f") continue;
    found = true;
    e.that(row.baseline_bytes == 4, "baseline f is not a single instruction");
    e.that(row.final_bytes == 12, "secured f is not load+jump+reference");
    e.that(row.patch_bytes == 4, "loop edge did not get one table entry");
    e.that(row.factor == 4.0, "factor is " + std::to_string(row.factor));
  }
  e.that(found, "function f missing from the report");
  return e.ok;
}

// 8. Size accounting is exact: the final text is the baseline plus the
// attributed causes, byte for byte, and total growth stays within sane
// bounds on every corpus program under both signature functions. The upper
// bound is set by tiny dispatcher-heavy programs under the wide signature,
// where patch loads come in pairs.
bool c8_growth_accounting(Expect& e) {
  for (const SigConfig& cfg : {ts::crc_cfg(), ts::mac_cfg()}) {
    for (const auto& [name, want] : kCorpusExits) {
      (void)want;
      ProgramImage base =
          assemble(corpus_source(name), cfg, 0, name + ".s");
      ProgramImage built = generate_signatures(instrument(base));
      OverheadReport rep = measure_overheads(base, built);
      const u32 explained = rep.baseline_text_bytes + rep.signature_bytes +
                            rep.patch_load_bytes + rep.nop_bytes +
                            rep.dispatcher_bytes + rep.relaxed_branch_bytes;
      e.that(rep.final_text_bytes == explained,
             name + ": " + std::to_string(rep.final_text_bytes) +
                 " final bytes, " + std::to_string(explained) + " explained");
      const double ratio = rep.ratio();
      e.that(ratio >= 1.05 && ratio <= 4.5,
             name + ": growth ratio " + std::to_string(ratio) +
                 " outside [1.05, 4.5]");
      if (!e.ok) return false;
    }
  }
  return e.ok;
}

// 9. Interrupt transparency: land one interrupt at every cycle from 1 to
// past the fault-free end. The exit code and the final signature never
// change, and delivery succeeds up to a cutoff near the end of the run.
bool c9_interrupt_sweep(Expect& e) {
  ProgramImage img = build_corpus("interrupt", ts::crc_cfg());
  RunResult golden = run_program(img, RunConfig{});
  e.that(golden.stopped_clean() && golden.exit_code == 1275,
         "fault-free interrupt workload is broken");

  u64 cmax = 0;
  bool undelivered_seen = false;
  bool monotone = true;
  for (u64 c = 1; c <= golden.cycles + 16; c++) {
    RunConfig cfg;
    cfg.irqs.push_back({c, 0});
    RunResult r = run_program(img, cfg);
    if (!r.stopped_clean() || r.exit_code != 1275) {
      e.that(false, "interrupt at cycle " + std::to_string(c) +
                        " changed the program's result");
      return false;
    }
    if (r.final_sig != golden.final_sig) {
      e.that(false, "interrupt at cycle " + std::to_string(c) +
                        " leaked into the signature");
      return false;
    }
    e.that(r.irqs_delivered <= 1, "interrupt delivered twice");
    if (r.irqs_delivered == 1) {
      if (undelivered_seen) monotone = false;
      cmax = c;
    } else {
      undelivered_seen = true;
    }
  }
  e.that(monotone, "deliverability is not a clean cutoff");
  e.that(cmax + 16 >= golden.cycles,
         "delivery cutoff " + std::to_string(cmax) + " is far from the end (" +
             std::to_string(golden.cycles) + " cycles)");
  return e.ok;
}

// 10. The branch predictor is a pure performance feature: across the whole
// corpus and both signature functions it changes neither the exit code nor
// the final signature nor the number of committed checks, and it never
// costs cycles.
bool c10_predictor_equivalence(Expect& e) {
  for (const SigConfig& cfg : {ts::crc_cfg(), ts::mac_cfg()}) {
    for (const auto& [name, want] : kCorpusExits) {
      (void)want;
      ProgramImage img = build_corpus(name, cfg);
      RunConfig off;
      RunConfig on;
      on.predictor = true;
      RunResult roff = run_program(img, off);
      RunResult ron = run_program(img, on);
      e.that(roff.stopped_clean() && ron.stopped_clean(),
             name + " fails under a predictor setting");
      e.that(ron.exit_code == roff.exit_code, name + ": exit codes differ");
      e.that(ron.final_sig == roff.final_sig, name + ": signatures differ");
      e.that(ron.verifications == roff.verifications,
             name + ": committed check counts differ");
      e.that(ron.cycles <= roff.cycles, name + ": prediction cost cycles");
      if (!e.ok) return false;
    }
  }
  return e.ok;
}

}  // namespace

int main() {
  struct Criterion {
    const char* title;
    bool (*fn)(Expect&);
  };
  const Criterion table[] = {
      {"corpus programs halt with their pinned exit codes under both "
       "signature functions",
       c1_corpus_exits},
      {"single-bit attacks on a pinned loop branch raise signature mismatches",
       c2_pinned_branch_attack},
      {"exhaustive fault sweep of the PIN check yields no silent corruption",
       c3_pin_sweep},
      {"deployed checksum polynomial has no light codeword within 16 blocks",
       c4_polynomial_floor},
      {"cipher known answers and chaining properties hold",
       c5_cipher_and_chaining},
      {"patch plan covers exactly the taken edges of a diamond",
       c6_patch_plan_shape},
      {"smallest secured function costs exactly a factor of four",
       c7_worst_case_factor},
      {"code growth accounting is exact and stays within bounds",
       c8_growth_accounting},
      {"interrupt timing never changes the program's result",
       c9_interrupt_sweep},
      {"branch prediction never changes architectural results",
       c10_predictor_equivalence},
  };

  int failures = 0;
  int idx = 0;
  for (const auto& c : table) {
    idx++;
    Expect e;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = c.fn(e);
    } catch (const std::exception& ex) {
      e.ok = false;
      e.why = std::string("exception: ") + ex.what();
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    std::printf("[%s] %2d. %s (%lld ms)%s%s\n", ok && e.ok ? "PASS" : "FAIL",
                idx, c.title, static_cast<long long>(ms),
                e.why.empty() ? "" : ": ", e.why.c_str());
    if (!(ok && e.ok)) failures++;
  }
  if (failures)
    std::printf("%d of %d criteria failed\n", failures,
                int(sizeof table / sizeof table[0]));
  else
    std::printf("all %d criteria passed\n", int(sizeof table / sizeof table[0]));
  return failures ? 1 : 0;
}
