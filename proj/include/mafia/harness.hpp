#pragma once

#include <map>
#include <string>
#include <vector>

#include "mafia/core.hpp"
#include "mafia/image.hpp"

namespace mafia {

// Fault campaign driver. A campaign perturbs one fault-free reference run
// (the "golden" run) with exactly one single-bit fault per trial and sorts
// every trial into one of six outcomes:
//
//   detected_cacfi      signature mismatch trap
//   detected_csi        duplicate-bundle mismatch trap
//   detected_watchdog   verification deadline trap
//   crash               illegal instruction / memory fault
//   silent_benign       clean halt with the reference exit code
//   silent_corrupting   clean halt with a different exit code, or a hang
//
// Only the last class is a real escape. Crashes stop the device on their
// own, and the three detections are the monitors doing their job.

enum class Outcome : u8 {
  detected_cacfi,
  detected_csi,
  detected_watchdog,
  crash,
  silent_benign,
  silent_corrupting,
};
const char* outcome_name(Outcome o);

struct FaultResult {
  FaultSpec fault;
  Outcome outcome = Outcome::silent_benign;
  std::optional<TrapCause> cause;
  u64 cycles = 0;
  u32 exit_code = 0;
};

// The reference run every trial is measured against. Produced with faults
// cleared and the issue log enabled; the log is what occurrence-addressed
// sweeps enumerate over.
struct GoldenRun {
  RunConfig config;
  RunResult result;
};

// Runs the image without faults. Throws SimError if it does not halt clean:
// a campaign against a broken reference would classify garbage.
GoldenRun golden_run(const ProgramImage& img, RunConfig cfg);

Outcome classify(const RunResult& faulty, const RunResult& golden);

// One trial. The faulty run gets 10x the golden cycle budget; exceeding it
// counts as a hang, and a hang is a corruption (the device never answers).
FaultResult run_fault(const ProgramImage& img, const GoldenRun& g,
                      const FaultSpec& f);

// What to enumerate. Transient targets (sigma, post-decode, the two
// signature registers) sweep per dynamic instruction: every issue the golden
// run recorded, addressed by (pc, occurrence). Persistent targets (imem and
// reference words) sweep the stored image bits directly. secured_only
// restricts both to instructions of secured functions; the unsecured glue
// around them is the trusted readout boundary, the same role the fault-free
// host plays on a real test board.
struct SweepSpec {
  std::vector<FaultTarget> targets;  // empty = all six
  bool secured_only = true;
  u64 budget = 0;  // 0 = exhaustive, otherwise sample this many
  u64 seed = 1;
};

std::vector<FaultSpec> enumerate_faults(const ProgramImage& img,
                                        const GoldenRun& g,
                                        const SweepSpec& spec);

// Runs every fault and returns results in fault order, regardless of the
// number of worker threads. jobs <= 1 runs inline.
std::vector<FaultResult> run_campaign(const ProgramImage& img,
                                      const GoldenRun& g,
                                      const std::vector<FaultSpec>& faults,
                                      int jobs);

struct CampaignSummary {
  u64 total = 0;
  std::map<std::string, u64> by_outcome;
  // region -> outcome -> count. Regions follow fault_region_name.
  std::map<std::string, std::map<std::string, u64>> matrix;
};
CampaignSummary summarize(const std::vector<FaultResult>& results);

// Reports. JSON carries the summary, the golden reference and the full list
// of corrupting escapes; CSV carries one row per trial.
void write_report_json(const std::string& path, const ProgramImage& img,
                       const GoldenRun& g,
                       const std::vector<FaultResult>& results);
void write_report_csv(const std::string& path,
                      const std::vector<FaultResult>& results);

}  // namespace mafia
