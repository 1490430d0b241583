#include "mafia/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "json.hpp"
#include "mafia/isa.hpp"

namespace mafia {

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::detected_cacfi: return "detected_cacfi";
    case Outcome::detected_csi: return "detected_csi";
    case Outcome::detected_watchdog: return "detected_watchdog";
    case Outcome::crash: return "crash";
    case Outcome::silent_benign: return "silent_benign";
    case Outcome::silent_corrupting: return "silent_corrupting";
  }
  return "?";
}

GoldenRun golden_run(const ProgramImage& img, RunConfig cfg) {
  cfg.faults.clear();
  cfg.record_issues = true;
  cfg.trace_path.clear();
  GoldenRun g;
  g.result = run_program(img, cfg);
  if (!g.result.stopped_clean()) {
    std::string why = g.result.timed_out ? "never halts"
                      : g.result.trap
                          ? std::string("traps with ") +
                                trap_cause_name(*g.result.trap) + " at " +
                                hex32(g.result.trap_pc)
                          : "does not halt";
    throw SimError("reference run " + why +
                   "; fix the program before sweeping faults");
  }
  g.config = cfg;
  return g;
}

Outcome classify(const RunResult& faulty, const RunResult& golden) {
  if (faulty.trap) {
    switch (*faulty.trap) {
      case TrapCause::signature_mismatch: return Outcome::detected_cacfi;
      case TrapCause::csi_mismatch: return Outcome::detected_csi;
      case TrapCause::watchdog_expiry: return Outcome::detected_watchdog;
      case TrapCause::illegal_instruction: return Outcome::crash;
    }
  }
  if (faulty.timed_out) return Outcome::silent_corrupting;
  if (faulty.halted && faulty.exit_code == golden.exit_code)
    return Outcome::silent_benign;
  return Outcome::silent_corrupting;
}

FaultResult run_fault(const ProgramImage& img, const GoldenRun& g,
                      const FaultSpec& f) {
  RunConfig cfg = g.config;
  cfg.record_issues = false;
  cfg.faults = {f};
  cfg.max_cycles = 10 * g.result.cycles;
  const RunResult r = run_program(img, cfg);

  FaultResult out;
  out.fault = f;
  out.outcome = classify(r, g.result);
  out.cause = r.trap;
  out.cycles = r.cycles;
  out.exit_code = r.exit_code;
  return out;
}

namespace {

bool in_secured(const ProgramImage& img, u32 pc) {
  const FuncInfo* f = img.function_at(pc);
  return f && f->secured;
}

bool is_reference_word(const ProgramImage& img, u32 addr) {
  if (!img.is_data_word(addr) || addr < img.text_base + 4) return false;
  if (img.is_data_word(addr - 4)) return false;
  const auto prev = decode(img.word_at(addr - 4));
  return prev && prev->is_verification();
}

}  // namespace

std::vector<FaultSpec> enumerate_faults(const ProgramImage& img,
                                        const GoldenRun& g,
                                        const SweepSpec& spec) {
  std::vector<FaultTarget> targets = spec.targets;
  if (targets.empty())
    targets = {FaultTarget::imem_word,          FaultTarget::reference_word,
               FaultTarget::pipeline_state_bit, FaultTarget::post_decode_signal,
               FaultTarget::sig_register,       FaultTarget::patch_register};

  // Dynamic sweep points: every recorded issue, keyed (pc, occurrence).
  std::vector<std::pair<u32, u32>> issues;
  {
    std::map<u32, u32> seen;
    for (const auto& rec : g.result.issue_log) {
      if (spec.secured_only && !in_secured(img, rec.pc)) continue;
      issues.emplace_back(rec.pc, ++seen[rec.pc]);
    }
  }

  const u32 sig_bits = img.sig.is64() ? 64 : 32;
  std::vector<FaultSpec> out;

  auto each_issue = [&](auto&& emit) {
    for (const auto& [pc, k] : issues) emit(pc, k);
  };

  for (FaultTarget t : targets) {
    switch (t) {
      case FaultTarget::imem_word:
        for (const auto& fn : img.functions) {
          if (spec.secured_only && !fn.secured) continue;
          for (u32 a = fn.addr; a < fn.end; a += 4) {
            if (img.is_data_word(a)) continue;
            for (u32 b = 0; b < 32; ++b) {
              FaultSpec f;
              f.target = t;
              f.addr = a;
              f.bit = b;
              out.push_back(f);
            }
          }
        }
        break;

      case FaultTarget::reference_word:
        for (const auto& fn : img.functions) {
          if (spec.secured_only && !fn.secured) continue;
          for (u32 a = fn.addr; a < fn.end; a += 4) {
            if (!is_reference_word(img, a)) continue;
            for (u32 b = 0; b < 32; ++b) {
              FaultSpec f;
              f.target = t;
              f.addr = a;
              f.bit = b;
              out.push_back(f);
            }
          }
        }
        break;

      case FaultTarget::pipeline_state_bit:
        each_issue([&](u32 pc, u32 k) {
          for (u32 b = 0; b < 64; ++b) {
            FaultSpec f;
            f.target = t;
            f.bit = b;
            f.at_addr = pc;
            f.occurrence = k;
            out.push_back(f);
          }
        });
        break;

      case FaultTarget::post_decode_signal:
        each_issue([&](u32 pc, u32 k) {
          for (u32 stage = 0; stage < 2; ++stage)
            for (u32 b = 0; b < kPostDecodeBits; ++b) {
              FaultSpec f;
              f.target = t;
              f.bit = b;
              f.stage = u8(stage);
              f.at_addr = pc;
              f.occurrence = k;
              out.push_back(f);
            }
        });
        break;

      case FaultTarget::sig_register:
      case FaultTarget::patch_register:
        each_issue([&](u32 pc, u32 k) {
          for (u32 b = 0; b < sig_bits; ++b) {
            FaultSpec f;
            f.target = t;
            f.bit = b;
            f.at_addr = pc;
            f.occurrence = k;
            out.push_back(f);
          }
        });
        break;
    }
  }

  if (spec.budget && spec.budget < out.size()) {
    std::vector<FaultSpec> sampled;
    sampled.reserve(spec.budget);
    std::mt19937_64 rng(spec.seed);
    std::sample(out.begin(), out.end(), std::back_inserter(sampled),
                size_t(spec.budget), rng);
    out = std::move(sampled);
  }
  return out;
}

std::vector<FaultResult> run_campaign(const ProgramImage& img,
                                      const GoldenRun& g,
                                      const std::vector<FaultSpec>& faults,
                                      int jobs) {
  std::vector<FaultResult> results(faults.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < faults.size(); ++i)
      results[i] = run_fault(img, g, faults[i]);
    return results;
  }

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mu;

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= faults.size()) return;
      try {
        results[i] = run_fault(img, g, faults[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!failed.exchange(true)) error = e.what();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const int n = std::min<int>(jobs, int(std::thread::hardware_concurrency()
                                            ? std::thread::hardware_concurrency()
                                            : 4));
  for (int i = 0; i < std::max(n, 1); ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load()) throw SimError("campaign worker failed: " + error);
  return results;
}

CampaignSummary summarize(const std::vector<FaultResult>& results) {
  CampaignSummary s;
  s.total = results.size();
  for (const auto& r : results) {
    const char* o = outcome_name(r.outcome);
    ++s.by_outcome[o];
    ++s.matrix[fault_region_name(fault_region(r.fault.target))][o];
  }
  return s;
}

namespace {

nlohmann::json fault_json(const FaultResult& r) {
  nlohmann::json j;
  j["target"] = fault_target_name(r.fault.target);
  j["region"] = fault_region_name(fault_region(r.fault.target));
  j["bit"] = r.fault.bit;
  if (r.fault.target == FaultTarget::imem_word ||
      r.fault.target == FaultTarget::reference_word)
    j["addr"] = hex32(r.fault.addr);
  if (r.fault.target == FaultTarget::post_decode_signal)
    j["stage"] = r.fault.stage == 0 ? "ex" : "wb";
  if (r.fault.occurrence) {
    j["at"] = hex32(r.fault.at_addr);
    j["occurrence"] = r.fault.occurrence;
  } else if (r.fault.cycle) {
    j["cycle"] = r.fault.cycle;
  }
  j["outcome"] = outcome_name(r.outcome);
  if (r.cause) j["cause"] = trap_cause_name(*r.cause);
  j["cycles"] = r.cycles;
  j["exit_code"] = r.exit_code;
  return j;
}

}  // namespace

void write_report_json(const std::string& path, const ProgramImage& img,
                       const GoldenRun& g,
                       const std::vector<FaultResult>& results) {
  const CampaignSummary s = summarize(results);
  nlohmann::json j;
  j["signature"] = img.sig.kind == SigKind::crc32 ? "crc32" : "cbcmac";
  j["golden"] = {{"cycles", g.result.cycles},
                 {"instructions", g.result.instructions},
                 {"verifications", g.result.verifications},
                 {"exit_code", g.result.exit_code}};
  j["trials"] = s.total;
  j["outcomes"] = s.by_outcome;
  j["regions"] = s.matrix;
  auto& escapes = j["escapes"] = nlohmann::json::array();
  for (const auto& r : results)
    if (r.outcome == Outcome::silent_corrupting) escapes.push_back(fault_json(r));

  std::ofstream out(path);
  if (!out) throw ToolError("cannot write report " + path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path,
                      const std::vector<FaultResult>& results) {
  std::ofstream out(path);
  if (!out) throw ToolError("cannot write report " + path);
  out << "target,region,addr,bit,stage,cycle,at,occurrence,outcome,cause,"
         "cycles,exit_code\n";
  for (const auto& r : results) {
    const auto& f = r.fault;
    out << fault_target_name(f.target) << ','
        << fault_region_name(fault_region(f.target)) << ',' << hex32(f.addr)
        << ',' << f.bit << ',' << int(f.stage) << ',' << f.cycle << ','
        << hex32(f.at_addr) << ',' << f.occurrence << ','
        << outcome_name(r.outcome) << ','
        << (r.cause ? trap_cause_name(*r.cause) : "") << ',' << r.cycles << ','
        << r.exit_code << '\n';
  }
}

}  // namespace mafia
