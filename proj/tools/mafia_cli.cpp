// Command-line driver: build images, run them, sweep faults, inspect CRCs.
//
// Exit codes: 0 success, 1 usage or tool failure, 2 findings (a trap on
// run, a corrupting escape in a campaign, a codeword below the bound).

#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mafia/asm.hpp"
#include "mafia/config.hpp"
#include "mafia/core.hpp"
#include "mafia/harness.hpp"
#include "mafia/overhead.hpp"
#include "mafia/passes.hpp"
#include "mafia/siggen.hpp"

using namespace mafia;

namespace {

u64 parse_hex64(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    const u64 v = std::stoull(s, &pos, 16);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ToolError(std::string(what) + ": not a hex value: " + s);
  }
}

void parse_key(const std::string& s, SigConfig& sig) {
  const size_t colon = s.find(':');
  if (colon != std::string::npos) {
    sig.key[0] = parse_hex64(s.substr(0, colon), "--key k0");
    sig.key[1] = parse_hex64(s.substr(colon + 1), "--key k1");
    return;
  }
  if (s.size() > 32) throw ToolError("--key: expected at most 32 hex digits");
  const std::string padded = std::string(32 - s.size(), '0') + s;
  sig.key[0] = parse_hex64(padded.substr(0, 16), "--key");
  sig.key[1] = parse_hex64(padded.substr(16), "--key");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ToolError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

FaultTarget target_from_name(const std::string& s) {
  if (s == "imem_word") return FaultTarget::imem_word;
  if (s == "reference_word") return FaultTarget::reference_word;
  if (s == "pipeline_state_bit") return FaultTarget::pipeline_state_bit;
  if (s == "post_decode_signal") return FaultTarget::post_decode_signal;
  if (s == "sig_register") return FaultTarget::sig_register;
  if (s == "patch_register") return FaultTarget::patch_register;
  throw ToolError("unknown fault target: " + s);
}

void print_summary(const CampaignSummary& s) {
  std::printf("trials: %llu\n", (unsigned long long)s.total);
  for (const auto& [name, n] : s.by_outcome)
    std::printf("  %-20s %llu\n", name.c_str(), (unsigned long long)n);
  std::printf("by region:\n");
  for (const auto& [region, row] : s.matrix) {
    std::printf("  %-12s", region.c_str());
    for (const auto& [name, n] : row)
      std::printf(" %s=%llu", name.c_str(), (unsigned long long)n);
    std::printf("\n");
  }
}

int cmd_build(const std::string& input, const std::string& outdir,
              const SigConfig& sig, u64 iv, bool bare) {
  const ProgramImage baseline = assemble(read_file(input), sig, iv, input);
  if (bare) {
    save_image(baseline, outdir);
    std::printf("wrote %s (uninstrumented, %zu text bytes)\n", outdir.c_str(),
                baseline.text.size() * 4);
    return 0;
  }
  ProgramImage built = generate_signatures(instrument(baseline));
  save_image(built, outdir);
  std::printf("wrote %s\n", outdir.c_str());
  std::fputs(format_overheads(measure_overheads(baseline, built)).c_str(),
             stdout);
  return 0;
}

int cmd_run(const std::string& dir, RunConfig cfg) {
  const ProgramImage img = load_image(dir);
  const RunResult r = run_program(img, cfg);
  std::printf("cycles %llu, instructions %llu, verifications %llu\n",
              (unsigned long long)r.cycles, (unsigned long long)r.instructions,
              (unsigned long long)r.verifications);
  if (r.irqs_delivered)
    std::printf("interrupts delivered: %llu\n",
                (unsigned long long)r.irqs_delivered);
  std::printf("final signature %s\n", hex64(r.final_sig).c_str());
  if (r.trap) {
    std::printf("trap: %s at %s\n", trap_cause_name(*r.trap),
                hex32(r.trap_pc).c_str());
    return 2;
  }
  if (r.timed_out) {
    std::printf("timed out after %llu cycles\n",
                (unsigned long long)r.cycles);
    return 2;
  }
  std::printf("exit code %u\n", r.exit_code);
  return 0;
}

int cmd_campaign(const std::string& dir, const std::string& cfg_path, int jobs,
                 const std::string& out_json, const std::string& out_csv) {
  const ProgramImage img = load_image(dir);
  const ConfigFile cf =
      cfg_path.empty() ? ConfigFile{} : load_config(cfg_path);

  RunConfig rc;
  rc.watchdog = u32(cf.get_u64("watchdog", 0));
  rc.predictor = cf.get_bool("predictor", false);
  const GoldenRun g = golden_run(img, rc);

  SweepSpec spec;
  for (const auto& t : cf.get_list("targets"))
    spec.targets.push_back(target_from_name(t));
  spec.secured_only = cf.get_bool("secured_only", true);
  spec.budget = cf.get_u64("budget", 0);
  spec.seed = cf.get_u64("seed", 1);
  if (!jobs) jobs = int(cf.get_u64("jobs", 1));

  const auto faults = enumerate_faults(img, g, spec);
  std::printf("golden: %llu cycles, exit %u; sweeping %zu faults\n",
              (unsigned long long)g.result.cycles, g.result.exit_code,
              faults.size());
  const auto results = run_campaign(img, g, faults, jobs);
  const CampaignSummary s = summarize(results);
  print_summary(s);

  if (!out_json.empty()) write_report_json(out_json, img, g, results);
  if (!out_csv.empty()) write_report_csv(out_csv, results);

  const auto esc = s.by_outcome.find("silent_corrupting");
  return esc != s.by_outcome.end() && esc->second ? 2 : 0;
}

int cmd_crcsearch(u32 poly, int blocks, int max_weight, int bound) {
  const CollisionSearchResult r =
      crc_collision_search(poly, blocks, max_weight, bound);
  if (!r.found) {
    std::printf("no codeword of weight <= %d within %d chained states\n",
                r.searched_weight, blocks);
    return 0;
  }
  std::printf("codeword of weight %d:", r.weight);
  for (int p : r.positions) std::printf(" %d", p);
  std::printf("\n");
  return 2;
}

int cmd_report(const std::string& path) {
  nlohmann::json j;
  {
    std::ifstream in(path);
    if (!in) throw ToolError("cannot open " + path);
    in >> j;
  }
  std::printf("signature: %s\n", j.value("signature", "?").c_str());
  if (j.contains("golden")) {
    const auto& g = j["golden"];
    std::printf("golden: %llu cycles, exit %u\n",
                (unsigned long long)g.value("cycles", 0ull),
                g.value("exit_code", 0u));
  }
  std::printf("trials: %llu\n", (unsigned long long)j.value("trials", 0ull));
  if (j.contains("outcomes"))
    for (const auto& [k, v] : j["outcomes"].items())
      std::printf("  %-20s %llu\n", k.c_str(),
                  (unsigned long long)v.get<u64>());
  if (j.contains("escapes") && !j["escapes"].empty()) {
    std::printf("escapes:\n");
    for (const auto& e : j["escapes"])
      std::printf("  %s\n", e.dump().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-flow and instruction-stream integrity toolkit"};
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "assemble and instrument a program");
  std::string in_path, out_dir = "image";
  std::string sig_name = "crc32", key_hex, poly_hex, iv_hex;
  bool bare = false;
  build->add_option("input", in_path, "assembly source")->required();
  build->add_option("-o,--out", out_dir, "output image directory");
  build->add_option("--sig", sig_name, "signature function: crc32 or cbcmac")
      ->check(CLI::IsMember({"crc32", "cbcmac"}));
  build->add_option("--key", key_hex, "128-bit key, hex or k0:k1 (cbcmac)");
  build->add_option("--poly", poly_hex, "CRC generator polynomial, hex");
  build->add_option("--iv", iv_hex, "boot signature value, hex");
  build->add_flag("--bare", bare, "assemble only, no instrumentation");

  // run
  auto* run = app.add_subcommand("run", "execute an image");
  std::string run_dir, trace_path;
  RunConfig rc;
  std::vector<std::string> irq_specs;
  run->add_option("image", run_dir, "image directory")->required();
  run->add_option("--watchdog", rc.watchdog,
                  "max cycles between verifications");
  run->add_flag("--predictor", rc.predictor, "speculate conditionals");
  run->add_option("--max-cycles", rc.max_cycles, "cycle budget");
  run->add_option("--trace", trace_path, "write a per-cycle trace");
  run->add_option("--irq", irq_specs, "schedule an interrupt, cycle:line");

  // campaign
  auto* camp = app.add_subcommand("campaign", "fault-injection sweep");
  std::string camp_dir, camp_cfg, camp_json, camp_csv;
  int jobs = 0;
  camp->add_option("image", camp_dir, "image directory")->required();
  camp->add_option("-c,--config", camp_cfg, "campaign description file");
  camp->add_option("-j,--jobs", jobs, "worker threads");
  camp->add_option("--out", camp_json, "write a JSON report");
  camp->add_option("--csv", camp_csv, "write a CSV of all trials");

  // crcsearch
  auto* crc = app.add_subcommand("crcsearch",
                                 "minimum-weight codeword search for a CRC");
  std::string crc_poly = "FA567D89";
  int crc_blocks = 16, crc_weight = 4, crc_bound = 4096;
  crc->add_option("--poly", crc_poly, "generator polynomial, hex");
  crc->add_option("--blocks", crc_blocks, "chained 64-bit states to cover");
  crc->add_option("--max-weight", crc_weight, "search codewords up to this weight");
  crc->add_option("--bound", crc_bound, "bitstream length cap");

  // report
  auto* rep = app.add_subcommand("report", "print a saved campaign report");
  std::string rep_path;
  rep->add_option("report", rep_path, "JSON report file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      SigConfig sig;
      sig.kind = sig_name == "cbcmac" ? SigKind::cbcmac : SigKind::crc32;
      if (!key_hex.empty()) parse_key(key_hex, sig);
      if (!poly_hex.empty()) sig.poly = u32(parse_hex64(poly_hex, "--poly"));
      const u64 iv = iv_hex.empty() ? 0 : parse_hex64(iv_hex, "--iv");
      return cmd_build(in_path, out_dir, sig, iv, bare);
    }
    if (run->parsed()) {
      rc.trace_path = trace_path;
      for (const auto& s : irq_specs) {
        const size_t colon = s.find(':');
        if (colon == std::string::npos)
          throw ToolError("--irq: expected cycle:line, got " + s);
        IrqEvent ev;
        ev.cycle = std::stoull(s.substr(0, colon));
        ev.line = std::stoi(s.substr(colon + 1));
        rc.irqs.push_back(ev);
      }
      return cmd_run(run_dir, rc);
    }
    if (camp->parsed())
      return cmd_campaign(camp_dir, camp_cfg, jobs, camp_json, camp_csv);
    if (crc->parsed())
      return cmd_crcsearch(u32(parse_hex64(crc_poly, "--poly")), crc_blocks,
                           crc_weight, crc_bound);
    if (rep->parsed()) return cmd_report(rep_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
