#include "mafia/image.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mafia/isa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mafia {

u32 ProgramImage::word_at(u32 addr) const {
  if (!in_text(addr)) throw ToolError("text read out of range: " + hex32(addr));
  return text[(addr - text_base) / 4];
}

void ProgramImage::set_word(u32 addr, u32 w) {
  if (!in_text(addr)) throw ToolError("text write out of range: " + hex32(addr));
  text[(addr - text_base) / 4] = w;
}

bool ProgramImage::is_data_word(u32 addr) const {
  return std::binary_search(data_words.begin(), data_words.end(), addr);
}

const FuncInfo* ProgramImage::function_at(u32 addr) const {
  for (const auto& f : functions)
    if (addr >= f.addr && addr < f.end) return &f;
  return nullptr;
}

const FuncInfo* ProgramImage::function_named(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

namespace {

std::string hexstr(u64 v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%llx", (unsigned long long)v);
  return buf;
}

u64 parse_hex(const json& j, const char* what) {
  if (j.is_number_unsigned()) return j.get<u64>();
  if (!j.is_string()) throw ToolError(std::string("manifest: ") + what + " must be a hex string");
  const std::string s = j.get<std::string>();
  try {
    size_t pos = 0;
    u64 v = std::stoull(s, &pos, 16);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ToolError(std::string("manifest: bad hex value for ") + what + ": " + s);
  }
}

void write_file(const fs::path& p, const void* data, size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ToolError("cannot open for writing: " + p.string());
  out.write(static_cast<const char*>(data), std::streamsize(n));
  if (!out) throw ToolError("write failed: " + p.string());
}

std::vector<u8> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ToolError("cannot open: " + p.string());
  return std::vector<u8>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

constexpr int kManifestVersion = 1;

}  // namespace

void save_image(const ProgramImage& img, const std::string& dir) {
  fs::create_directories(dir);

  std::vector<u8> text_bytes(img.text.size() * 4);
  for (size_t i = 0; i < img.text.size(); ++i) {
    u32 w = img.text[i];
    text_bytes[4 * i + 0] = u8(w);
    text_bytes[4 * i + 1] = u8(w >> 8);
    text_bytes[4 * i + 2] = u8(w >> 16);
    text_bytes[4 * i + 3] = u8(w >> 24);
  }
  write_file(fs::path(dir) / "text.bin", text_bytes.data(), text_bytes.size());
  write_file(fs::path(dir) / "patches.bin", img.patches.data(), img.patches.size());

  json m;
  m["version"] = kManifestVersion;
  m["text_base"] = img.text_base;
  m["entry"] = img.entry;
  m["sig"] = {{"kind", img.sig.kind == SigKind::crc32 ? "crc32" : "cbcmac"},
              {"poly", hexstr(img.sig.poly)},
              {"key", {hexstr(img.sig.key[0]), hexstr(img.sig.key[1])}}};
  m["boot_iv"] = hexstr(img.boot_iv);
  m["symbols"] = json::object();
  for (const auto& [name, addr] : img.symbols) m["symbols"][name] = addr;
  m["functions"] = json::array();
  for (const auto& f : img.functions)
    m["functions"].push_back({{"name", f.name},
                              {"addr", f.addr},
                              {"end", f.end},
                              {"secured", f.secured},
                              {"proto", f.proto},
                              {"handler_irq", f.handler_irq}});
  m["block_starts"] = img.block_starts;
  m["data_words"] = img.data_words;
  m["relocs"] = json::array();
  for (const auto& r : img.relocs)
    m["relocs"].push_back({{"addr", r.addr},
                           {"kind", r.kind == RelocKind::hi20 ? "hi20" : "lo12"},
                           {"symbol", r.symbol},
                           {"addend", r.addend}});
  m["icall_sites"] = json::array();
  for (const auto& s : img.icall_sites)
    m["icall_sites"].push_back({{"addr", s.addr}, {"proto", s.proto}});
  m["dispatchers"] = json::array();
  for (const auto& d : img.dispatchers)
    m["dispatchers"].push_back({{"name", d.name},
                                {"proto", d.proto},
                                {"reg", d.reg},
                                {"members", d.members},
                                {"legitimate", d.legitimate}});
  m["iv_table"] = json::array();
  for (u64 iv : img.iv_table) m["iv_table"].push_back(hexstr(iv));
  m["patch_plan"] = json::array();
  for (const auto& e : img.patch_plan) {
    const char* k = e.kind == PatchEdgeKind::merge  ? "merge"
                    : e.kind == PatchEdgeKind::call ? "call"
                    : e.kind == PatchEdgeKind::ret  ? "ret"
                    : e.kind == PatchEdgeKind::loop ? "loop"
                                                    : "tail";
    m["patch_plan"].push_back(
        {{"from", e.from}, {"to", e.to}, {"slot", e.slot}, {"kind", k}});
  }
  m["stats"] = {{"nops", img.stats.nops},
                {"verifications", img.stats.verifications},
                {"patch_loads", img.stats.patch_loads},
                {"dispatcher_words", img.stats.dispatcher_words},
                {"relaxed_branches", img.stats.relaxed_branches},
                {"baseline_text_bytes", img.stats.baseline_text_bytes}};
  m["instrumented"] = img.instrumented;
  m["has_signatures"] = img.has_signatures;

  const std::string text = m.dump(2) + "\n";
  write_file(fs::path(dir) / "manifest.json", text.data(), text.size());
}

ProgramImage load_image(const std::string& dir) {
  const auto text_bytes = read_file(fs::path(dir) / "text.bin");
  if (text_bytes.size() % 4) throw ToolError("text.bin length not word aligned");
  json m;
  try {
    m = json::parse(read_file(fs::path(dir) / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw ToolError(std::string("manifest.json: ") + e.what());
  }
  if (m.value("version", 0) != kManifestVersion)
    throw ToolError("manifest.json: unsupported version");

  ProgramImage img;
  img.text.resize(text_bytes.size() / 4);
  for (size_t i = 0; i < img.text.size(); ++i)
    img.text[i] = u32(text_bytes[4 * i]) | u32(text_bytes[4 * i + 1]) << 8 |
                  u32(text_bytes[4 * i + 2]) << 16 | u32(text_bytes[4 * i + 3]) << 24;
  img.patches = read_file(fs::path(dir) / "patches.bin");

  try {
    img.text_base = m.at("text_base").get<u32>();
    img.entry = m.at("entry").get<u32>();
    const auto& sj = m.at("sig");
    const std::string kind = sj.at("kind").get<std::string>();
    if (kind == "crc32")
      img.sig.kind = SigKind::crc32;
    else if (kind == "cbcmac")
      img.sig.kind = SigKind::cbcmac;
    else
      throw ToolError("manifest: unknown signature kind: " + kind);
    img.sig.poly = u32(parse_hex(sj.at("poly"), "sig.poly"));
    img.sig.key[0] = parse_hex(sj.at("key").at(0), "sig.key[0]");
    img.sig.key[1] = parse_hex(sj.at("key").at(1), "sig.key[1]");
    img.boot_iv = parse_hex(m.at("boot_iv"), "boot_iv");
    for (const auto& [name, addr] : m.at("symbols").items())
      img.symbols[name] = addr.get<u32>();
    for (const auto& fj : m.at("functions")) {
      FuncInfo f;
      f.name = fj.at("name").get<std::string>();
      f.addr = fj.at("addr").get<u32>();
      f.end = fj.at("end").get<u32>();
      f.secured = fj.at("secured").get<bool>();
      f.proto = fj.at("proto").get<std::string>();
      f.handler_irq = fj.at("handler_irq").get<int>();
      img.functions.push_back(std::move(f));
    }
    img.block_starts = m.at("block_starts").get<std::vector<u32>>();
    img.data_words = m.at("data_words").get<std::vector<u32>>();
    for (const auto& rj : m.at("relocs")) {
      Reloc r;
      r.addr = rj.at("addr").get<u32>();
      const std::string kind_s = rj.at("kind").get<std::string>();
      if (kind_s == "hi20")
        r.kind = RelocKind::hi20;
      else if (kind_s == "lo12")
        r.kind = RelocKind::lo12;
      else
        throw ToolError("manifest: unknown reloc kind: " + kind_s);
      r.symbol = rj.at("symbol").get<std::string>();
      r.addend = rj.at("addend").get<i32>();
      img.relocs.push_back(std::move(r));
    }
    for (const auto& sjv : m.at("icall_sites"))
      img.icall_sites.push_back(
          {sjv.at("addr").get<u32>(), sjv.at("proto").get<std::string>()});
    for (const auto& dj : m.at("dispatchers")) {
      DispatcherInfo d;
      d.name = dj.at("name").get<std::string>();
      d.proto = dj.at("proto").get<std::string>();
      d.reg = dj.at("reg").get<u8>();
      d.members = dj.at("members").get<std::vector<std::string>>();
      d.legitimate = dj.at("legitimate").get<std::vector<std::string>>();
      img.dispatchers.push_back(std::move(d));
    }
    img.iv_table.clear();
    for (const auto& ivj : m.at("iv_table"))
      img.iv_table.push_back(parse_hex(ivj, "iv_table"));
    if (img.iv_table.size() != size_t(memmap::kIrqLines))
      throw ToolError("manifest: iv_table must have " +
                      std::to_string(memmap::kIrqLines) + " entries");
    for (const auto& ej : m.at("patch_plan")) {
      PatchPlanEdge e;
      e.from = ej.at("from").get<u32>();
      e.to = ej.at("to").get<u32>();
      e.slot = ej.at("slot").get<u32>();
      const std::string kind_s = ej.at("kind").get<std::string>();
      if (kind_s == "merge")
        e.kind = PatchEdgeKind::merge;
      else if (kind_s == "call")
        e.kind = PatchEdgeKind::call;
      else if (kind_s == "ret")
        e.kind = PatchEdgeKind::ret;
      else if (kind_s == "loop")
        e.kind = PatchEdgeKind::loop;
      else if (kind_s == "tail")
        e.kind = PatchEdgeKind::tail;
      else
        throw ToolError("manifest: unknown patch edge kind: " + kind_s);
      img.patch_plan.push_back(e);
    }
    const auto& st = m.at("stats");
    img.stats.nops = st.at("nops").get<u32>();
    img.stats.verifications = st.at("verifications").get<u32>();
    img.stats.patch_loads = st.at("patch_loads").get<u32>();
    img.stats.dispatcher_words = st.at("dispatcher_words").get<u32>();
    img.stats.relaxed_branches = st.at("relaxed_branches").get<u32>();
    img.stats.baseline_text_bytes = st.at("baseline_text_bytes").get<u32>();
    img.instrumented = m.at("instrumented").get<bool>();
    img.has_signatures = m.at("has_signatures").get<bool>();
  } catch (const json::exception& e) {
    throw ToolError(std::string("manifest.json: ") + e.what());
  }
  validate_image(img);
  return img;
}

void validate_image(const ProgramImage& img) {
  if (img.text_base & 3) throw ToolError("text_base not word aligned");
  if (img.text.empty()) throw ToolError("empty text section");
  if (!img.in_text(img.entry)) throw ToolError("entry outside text: " + hex32(img.entry));
  if (img.sig.kind == SigKind::cbcmac && img.patches.size() % 8)
    throw ToolError("patches section must hold whole 8-byte values");
  if (img.sig.kind == SigKind::crc32 && img.patches.size() % 4)
    throw ToolError("patches section must hold whole 4-byte values");

  for (const auto& [name, addr] : img.symbols)
    if (!img.in_text(addr))
      throw ToolError("symbol outside text: " + name + " = " + hex32(addr));

  for (const auto& f : img.functions) {
    if (f.addr >= f.end) throw ToolError("empty function: " + f.name);
    if (!img.in_text(f.addr) || f.end > img.text_end() || (f.end & 3))
      throw ToolError("function bounds outside text: " + f.name);
    auto it = img.symbols.find(f.name);
    if (it == img.symbols.end() || it->second != f.addr)
      throw ToolError("function symbol mismatch: " + f.name);
    if (f.handler_irq >= memmap::kIrqLines)
      throw ToolError("handler line out of range: " + f.name);
    for (const auto& g : img.functions) {
      if (&g == &f) continue;
      if (f.addr < g.end && g.addr < f.end)
        throw ToolError("overlapping functions: " + f.name + ", " + g.name);
    }
  }

  if (!std::is_sorted(img.data_words.begin(), img.data_words.end()))
    throw ToolError("data_words not sorted");
  for (u32 a : img.data_words)
    if (!img.in_text(a)) throw ToolError("data word outside text: " + hex32(a));
  if (!std::is_sorted(img.block_starts.begin(), img.block_starts.end()))
    throw ToolError("block_starts not sorted");

  for (const auto& r : img.relocs) {
    if (!img.in_text(r.addr)) throw ToolError("reloc outside text: " + hex32(r.addr));
    if (!img.symbols.count(r.symbol))
      throw ToolError("reloc against unknown symbol: " + r.symbol);
  }
  for (const auto& s : img.icall_sites)
    if (!img.in_text(s.addr))
      throw ToolError("indirect call site outside text: " + hex32(s.addr));

  // Every patch loader must address a word inside the patches section. Each
  // load covers 4 bytes at patch_base + 4*imm in both signature modes; the
  // 64-bit mode issues two loads per value.
  for (u32 a = img.text_base; a < img.text_end(); a += 4) {
    if (img.is_data_word(a)) continue;
    auto d = decode(img.word_at(a));
    if (!d || d->mnemonic != Mnemonic::mafia_ldp) continue;
    if (img.has_signatures && (u64(d->imm) + 1) * 4 > img.patches.size())
      throw ToolError("patch load at " + hex32(a) + " addresses past the patches section");
  }
}

}  // namespace mafia
