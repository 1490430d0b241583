#include "mafia/siggen.hpp"

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "mafia/asm.hpp"
#include "mafia/cfg.hpp"
#include "mafia/pipeline_state.hpp"

namespace mafia {

namespace {

void store_le32(std::vector<u8>& buf, size_t off, u32 v) {
  buf[off] = u8(v);
  buf[off + 1] = u8(v >> 8);
  buf[off + 2] = u8(v >> 16);
  buf[off + 3] = u8(v >> 24);
}

}  // namespace

u64 function_entry_iv(const ProgramImage& img, const std::string& name) {
  const FuncInfo* entry = img.function_at(img.entry);
  if (entry && entry->name == name) return sig_mask(img.sig, img.boot_iv);
  return sig_mask(img.sig, fnv1a64(name));
}

ProgramImage generate_signatures(const ProgramImage& img0) {
  if (!img0.instrumented)
    throw ToolError("image is not instrumented; nothing to sign");
  if (!img0.icall_sites.empty())
    throw ToolError("indirect calls must be dispatched before signing");

  ProgramImage img = img0;
  Module m = lift(img);
  Cfg cfg = build_cfg(m);
  const size_t nf = m.funcs.size();

  ReturnClasses rc = build_return_classes(m, cfg, img.dispatchers);
  auto class_exits = return_class_exits(m, cfg, rc);
  auto src = classify_signature_sources(m, cfg, rc);

  // The plan encodes the donor structure implicitly: every taken edge is
  // patched except, per chosen block, the one that donates its entry value.
  // A chosen block with no unpatched edge in carries a fresh entry value
  // (the planner does that to cut dependency cycles), as does a return
  // class whose canonical exit is itself patched.
  std::set<u32> patched_from;
  for (const auto& pe : img.patch_plan) patched_from.insert(pe.from);

  std::vector<std::vector<int>> donor(nf);
  for (size_t fi = 0; fi < nf; ++fi) {
    const auto& fc = cfg.funcs[fi];
    const AsmFunction& f = m.funcs[fi];
    donor[fi].assign(fc.blocks.size(), -1);
    for (const auto& b : fc.blocks) {
      const BlockSigSrc& s = src[fi][b.id];
      if (s.src == SigSrc::textual) {
        donor[fi][b.id] = s.donor_pred;
      } else if (s.src == SigSrc::chosen) {
        for (int p : b.preds_taken) {
          const BasicBlock& pb = fc.blocks[p];
          const u32 term_addr = f.items[pb.first + pb.count - 1].addr;
          if (patched_from.count(term_addr)) continue;
          if (donor[fi][b.id] >= 0)
            throw ToolError("patch plan leaves two unpatched edges into " +
                            f.name + "+" + std::to_string(f.items[b.first].addr - f.addr));
          donor[fi][b.id] = p;
        }
      }
    }
  }

  std::set<std::string> fresh_class;
  for (const auto& [root, exits] : class_exits) {
    if (exits.empty()) continue;
    auto [cfi, cbi] = exits.front();
    const BasicBlock& cb = cfg.funcs[cfi].blocks[cbi];
    if (patched_from.count(m.funcs[cfi].items[cb.first + cb.count - 1].addr))
      fresh_class.insert(root);
  }

  auto fresh_block_iv = [&](size_t fi, const BasicBlock& b) {
    const AsmFunction& f = m.funcs[fi];
    const u32 off = f.items[b.first].addr - f.addr;
    return sig_mask(img.sig, fnv1a64(f.name + "+" + std::to_string(off)));
  };
  auto class_iv = [&](const std::string& root) {
    return sig_mask(img.sig, fnv1a64("ret:" + root));
  };

  // Value fixpoint over the donor structure.
  std::vector<std::vector<std::optional<u64>>> entryv(nf), exitv(nf);
  for (size_t fi = 0; fi < nf; ++fi) {
    entryv[fi].resize(cfg.funcs[fi].blocks.size());
    exitv[fi].resize(cfg.funcs[fi].blocks.size());
  }

  std::map<u32, u32> refs;  // reference word address -> value
  auto chain = [&](size_t fi, const BasicBlock& b, u64 iv) -> u64 {
    const AsmFunction& f = m.funcs[fi];
    u64 sig = iv;
    FwdContext ctx = FwdContext::none();
    for (int i = b.first; i < b.first + b.count; ++i) {
      const AsmItem& item = f.items[i];
      DecodedControls dc = derive_pipeline_state(item.ins, ctx);
      sig = sig_step(img.sig, sig, dc.sigma);
      if (item.ins.is_verification()) refs[item.addr + 4] = sig_verified_part(sig);
      ctx = FwdContext::after(item.ins);
    }
    return sig;
  };

  bool progress = true;
  while (progress) {
    progress = false;
    for (size_t fi = 0; fi < nf; ++fi) {
      const auto& fc = cfg.funcs[fi];
      for (const auto& b : fc.blocks) {
        if (entryv[fi][b.id]) continue;
        const BlockSigSrc& s = src[fi][b.id];
        std::optional<u64> in;
        switch (s.src) {
          case SigSrc::inert:
            continue;
          case SigSrc::anchor:
            in = function_entry_iv(img, m.funcs[fi].name);
            break;
          case SigSrc::textual:
            // Fall-through edges carry the exit value unchanged; donor taken
            // edges carry it too, because the patch register reads zero there.
            in = exitv[fi][donor[fi][b.id]];
            break;
          case SigSrc::chosen:
            if (donor[fi][b.id] < 0)
              in = fresh_block_iv(fi, b);  // every edge in is patched
            else
              in = exitv[fi][donor[fi][b.id]];
            break;
          case SigSrc::retclass: {
            if (fresh_class.count(s.retclass)) {
              in = class_iv(s.retclass);
              break;
            }
            auto it = class_exits.find(s.retclass);
            if (it == class_exits.end() || it->second.empty())
              throw ToolError("calls to " + s.retclass + " never return, but " +
                              m.funcs[fi].name + " expects them to");
            auto [cfi, cbi] = it->second.front();
            in = exitv[cfi][cbi];
            break;
          }
        }
        if (!in) continue;
        entryv[fi][b.id] = *in;
        exitv[fi][b.id] = chain(fi, b, *in);
        progress = true;
      }
    }
  }

  for (size_t fi = 0; fi < nf; ++fi)
    for (const auto& b : cfg.funcs[fi].blocks)
      if (b.executes() && !entryv[fi][b.id])
        throw ToolError("no signature source for a block in " + m.funcs[fi].name +
                        "; re-run instrumentation");

  for (const auto& [addr, val] : refs) img.set_word(addr, val);

  // Patch values: exit(source) XOR entry(target), per plan slot.
  std::map<u32, std::pair<int, int>> by_term, by_leader;
  for (size_t fi = 0; fi < nf; ++fi) {
    const AsmFunction& f = m.funcs[fi];
    for (const auto& b : cfg.funcs[fi].blocks) {
      by_leader[f.items[b.first].addr] = {int(fi), b.id};
      by_term[f.items[b.first + b.count - 1].addr] = {int(fi), b.id};
    }
  }

  img.patches.assign(img.patch_plan.size() * img.sig.patch_bytes(), 0);
  for (const auto& pe : img.patch_plan) {
    auto st = by_term.find(pe.from);
    if (st == by_term.end())
      throw ToolError("patch plan source " + hex32(pe.from) + " is not a transfer");
    auto [sfi, sbi] = st->second;
    const u64 sexit = *exitv[sfi][sbi];

    u64 tiv = 0;
    switch (pe.kind) {
      case PatchEdgeKind::merge:
      case PatchEdgeKind::loop: {
        auto tt = by_leader.find(pe.to);
        if (tt == by_leader.end())
          throw ToolError("patch plan target " + hex32(pe.to) + " is not a block leader");
        tiv = *entryv[tt->second.first][tt->second.second];
        break;
      }
      case PatchEdgeKind::call:
      case PatchEdgeKind::tail:
        tiv = function_entry_iv(img, img.function_at(pe.to)->name);
        break;
      case PatchEdgeKind::ret: {
        const std::string owner = img.function_at(pe.to)->name;
        const std::string root = rc.find(owner);
        if (fresh_class.count(root)) {
          tiv = class_iv(root);
          break;
        }
        auto [cfi, cbi] = class_exits.at(root).front();
        tiv = *exitv[cfi][cbi];
        break;
      }
    }

    const u64 patch = sig_mask(img.sig, sexit ^ tiv);
    const size_t off = size_t(pe.slot) * img.sig.patch_bytes();
    if (img.sig.is64()) {
      store_le32(img.patches, off, u32(patch >> 32));  // even load: high half
      store_le32(img.patches, off + 4, u32(patch));
    } else {
      store_le32(img.patches, off, u32(patch));
    }
  }

  img.iv_table.assign(size_t(memmap::kIrqLines), 0);
  for (const auto& f : img.functions)
    if (f.handler_irq >= 0)
      img.iv_table[size_t(f.handler_irq)] = function_entry_iv(img, f.name);

  img.has_signatures = true;
  validate_image(img);
  return img;
}

}  // namespace mafia
