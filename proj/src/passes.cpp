#include "mafia/passes.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "mafia/asm.hpp"
#include "mafia/cfg.hpp"

namespace mafia {

namespace {

void refresh_counts(ProgramImage& img) {
  u32 verifs = 0, ldps = 0;
  for (u32 a = img.text_base; a < img.text_end(); a += 4) {
    if (img.is_data_word(a)) continue;
    auto d = decode(img.word_at(a));
    if (!d) continue;
    if (d->is_verification()) ++verifs;
    if (d->mnemonic == Mnemonic::mafia_ldp) ++ldps;
  }
  img.stats.verifications = verifs;
  img.stats.patch_loads = ldps;
  u32 dw = 0;
  for (const auto& d : img.dispatchers)
    if (const FuncInfo* f = img.function_named(d.name)) dw += (f->end - f->addr) / 4;
  img.stats.dispatcher_words = dw;
}

void refresh_block_starts(ProgramImage& img) {
  Module m = lift(img);
  Cfg cfg = build_cfg(m);
  img.block_starts = block_leader_addrs(m, cfg);
}

// Rebuilds a function's item list, inserting before[i] in front of old item
// i. Transfer targets are remapped to the first item emitted for the old
// index, so a jump to a block leader enters through the inserted items.
// Returns emit_start: old index -> new index of the first emitted item.
std::vector<int> insert_before(AsmFunction& f,
                               const std::map<int, std::vector<AsmItem>>& before) {
  std::vector<AsmItem> out;
  std::vector<int> emit_start(f.items.size(), 0);
  for (int i = 0; i < int(f.items.size()); ++i) {
    emit_start[i] = int(out.size());
    if (auto it = before.find(i); it != before.end())
      for (const auto& extra : it->second) out.push_back(extra);
    out.push_back(std::move(f.items[i]));
  }
  for (auto& item : out)
    if (item.target >= 0) item.target = emit_start[item.target];
  f.items = std::move(out);
  return emit_start;
}

AsmItem nop_item() {
  AsmItem it;
  it.ins = make_instr(Mnemonic::addi, 0, 0, 0, 0);
  return it;
}

std::string sanitize_proto(const std::string& proto) {
  std::string out;
  for (char c : proto) {
    if (std::isalnum((unsigned char)c))
      out += c;
    else if (c == '(' || c == ',')
      out += '_';
  }
  return out;
}

}  // namespace

ProgramImage generate_dispatchers(const ProgramImage& img) {
  if (img.icall_sites.empty()) return img;
  Module m = lift(img);

  std::set<std::string> dispatcher_names;
  for (const auto& d : img.dispatchers) dispatcher_names.insert(d.name);

  // group sites by (prototype, address register)
  std::map<std::pair<std::string, u8>, std::vector<std::pair<size_t, size_t>>> groups;
  for (size_t fi = 0; fi < m.funcs.size(); ++fi)
    for (size_t ii = 0; ii < m.funcs[fi].items.size(); ++ii) {
      AsmItem& item = m.funcs[fi].items[ii];
      if (item.icall_proto.empty()) continue;
      if (item.ins.rd != 1)
        throw ToolError("indirect call must link through ra");
      if (item.ins.imm != 0)
        throw ToolError("indirect call must use a zero offset");
      if (item.ins.rs1 == 31)
        throw ToolError("indirect calls through t6 are unsupported (dispatcher scratch)");
      groups[{item.icall_proto, item.ins.rs1}].push_back({fi, ii});
    }

  // address-taken functions: referenced by a fixup outside dispatcher code
  std::set<std::string> taken;
  for (const auto& f : m.funcs) {
    if (dispatcher_names.count(f.name)) continue;
    for (const auto& item : f.items)
      if (item.has_reloc) taken.insert(item.reloc_symbol);
  }

  std::vector<DispatcherInfo> added;
  for (const auto& [key, sites] : groups) {
    const std::string& proto = key.first;
    const u8 reg = key.second;
    const std::string name = "__dispatch_" + sanitize_proto(proto) + "_" + reg_name(reg);

    if (!m.find(name)) {
      std::vector<std::string> members;
      for (const auto& f : m.funcs)
        if (f.proto == proto && f.handler_irq < 0 && !dispatcher_names.count(f.name))
          members.push_back(f.name);
      if (members.empty())
        throw ToolError("no functions match indirect call prototype " + proto);

      AsmFunction df;
      df.name = name;
      df.proto = proto;
      df.secured = true;
      for (size_t k = 0; k < members.size(); ++k) {
        const std::string& fn = members[k];
        AsmItem hi;
        hi.ins = make_instr(Mnemonic::lui, 31, 0, 0, 0);
        hi.has_reloc = true;
        hi.reloc_kind = RelocKind::hi20;
        hi.reloc_symbol = fn;
        df.items.push_back(std::move(hi));
        AsmItem lo;
        lo.ins = make_instr(Mnemonic::addi, 31, 31, 0, 0);
        lo.has_reloc = true;
        lo.reloc_kind = RelocKind::lo12;
        lo.reloc_symbol = fn;
        df.items.push_back(std::move(lo));
        AsmItem cmp;
        cmp.ins = make_instr(Mnemonic::bne, 0, reg, 31, 0);
        cmp.target = int(4 * (k + 1));  // next candidate, or the trap word
        df.items.push_back(std::move(cmp));
        AsmItem go;
        go.ins = make_instr(Mnemonic::jal, 0, 0, 0, 0);
        go.callee = fn;
        df.items.push_back(std::move(go));
      }
      AsmItem trapw;
      trapw.is_data = true;
      trapw.data = 0;  // no match: decoding this word faults
      df.items.push_back(std::move(trapw));
      m.funcs.push_back(std::move(df));
      dispatcher_names.insert(name);

      DispatcherInfo info;
      info.name = name;
      info.proto = proto;
      info.reg = reg;
      info.members = members;
      for (const auto& mem : members)
        if (taken.count(mem)) info.legitimate.push_back(mem);
      added.push_back(std::move(info));
    }

    for (auto [fi, ii] : sites) {
      AsmItem& site = m.funcs[fi].items[ii];
      site.ins = make_instr(Mnemonic::jal, 1, 0, 0, 0);
      site.callee = name;
      site.target = -1;
      site.icall_proto.clear();
    }
  }

  ProgramImage out = lower(m, &img);
  for (auto& d : added) out.dispatchers.push_back(std::move(d));
  out.has_signatures = false;
  refresh_counts(out);
  refresh_block_starts(out);
  return out;
}

ProgramImage eliminate_forwarding_deps(const ProgramImage& img) {
  Module m = lift(img);
  Cfg cfg = build_cfg(m);
  u32 inserted = 0;
  for (const auto& fc : cfg.funcs) {
    AsmFunction& f = m.funcs[fc.func_index];
    std::map<int, std::vector<AsmItem>> before;
    for (const auto& b : fc.blocks) {
      if (!b.executes()) continue;
      if (b.pred_textual < 0) continue;
      const BasicBlock& p = fc.blocks[b.pred_textual];
      const AsmItem& plast = f.items[p.first + p.count - 1];
      if (plast.is_data || !writes_in_execute(plast.ins)) continue;
      const AsmItem& bfirst = f.items[b.first];
      if (bfirst.is_data) continue;
      const u8 rd = plast.ins.rd;
      const bool hazard = (reads_rs1(bfirst.ins) && bfirst.ins.rs1 == rd) ||
                          (reads_rs2(bfirst.ins) && bfirst.ins.rs2 == rd);
      if (hazard) {
        before[b.first] = {nop_item()};
        ++inserted;
      }
    }
    if (!before.empty()) insert_before(f, before);
  }
  ProgramImage out = lower(m, &img);
  out.stats.nops += inserted;
  if (inserted) out.has_signatures = false;
  refresh_counts(out);
  refresh_block_starts(out);
  return out;
}

ProgramImage place_verifications(const ProgramImage& img) {
  if (!img.icall_sites.empty())
    throw ToolError("indirect calls must be dispatched before placing verifications");
  Module m = lift(img);
  bool changed = false;

  static const std::map<Mnemonic, Mnemonic> upgrade = {
      {Mnemonic::beq, Mnemonic::mafia_beq},   {Mnemonic::bne, Mnemonic::mafia_bne},
      {Mnemonic::blt, Mnemonic::mafia_blt},   {Mnemonic::bge, Mnemonic::mafia_bge},
      {Mnemonic::bltu, Mnemonic::mafia_bltu}, {Mnemonic::bgeu, Mnemonic::mafia_bgeu},
      {Mnemonic::jal, Mnemonic::mafia_jal},   {Mnemonic::jalr, Mnemonic::mafia_jalr},
  };

  for (auto& f : m.funcs) {
    if (!f.secured) continue;

    // A handler exit restores the interrupted signature, so the handler body
    // must be checked first: put a verified jump directly ahead of each mret.
    std::map<int, std::vector<AsmItem>> before;
    for (int i = 0; i < int(f.items.size()); ++i) {
      const AsmItem& item = f.items[i];
      if (item.is_data || item.ins.mnemonic != Mnemonic::mret) continue;
      const bool covered = i > 0 && !f.items[i - 1].is_data &&
                           f.items[i - 1].ins.mnemonic == Mnemonic::mafia_jal &&
                           f.items[i - 1].target == i;
      if (!covered) {
        AsmItem vj;
        vj.ins = make_instr(Mnemonic::mafia_jal, 0, 0, 0, 0);
        before[i] = {vj};
      }
    }
    if (!before.empty()) {
      changed = true;
      auto emit_start = insert_before(f, before);
      for (const auto& [old_i, extras] : before)
        f.items[emit_start[old_i]].target = emit_start[old_i] + int(extras.size());
    }

    for (auto& item : f.items) {
      if (item.is_data) continue;
      auto it = upgrade.find(item.ins.mnemonic);
      if (it == upgrade.end()) continue;
      if (item.ins.mnemonic == Mnemonic::jalr &&
          !(item.ins.rd == 0 && item.ins.rs1 == 1 && item.ins.imm == 0))
        throw ToolError("unexpected indirect jump in " + f.name);
      item.ins = make_instr(it->second, item.ins.rd, item.ins.rs1, item.ins.rs2, item.ins.imm);
      changed = true;
    }
  }

  build_cfg(m);  // reject structural damage early
  ProgramImage out = lower(m, &img);
  if (changed) out.has_signatures = false;
  refresh_counts(out);
  refresh_block_starts(out);
  return out;
}

ProgramImage place_patches(const ProgramImage& img) {
  if (!img.icall_sites.empty())
    throw ToolError("indirect calls must be dispatched before planning patches");
  if (!img.patch_plan.empty()) return img;  // already planned

  Module m = lift(img);
  Cfg cfg = build_cfg(m);
  const size_t nf = m.funcs.size();

  ReturnClasses rc = build_return_classes(m, cfg, img.dispatchers);
  auto class_exits = return_class_exits(m, cfg, rc);
  auto src = classify_signature_sources(m, cfg, rc);

  // Solve the donor structure: which in-edge supplies each block's entry
  // signature. Values come later; only solvability matters here.
  std::vector<std::vector<char>> resolved(nf);
  std::vector<std::vector<int>> donor(nf);
  for (size_t fi = 0; fi < nf; ++fi) {
    const size_t nb = cfg.funcs[fi].blocks.size();
    resolved[fi].assign(nb, 0);
    donor[fi].assign(nb, -1);
    for (size_t bi = 0; bi < nb; ++bi) {
      donor[fi][bi] = src[fi][bi].donor_pred;
      if (src[fi][bi].src == SigSrc::inert || src[fi][bi].src == SigSrc::anchor)
        resolved[fi][bi] = 1;
    }
  }

  // Donors must not form dependency cycles, but rotated loops (a join whose
  // only donors sit behind its own back edge) and recursive return classes
  // make cycles unavoidable. Those get a fresh entry value instead, paid for
  // by patching every edge in: a fresh join keeps donor -1, a fresh class
  // patches all of its exits, the canonical one included.
  std::set<std::string> fresh_class;
  for (;;) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (size_t fi = 0; fi < nf; ++fi) {
        const auto& fc = cfg.funcs[fi];
        for (const auto& b : fc.blocks) {
          if (resolved[fi][b.id]) continue;
          const BlockSigSrc& s = src[fi][b.id];
          switch (s.src) {
            case SigSrc::textual:
              if (resolved[fi][s.donor_pred]) resolved[fi][b.id] = 1;
              break;
            case SigSrc::retclass: {
              if (fresh_class.count(s.retclass)) {
                resolved[fi][b.id] = 1;
                break;
              }
              auto it = class_exits.find(s.retclass);
              if (it == class_exits.end() || it->second.empty())
                throw ToolError("calls to " + s.retclass + " never return, but " +
                                m.funcs[fi].name + " expects them to");
              auto [cfi, cbi] = it->second.front();
              if (resolved[cfi][cbi]) resolved[fi][b.id] = 1;
              break;
            }
            case SigSrc::chosen:
              for (int p : b.preds_taken)
                if (resolved[fi][p]) {
                  donor[fi][b.id] = p;
                  resolved[fi][b.id] = 1;
                  break;
                }
              break;
            default:
              break;
          }
          if (resolved[fi][b.id]) progress = true;
        }
      }
    }

    // Stalled: break the first stuck join in layout order, then the first
    // stuck return class. Repeats until everything resolves or only blocks
    // with structural errors remain.
    int bfi = -1, bbi = -1;
    std::string bclass;
    for (size_t fi = 0; fi < nf && bfi < 0; ++fi)
      for (const auto& b : cfg.funcs[fi].blocks) {
        if (resolved[fi][b.id]) continue;
        const BlockSigSrc& s = src[fi][b.id];
        if (s.src == SigSrc::chosen && !b.preds_taken.empty()) {
          bfi = int(fi);
          bbi = b.id;
          break;
        }
        if (s.src == SigSrc::retclass && bclass.empty() && !fresh_class.count(s.retclass))
          bclass = s.retclass;
      }
    if (bfi >= 0) {
      donor[bfi][bbi] = -1;
      resolved[bfi][bbi] = 1;
    } else if (!bclass.empty()) {
      fresh_class.insert(bclass);
    } else {
      break;
    }
  }

  {
    std::string stuck, unreachable;
    for (size_t fi = 0; fi < nf; ++fi)
      for (const auto& b : cfg.funcs[fi].blocks) {
        if (resolved[fi][b.id]) continue;
        const AsmFunction& f = m.funcs[fi];
        const std::string where =
            f.name + "+" + std::to_string(4 * (b.first));  // item offset, pre-layout
        if (src[fi][b.id].src == SigSrc::chosen && b.preds_taken.empty())
          unreachable += (unreachable.empty() ? "" : ", ") + where;
        else
          stuck += (stuck.empty() ? "" : ", ") + where;
      }
    if (!unreachable.empty())
      throw ToolError("unreachable blocks cannot be signed: " + unreachable);
    if (!stuck.empty())
      throw ToolError("unsolvable signature dependency cycle involving: " + stuck);
  }

  // Patched edges: every taken transfer that is not its target's donor.
  struct Edge {
    int fi = 0;
    int src_block = 0;
    int old_term = 0;  // item index before insertion
    PatchEdgeKind kind{};
    int to_block = -1;       // intra-function target
    std::string to_func;     // call / tail callee, ret owner
    u32 from_addr = 0, to_addr = 0;
    u32 slot = 0;
  };
  std::vector<Edge> edges;
  for (size_t fi = 0; fi < nf; ++fi) {
    const auto& fc = cfg.funcs[fi];
    for (const auto& b : fc.blocks) {
      if (!b.executes()) continue;
      Edge e;
      e.fi = int(fi);
      e.src_block = b.id;
      e.old_term = b.first + b.count - 1;
      switch (b.term) {
        case BlockTerm::branch:
        case BlockTerm::jump: {
          const BasicBlock& t = fc.blocks[b.succ_taken];
          if (!t.executes()) continue;  // transfers into trap words are not signed
          if (src[fi][t.id].src == SigSrc::chosen && donor[fi][t.id] == b.id)
            continue;  // donor edge
          e.kind = t.first <= b.first ? PatchEdgeKind::loop : PatchEdgeKind::merge;
          e.to_block = t.id;
          edges.push_back(e);
          break;
        }
        case BlockTerm::call:
          e.kind = PatchEdgeKind::call;
          e.to_func = b.callee;
          edges.push_back(e);
          break;
        case BlockTerm::tail:
          e.kind = PatchEdgeKind::tail;
          e.to_func = b.callee;
          edges.push_back(e);
          break;
        case BlockTerm::ret: {
          const std::string root = rc.find(m.funcs[fi].name);
          const auto& exits = class_exits.at(root);
          if (fresh_class.count(root) ||
              exits.front() != std::pair<int, int>{int(fi), b.id}) {
            e.kind = PatchEdgeKind::ret;
            e.to_func = m.funcs[fi].name;
            edges.push_back(e);
          }
          break;
        }
        default:
          break;
      }
    }
  }

  // Insert the patch loads ahead of each patched transfer.
  const int n_ldp = img.sig.is64() ? 2 : 1;
  std::vector<std::vector<int>> emit_start(nf);
  {
    std::map<int, std::map<int, std::vector<AsmItem>>> per_func;
    for (const auto& e : edges) {
      std::vector<AsmItem> ldps;
      for (int j = 0; j < n_ldp; ++j) {
        AsmItem li;
        li.ins = make_instr(Mnemonic::mafia_ldp, 0, 0, 0, 0);
        ldps.push_back(std::move(li));
      }
      per_func[e.fi][e.old_term] = std::move(ldps);
    }
    for (size_t fi = 0; fi < nf; ++fi) {
      auto it = per_func.find(int(fi));
      if (it != per_func.end())
        emit_start[fi] = insert_before(m.funcs[fi], it->second);
      else {
        emit_start[fi].resize(m.funcs[fi].items.size());
        for (size_t i = 0; i < m.funcs[fi].items.size(); ++i) emit_start[fi][i] = int(i);
      }
    }
  }
  relayout(m, img.text_base);

  // Slots in source-address order; the loader immediate is the slot index
  // (32-bit values) or the half index (64-bit values, high half first).
  for (auto& e : edges) {
    const auto& f = m.funcs[e.fi];
    e.from_addr = f.items[emit_start[e.fi][e.old_term] + n_ldp].addr;
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.from_addr < b.from_addr; });
  for (size_t k = 0; k < edges.size(); ++k) {
    Edge& e = edges[k];
    e.slot = u32(k);
    auto& f = m.funcs[e.fi];
    const int base = emit_start[e.fi][e.old_term];
    for (int j = 0; j < n_ldp; ++j) {
      const i32 imm = img.sig.is64() ? i32(2 * k + size_t(j)) : i32(k);
      f.items[base + j].ins = make_instr(Mnemonic::mafia_ldp, 0, 0, 0, imm);
    }
  }

  std::vector<PatchPlanEdge> plan;
  for (const auto& e : edges) {
    PatchPlanEdge pe;
    pe.from = e.from_addr;
    pe.slot = e.slot;
    pe.kind = e.kind;
    if (e.to_block >= 0) {
      const auto& fc = cfg.funcs[e.fi];
      const auto& f = m.funcs[e.fi];
      pe.to = f.items[emit_start[e.fi][fc.blocks[e.to_block].first]].addr;
    } else {
      pe.to = m.find(e.to_func)->addr;
    }
    plan.push_back(pe);
  }

  ProgramImage out = lower(m, &img);
  out.patch_plan = std::move(plan);
  out.patches.assign(edges.size() * img.sig.patch_bytes(), 0);
  out.instrumented = true;
  if (!edges.empty()) out.has_signatures = false;
  refresh_counts(out);
  refresh_block_starts(out);
  return out;
}

ProgramImage instrument(const ProgramImage& img) {
  ProgramImage out = generate_dispatchers(img);
  out = eliminate_forwarding_deps(out);
  out = place_verifications(out);
  out = place_patches(out);
  out.instrumented = true;
  return out;
}

}  // namespace mafia
