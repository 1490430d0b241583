#include "mafia/cfg.hpp"

#include <algorithm>

namespace mafia {

namespace {

bool ends_block(const AsmItem& item) {
  if (item.is_data) return true;
  if (item.ins.is_control_flow()) return true;
  return item.ins.mnemonic == Mnemonic::ecall || item.ins.mnemonic == Mnemonic::ebreak;
}

}  // namespace

Cfg build_cfg(const Module& m) {
  Cfg cfg;
  for (size_t fi = 0; fi < m.funcs.size(); ++fi) {
    const AsmFunction& f = m.funcs[fi];
    const int n = int(f.items.size());
    if (n == 0) throw ToolError("empty function: " + f.name);

    std::vector<char> leader(n, 0);
    leader[0] = 1;
    for (int i = 0; i < n; ++i) {
      const AsmItem& item = f.items[i];
      if (item.target >= 0) {
        if (item.target >= n) throw ToolError("dangling target in " + f.name);
        leader[item.target] = 1;
      }
      if (item.is_data) leader[i] = 1;  // data never shares a block with code
      if (ends_block(item) && i + 1 < n) leader[i + 1] = 1;
    }

    FuncCfg fc;
    fc.func_index = int(fi);
    fc.block_of_item.assign(n, -1);
    for (int i = 0; i < n; ++i) {
      if (leader[i]) {
        BasicBlock b;
        b.id = int(fc.blocks.size());
        b.first = i;
        fc.blocks.push_back(b);
      }
      BasicBlock& b = fc.blocks.back();
      fc.block_of_item[i] = b.id;
      b.count++;
    }

    auto block_at_item = [&](int item) { return fc.block_of_item[item]; };

    for (auto& b : fc.blocks) {
      const AsmItem& last = f.items[b.first + b.count - 1];
      const bool has_next = size_t(b.id) + 1 < fc.blocks.size();

      if (last.is_data) {
        b.term = BlockTerm::trap;
        continue;
      }
      const Instruction& ins = last.ins;
      switch (ins.kind) {
        case InstrKind::branch:
        case InstrKind::mafia_branch:
          b.term = BlockTerm::branch;
          b.succ_taken = block_at_item(last.target);
          if (!has_next)
            throw ToolError("function falls off its end: " + f.name);
          b.succ_fall = b.id + 1;
          break;
        case InstrKind::jal:
        case InstrKind::mafia_jal:
          if (ins.rd == 0) {
            if (last.target >= 0) {
              b.term = BlockTerm::jump;
              b.succ_taken = block_at_item(last.target);
            } else {
              b.term = BlockTerm::tail;
              b.callee = last.callee;
            }
          } else if (ins.rd == 1) {
            if (last.target >= 0)
              throw ToolError("call into the middle of " + f.name);
            b.term = BlockTerm::call;
            b.callee = last.callee;
            if (!has_next)
              throw ToolError("call at the end of " + f.name + " has no return site");
            b.succ_fall = b.id + 1;
          } else {
            throw ToolError("call in " + f.name + " must link through ra");
          }
          break;
        case InstrKind::jalr:
        case InstrKind::mafia_jalr:
          if (!last.icall_proto.empty()) {
            if (ins.rd != 1)
              throw ToolError("tagged indirect call in " + f.name + " must link through ra");
            b.term = BlockTerm::icall;
            b.callee = last.icall_proto;
            if (!has_next)
              throw ToolError("indirect call at the end of " + f.name + " has no return site");
            b.succ_fall = b.id + 1;
          } else if (ins.rd == 0 && ins.rs1 == 1 && ins.imm == 0) {
            b.term = BlockTerm::ret;
          } else {
            throw ToolError("indirect jump in " + f.name +
                            " requires a dispatch tag (.icall)");
          }
          break;
        default:
          if (ins.mnemonic == Mnemonic::mret) {
            b.term = BlockTerm::mret;
          } else if (ins.mnemonic == Mnemonic::ecall || ins.mnemonic == Mnemonic::ebreak) {
            b.term = BlockTerm::crash;
          } else {
            b.term = BlockTerm::none;
            if (!has_next)
              throw ToolError("function falls off its end: " + f.name);
            b.succ_fall = b.id + 1;
          }
          break;
      }
    }

    for (auto& b : fc.blocks) {
      if (b.succ_taken >= 0) fc.blocks[b.succ_taken].preds_taken.push_back(b.id);
      if (b.succ_fall >= 0 && (b.term == BlockTerm::none || b.term == BlockTerm::branch))
        fc.blocks[b.succ_fall].pred_textual = b.id;
      // Call-shaped blocks reach their successor only through the callee's
      // return, so they are not textual signature donors.
    }
    cfg.funcs.push_back(std::move(fc));
  }
  return cfg;
}

std::vector<u32> block_leader_addrs(const Module& m, const Cfg& cfg) {
  std::vector<u32> out;
  for (const auto& fc : cfg.funcs) {
    const AsmFunction& f = m.funcs[fc.func_index];
    for (const auto& b : fc.blocks) out.push_back(f.items[b.first].addr);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ReturnClasses build_return_classes(const Module& m, const Cfg& cfg,
                                   const std::vector<DispatcherInfo>& dispatchers) {
  ReturnClasses rc;
  for (const auto& f : m.funcs) rc.parent[f.name] = f.name;
  for (size_t fi = 0; fi < m.funcs.size(); ++fi)
    for (const auto& b : cfg.funcs[fi].blocks)
      if (b.term == BlockTerm::tail) rc.unite(m.funcs[fi].name, b.callee);
  for (const auto& d : dispatchers)
    for (const auto& mem : d.members) rc.unite(d.name, mem);
  return rc;
}

std::map<std::string, std::vector<std::pair<int, int>>> return_class_exits(
    const Module& m, const Cfg& cfg, ReturnClasses& rc) {
  std::map<std::string, std::vector<std::pair<int, int>>> exits;
  for (size_t fi = 0; fi < m.funcs.size(); ++fi)
    for (const auto& b : cfg.funcs[fi].blocks)
      if (b.term == BlockTerm::ret)
        exits[rc.find(m.funcs[fi].name)].push_back({int(fi), b.id});
  return exits;
}

std::vector<std::vector<BlockSigSrc>> classify_signature_sources(
    const Module& m, const Cfg& cfg, ReturnClasses& rc) {
  std::vector<std::vector<BlockSigSrc>> out(m.funcs.size());
  for (size_t fi = 0; fi < m.funcs.size(); ++fi) {
    const auto& fc = cfg.funcs[fi];
    out[fi].resize(fc.blocks.size());

    std::vector<int> retsite_from(fc.blocks.size(), -1);
    for (const auto& b : fc.blocks)
      if ((b.term == BlockTerm::call || b.term == BlockTerm::icall) && b.succ_fall >= 0)
        retsite_from[b.succ_fall] = b.id;

    for (const auto& b : fc.blocks) {
      BlockSigSrc& s = out[fi][b.id];
      if (!b.executes()) {
        s.src = SigSrc::inert;
      } else if (b.id == 0) {
        s.src = SigSrc::anchor;
      } else if (b.pred_textual >= 0) {
        s.src = SigSrc::textual;
        s.donor_pred = b.pred_textual;
      } else if (retsite_from[b.id] >= 0) {
        s.src = SigSrc::retclass;
        s.retclass = rc.find(fc.blocks[retsite_from[b.id]].callee);
      } else {
        s.src = SigSrc::chosen;
      }
    }
  }
  return out;
}

}  // namespace mafia
