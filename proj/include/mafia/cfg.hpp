// Control-flow graph over a Module.
//
// Block boundaries follow the usual leader rules; what is unusual is the
// bookkeeping the signature planner needs on top of them:
//   - every block records its one textual predecessor (the block that can
//     reach it without a taken transfer), because that edge can never carry
//     a patch and therefore donates the block's entry signature;
//   - call-shaped terminators record the static callee (or, for tagged
//     indirect calls, the prototype class) so return-site blocks can be tied
//     to the callee's return signature;
//   - literal data words form trap blocks that execute nothing.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mafia/asm.hpp"

namespace mafia {

enum class BlockTerm : u8 {
  none,   // falls into the next block
  branch, // conditional, taken target + textual fallthrough
  jump,   // unconditional intra-function jump
  call,   // jal ra, f: control returns to the next block
  icall,  // tagged indirect call, not yet rewritten to a dispatcher
  tail,   // unconditional jump to another function's entry
  ret,    // return to the caller
  mret,   // interrupt handler exit
  crash,  // ecall/ebreak: stops the program, no successors
  trap,   // literal data word(s); decoding it faults
};

struct BasicBlock {
  int id = 0;
  int first = 0;  // item index range [first, first+count) in the function
  int count = 0;
  BlockTerm term = BlockTerm::none;
  int succ_taken = -1;  // taken / jump target block
  int succ_fall = -1;   // textual successor (fallthrough or return site)
  std::string callee;   // call/tail target, or the prototype for icall
  std::vector<int> preds_taken;
  int pred_textual = -1;  // block falling into this one, -1 if none

  bool is_exit() const { return term == BlockTerm::ret; }
  bool executes() const { return term != BlockTerm::trap; }
};

struct FuncCfg {
  int func_index = 0;
  std::vector<BasicBlock> blocks;    // in layout order; blocks[0] is the entry
  std::vector<int> block_of_item;    // item index -> block id
};

struct Cfg {
  std::vector<FuncCfg> funcs;  // parallel to Module::funcs
};

// Builds and checks the graph. Throws ToolError on structural errors: a
// function that falls off its end, an untagged indirect jump that is not a
// plain return, a call that does not link through ra, or a transfer into the
// middle of an instruction.
Cfg build_cfg(const Module& m);

// Leader addresses of every block, for the image manifest. The module must
// have been laid out.
std::vector<u32> block_leader_addrs(const Module& m, const Cfg& cfg);

// Union-find over function names. Functions whose returns must be
// interchangeable (tail-call chains, members of one dispatch class) share a
// single return signature; this groups them.
struct ReturnClasses {
  std::map<std::string, std::string> parent;
  std::string find(std::string x) {
    while (parent.at(x) != x) x = parent.at(x);
    return x;
  }
  void unite(const std::string& a, const std::string& b) { parent[find(a)] = find(b); }
};

ReturnClasses build_return_classes(const Module& m, const Cfg& cfg,
                                   const std::vector<DispatcherInfo>& dispatchers);

// Return blocks per class root, in layout order (function address, then
// block id). The first entry of a class is its canonical exit: the one whose
// computed exit signature defines the class return signature.
std::map<std::string, std::vector<std::pair<int, int>>> return_class_exits(
    const Module& m, const Cfg& cfg, ReturnClasses& rc);

// Where a block's entry signature comes from. Purely structural; the planner
// picks donors for `chosen` blocks and the signature generator computes the
// values.
enum class SigSrc : u8 {
  anchor,    // function entry: named constant
  textual,   // falls in from pred_textual; that exit value flows through
  retclass,  // return site: the callee class return signature
  chosen,    // reachable only through taken edges; one of them donates
  inert,     // trap block, never signed
};

struct BlockSigSrc {
  SigSrc src = SigSrc::anchor;
  int donor_pred = -1;    // textual: the donating block
  std::string retclass;   // retclass: class root name
};

std::vector<std::vector<BlockSigSrc>> classify_signature_sources(
    const Module& m, const Cfg& cfg, ReturnClasses& rc);

}  // namespace mafia
