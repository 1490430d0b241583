#include "mafia/asm.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>

namespace mafia {

AsmFunction* Module::find(const std::string& name) {
  for (auto& f : funcs)
    if (f.name == name) return &f;
  return nullptr;
}

const AsmFunction* Module::find(const std::string& name) const {
  for (const auto& f : funcs)
    if (f.name == name) return &f;
  return nullptr;
}

std::string normalize_proto(const std::string& ret, const std::vector<std::string>& args) {
  auto check = [](const std::string& tag) {
    if (tag != "void" && tag != "i32" && tag != "ptr" && tag != "f32")
      throw ToolError("unknown type tag: " + tag);
  };
  check(ret);
  std::string out = ret + "(";
  for (size_t i = 0; i < args.size(); ++i) {
    check(args[i]);
    if (args[i] == "void") throw ToolError("void is not an argument type");
    if (i) out += ",";
    out += args[i];
  }
  return out + ")";
}

namespace {

constexpr int kMnemonicCount = 50;

const std::map<std::string, Mnemonic>& mnemonic_table() {
  static const std::map<std::string, Mnemonic> table = [] {
    std::map<std::string, Mnemonic> t;
    for (int i = 0; i < kMnemonicCount; ++i) {
      auto m = Mnemonic(i);
      t.emplace(mnemonic_name(m), m);
    }
    return t;
  }();
  return table;
}

struct Tok {
  std::string text;
  int col;  // 1-based
};

bool ident_start(char c) { return std::isalpha((unsigned char)c) || c == '_' || c == '.'; }
bool ident_char(char c) { return std::isalnum((unsigned char)c) || c == '_' || c == '.'; }
bool is_ident(const std::string& s) { return !s.empty() && ident_start(s[0]); }
bool is_number_tok(const std::string& s) {
  return !s.empty() && (std::isdigit((unsigned char)s[0]) || (s[0] == '-' && s.size() > 1));
}

// One source line to tokens. ';' starts a comment. '#' does too, unless a
// digit or minus sign follows immediately: then it is an immediate-operand
// marker and is simply dropped.
std::vector<Tok> scan_line(const std::string& line, int lineno) {
  std::vector<Tok> toks;
  size_t i = 0;
  const size_t n = line.size();
  while (i < n) {
    char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == ';') break;
    if (c == '#') {
      if (i + 1 < n && (std::isdigit((unsigned char)line[i + 1]) || line[i + 1] == '-')) {
        ++i;
        continue;
      }
      break;
    }
    const int col = int(i) + 1;
    if (ident_start(c)) {
      size_t j = i;
      while (j < n && ident_char(line[j])) ++j;
      toks.push_back({line.substr(i, j - i), col});
      i = j;
      continue;
    }
    if (std::isdigit((unsigned char)c) ||
        (c == '-' && i + 1 < n && std::isdigit((unsigned char)line[i + 1]))) {
      size_t j = i + 1;
      while (j < n && std::isalnum((unsigned char)line[j])) ++j;
      toks.push_back({line.substr(i, j - i), col});
      i = j;
      continue;
    }
    if (c == '-' && i + 1 < n && line[i + 1] == '>') {
      toks.push_back({"->", col});
      i += 2;
      continue;
    }
    if (c == '%') {
      size_t j = i + 1;
      while (j < n && ident_char(line[j])) ++j;
      toks.push_back({line.substr(i, j - i), col});
      i = j;
      continue;
    }
    if (c == '(' || c == ')' || c == ',' || c == ':' || c == '+') {
      toks.push_back({std::string(1, c), col});
      ++i;
      continue;
    }
    throw AsmError(std::string("unexpected character '") + c + "'", lineno, col);
  }
  return toks;
}

i64 parse_number(const Tok& t, int lineno) {
  const std::string& s = t.text;
  try {
    size_t pos = 0;
    const bool neg = s[0] == '-';
    const std::string body = neg ? s.substr(1) : s;
    const int base = (body.size() > 1 && (body[1] == 'x' || body[1] == 'X')) ? 16 : 10;
    i64 v = i64(std::stoull(body, &pos, base));
    if (pos != body.size()) throw std::invalid_argument(s);
    return neg ? -v : v;
  } catch (const std::exception&) {
    throw AsmError("bad number: " + s, lineno, t.col);
  }
}

struct LineParser {
  const std::vector<Tok>& toks;
  size_t pos;
  int lineno;

  bool done() const { return pos >= toks.size(); }
  const Tok& peek() const {
    if (done()) throw AsmError("unexpected end of line", lineno, 1);
    return toks[pos];
  }
  Tok take() {
    const Tok t = peek();
    ++pos;
    return t;
  }
  void expect(const std::string& text) {
    Tok t = take();
    if (t.text != text)
      throw AsmError("expected '" + text + "', got '" + t.text + "'", lineno, t.col);
  }
  bool accept(const std::string& text) {
    if (!done() && toks[pos].text == text) {
      ++pos;
      return true;
    }
    return false;
  }
  std::string ident() {
    Tok t = take();
    if (!is_ident(t.text))
      throw AsmError("expected name, got '" + t.text + "'", lineno, t.col);
    return t.text;
  }
  u8 reg() {
    Tok t = take();
    auto r = reg_from_name(t.text);
    if (!r) throw AsmError("unknown register: " + t.text, lineno, t.col);
    return *r;
  }
  i64 number() {
    Tok t = take();
    if (!is_number_tok(t.text))
      throw AsmError("expected number, got '" + t.text + "'", lineno, t.col);
    return parse_number(t, lineno);
  }
  bool at_reloc() const {
    return !done() && (toks[pos].text == "%hi" || toks[pos].text == "%lo");
  }
  void end() const {
    if (!done())
      throw AsmError("trailing tokens: '" + toks[pos].text + "'", lineno, toks[pos].col);
  }
};

struct PendingRef {
  size_t func = 0, item = 0;
  std::string name;
  int lineno = 0;
  bool branch = false;  // branch targets must be labels in the same function
};

}  // namespace

Module parse_asm(const std::string& source, const std::string& filename) {
  (void)filename;
  Module mod;
  std::vector<std::map<std::string, int>> func_labels;
  std::vector<PendingRef> pending;
  std::vector<std::pair<std::string, int>> open_labels;  // bind to the next item
  std::string pending_icall;
  int icall_line = 0;
  bool in_header = false;

  auto cur = [&]() -> AsmFunction* { return mod.funcs.empty() ? nullptr : &mod.funcs.back(); };

  auto close_func = [&](int lineno) {
    if (!open_labels.empty())
      throw AsmError("label '" + open_labels.back().first + "' has no instruction",
                     open_labels.back().second, 1);
    if (!pending_icall.empty())
      throw AsmError(".icall tag with no indirect call after it", icall_line, 1);
    if (cur() && cur()->items.empty())
      throw AsmError("empty function: " + cur()->name, lineno, 1);
  };

  auto add_item = [&](AsmItem item, int lineno) {
    AsmFunction* f = cur();
    if (!f) throw AsmError("code outside a function", lineno, 1);
    in_header = false;
    for (auto& [name, line] : open_labels) {
      auto& lbls = func_labels.back();
      if (lbls.count(name)) throw AsmError("duplicate label: " + name, line, 1);
      lbls[name] = int(f->items.size());
    }
    open_labels.clear();
    if (!pending_icall.empty()) {
      if (item.is_data || item.ins.mnemonic != Mnemonic::jalr)
        throw AsmError(".icall must tag a jalr instruction", lineno, 1);
      item.icall_proto = pending_icall;
      pending_icall.clear();
    }
    f->items.push_back(std::move(item));
  };

  std::vector<std::string> lines;
  {
    size_t start = 0;
    while (true) {
      size_t e = source.find('\n', start);
      if (e == std::string::npos) {
        lines.push_back(source.substr(start));
        break;
      }
      lines.push_back(source.substr(start, e - start));
      start = e + 1;
    }
  }

  for (int ln = 1; ln <= int(lines.size()); ++ln) {
    auto toks = scan_line(lines[ln - 1], ln);
    if (toks.empty()) continue;
    LineParser p{toks, 0, ln};

    while (p.pos + 1 < toks.size() && is_ident(toks[p.pos].text) &&
           toks[p.pos + 1].text == ":") {
      if (mod.funcs.empty()) throw AsmError("label outside a function", ln, toks[p.pos].col);
      open_labels.push_back({toks[p.pos].text, ln});
      p.pos += 2;
    }
    if (p.done()) continue;

    const Tok head = p.take();

    if (head.text == ".func") {
      close_func(ln);
      AsmFunction f;
      f.name = p.ident();
      p.expect("(");
      std::vector<std::string> args;
      if (!p.accept(")")) {
        do {
          args.push_back(p.ident());
        } while (p.accept(","));
        p.expect(")");
      }
      p.expect("->");
      const std::string ret = p.ident();
      p.end();
      try {
        f.proto = normalize_proto(ret, args);
      } catch (const ToolError& e) {
        throw AsmError(e.what(), ln, head.col);
      }
      for (const auto& g : mod.funcs)
        if (g.name == f.name) throw AsmError("duplicate function: " + f.name, ln, head.col);
      mod.funcs.push_back(std::move(f));
      func_labels.emplace_back();
      in_header = true;
      continue;
    }
    if (head.text == ".secured") {
      p.end();
      if (!cur() || !in_header)
        throw AsmError(".secured belongs in a function header", ln, head.col);
      cur()->secured = true;
      continue;
    }
    if (head.text == ".handler") {
      const i64 irq = p.number();
      p.end();
      if (!cur() || !in_header)
        throw AsmError(".handler belongs in a function header", ln, head.col);
      if (irq < 0 || irq >= memmap::kIrqLines)
        throw AsmError("interrupt line out of range", ln, head.col);
      cur()->handler_irq = int(irq);
      cur()->secured = true;  // handlers are always verified
      continue;
    }
    if (head.text == ".global") {
      p.ident();  // every function name is already global; kept for compatibility
      p.end();
      continue;
    }
    if (head.text == ".icall") {
      const std::string ret = p.ident();
      p.expect("(");
      std::vector<std::string> args;
      if (!p.accept(")")) {
        do {
          args.push_back(p.ident());
        } while (p.accept(","));
        p.expect(")");
      }
      p.end();
      if (!pending_icall.empty()) throw AsmError("dangling .icall tag", icall_line, 1);
      try {
        pending_icall = normalize_proto(ret, args);
      } catch (const ToolError& e) {
        throw AsmError(e.what(), ln, head.col);
      }
      icall_line = ln;
      continue;
    }
    if (head.text == ".word") {
      const i64 v = p.number();
      p.end();
      if (v < i64(std::numeric_limits<i32>::min()) || v > i64(0xFFFFFFFFll))
        throw AsmError("word literal out of range", ln, head.col);
      AsmItem item;
      item.is_data = true;
      item.data = u32(v);
      add_item(std::move(item), ln);
      continue;
    }
    if (head.text[0] == '.') throw AsmError("unknown directive: " + head.text, ln, head.col);

    auto emit_ins = [&](Instruction ins) {
      AsmItem item;
      item.ins = ins;
      add_item(std::move(item), ln);
    };
    auto imm_i32 = [&](i64 v) {
      if (v < std::numeric_limits<i32>::min() || v > i64(0xFFFFFFFFll))
        throw AsmError("immediate out of range", ln, head.col);
      return i32(u32(u64(v)));
    };
    auto make_checked = [&](Mnemonic m, u8 rd, u8 rs1, u8 rs2, i32 imm) {
      try {
        return make_instr(m, rd, rs1, rs2, imm);
      } catch (const ToolError& e) {
        throw AsmError(e.what(), ln, head.col);
      }
    };
    auto target_operand = [&](bool branch) {
      if (mod.funcs.empty()) throw AsmError("code outside a function", ln, head.col);
      const std::string name = p.ident();
      pending.push_back({mod.funcs.size() - 1, cur()->items.size(), name, ln, branch});
    };
    auto reloc_operand = [&](RelocKind expect_kind, Instruction ins) {
      const bool hi = p.take().text == "%hi";
      if ((expect_kind == RelocKind::hi20) != hi)
        throw AsmError(hi ? "%hi is not valid here" : "%lo is not valid here", ln, head.col);
      p.expect("(");
      AsmItem item;
      item.ins = ins;
      item.has_reloc = true;
      item.reloc_kind = expect_kind;
      item.reloc_symbol = p.ident();
      if (!p.accept(")")) {
        p.accept("+");  // negative addends carry their own sign
        item.reloc_addend = imm_i32(p.number());
        p.expect(")");
      }
      p.end();
      add_item(std::move(item), ln);
    };

    const std::string& mn = head.text;

    if (mn == "nop") {
      p.end();
      emit_ins(make_checked(Mnemonic::addi, 0, 0, 0, 0));
      continue;
    }
    if (mn == "ret") {
      p.end();
      emit_ins(make_checked(Mnemonic::jalr, 0, 1, 0, 0));
      continue;
    }
    if (mn == "mv") {
      u8 rd = p.reg();
      p.expect(",");
      u8 rs = p.reg();
      p.end();
      emit_ins(make_checked(Mnemonic::addi, rd, rs, 0, 0));
      continue;
    }
    if (mn == "j") {
      target_operand(false);
      p.end();
      emit_ins(make_checked(Mnemonic::jal, 0, 0, 0, 0));
      continue;
    }
    if (mn == "call") {
      target_operand(false);
      p.end();
      emit_ins(make_checked(Mnemonic::jal, 1, 0, 0, 0));
      continue;
    }
    if (mn == "li") {
      u8 rd = p.reg();
      p.expect(",");
      const i32 v = imm_i32(p.number());
      p.end();
      if (v >= -2048 && v <= 2047) {
        emit_ins(make_checked(Mnemonic::addi, rd, 0, 0, v));
      } else {
        const u32 uv = u32(v);
        emit_ins(make_checked(Mnemonic::lui, rd, 0, 0, i32(((uv + 0x800u) >> 12) << 12)));
        const i32 lo = i32(uv << 20) >> 20;
        if (lo != 0) emit_ins(make_checked(Mnemonic::addi, rd, rd, 0, lo));
      }
      continue;
    }
    if (mn == "la") {
      u8 rd = p.reg();
      p.expect(",");
      const std::string sym = p.ident();
      p.end();
      // Always the two-instruction form so layout never depends on the
      // symbol's final address.
      AsmItem hi;
      hi.ins = make_checked(Mnemonic::lui, rd, 0, 0, 0);
      hi.has_reloc = true;
      hi.reloc_kind = RelocKind::hi20;
      hi.reloc_symbol = sym;
      add_item(std::move(hi), ln);
      AsmItem lo;
      lo.ins = make_checked(Mnemonic::addi, rd, rd, 0, 0);
      lo.has_reloc = true;
      lo.reloc_kind = RelocKind::lo12;
      lo.reloc_symbol = sym;
      add_item(std::move(lo), ln);
      continue;
    }

    auto it = mnemonic_table().find(mn);
    if (it == mnemonic_table().end())
      throw AsmError("unknown mnemonic: " + mn, ln, head.col);
    const Mnemonic m = it->second;

    switch (make_instr(m, 0, 0, 0, 0).kind) {
      case InstrKind::branch:
      case InstrKind::mafia_branch: {
        u8 rs1 = p.reg();
        p.expect(",");
        u8 rs2 = p.reg();
        p.expect(",");
        target_operand(true);
        p.end();
        emit_ins(make_checked(m, 0, rs1, rs2, 0));
        break;
      }
      case InstrKind::jal:
      case InstrKind::mafia_jal: {
        u8 rd = 1;  // plain "jal target" links through ra
        if (p.pos + 1 < toks.size() && toks[p.pos + 1].text == ",") {
          rd = p.reg();
          p.expect(",");
        }
        target_operand(false);
        p.end();
        emit_ins(make_checked(m, rd, 0, 0, 0));
        break;
      }
      case InstrKind::jalr:
      case InstrKind::mafia_jalr: {
        u8 rd = p.reg();
        p.expect(",");
        u8 rs1 = p.reg();
        p.expect(",");
        const i32 v = imm_i32(p.number());
        p.end();
        emit_ins(make_checked(m, rd, rs1, 0, v));
        break;
      }
      case InstrKind::load: {
        u8 rd = p.reg();
        p.expect(",");
        const i32 off = imm_i32(p.number());
        p.expect("(");
        u8 rs1 = p.reg();
        p.expect(")");
        p.end();
        emit_ins(make_checked(m, rd, rs1, 0, off));
        break;
      }
      case InstrKind::store: {
        u8 rs2 = p.reg();
        p.expect(",");
        const i32 off = imm_i32(p.number());
        p.expect("(");
        u8 rs1 = p.reg();
        p.expect(")");
        p.end();
        emit_ins(make_checked(m, 0, rs1, rs2, off));
        break;
      }
      case InstrKind::ldp: {
        const i64 slot = p.number();
        p.end();
        if (slot < 0 || slot > 0xFFFFF)
          throw AsmError("patch index out of range", ln, head.col);
        emit_ins(make_checked(m, 0, 0, 0, i32(slot)));
        break;
      }
      case InstrKind::system:
      case InstrKind::nop:
        if (m == Mnemonic::fence || m == Mnemonic::ecall || m == Mnemonic::ebreak ||
            m == Mnemonic::mret) {
          p.end();
          emit_ins(make_checked(m, 0, 0, 0, 0));
          break;
        }
        [[fallthrough]];
      case InstrKind::alu: {
        if (m == Mnemonic::lui || m == Mnemonic::auipc) {
          u8 rd = p.reg();
          p.expect(",");
          if (p.at_reloc()) {
            reloc_operand(RelocKind::hi20, make_checked(m, rd, 0, 0, 0));
          } else {
            const i64 field = p.number();
            p.end();
            if (field < 0 || field > 0xFFFFF)
              throw AsmError("upper immediate out of range", ln, head.col);
            emit_ins(make_checked(m, rd, 0, 0, i32(u32(field) << 12)));
          }
          break;
        }
        u8 rd = p.reg();
        p.expect(",");
        u8 rs1 = p.reg();
        p.expect(",");
        const bool rtype = m == Mnemonic::add || m == Mnemonic::sub || m == Mnemonic::sll ||
                           m == Mnemonic::slt || m == Mnemonic::sltu ||
                           m == Mnemonic::xor_ || m == Mnemonic::srl ||
                           m == Mnemonic::sra || m == Mnemonic::or_ || m == Mnemonic::and_;
        if (rtype) {
          u8 rs2 = p.reg();
          p.end();
          emit_ins(make_checked(m, rd, rs1, rs2, 0));
        } else if (p.at_reloc()) {
          if (m != Mnemonic::addi)
            throw AsmError("address fixups are only valid on addi", ln, head.col);
          reloc_operand(RelocKind::lo12, make_checked(m, rd, rs1, 0, 0));
        } else {
          const i32 v = imm_i32(p.number());
          p.end();
          emit_ins(make_checked(m, rd, rs1, 0, v));
        }
        break;
      }
      default:
        throw AsmError("unsupported mnemonic: " + mn, ln, head.col);
    }
  }
  close_func(int(lines.size()));
  if (mod.funcs.empty()) throw AsmError("no functions in input", 1, 1);

  for (const auto& ref : pending) {
    AsmItem& item = mod.funcs[ref.func].items[ref.item];
    const auto& lbls = func_labels[ref.func];
    auto lit = lbls.find(ref.name);
    if (lit != lbls.end()) {
      item.target = lit->second;
      continue;
    }
    if (ref.branch) throw AsmError("branch target not found: " + ref.name, ref.lineno, 1);
    if (!mod.find(ref.name)) throw AsmError("jump target not found: " + ref.name, ref.lineno, 1);
    item.callee = ref.name;
  }
  return mod;
}

void relayout(Module& m, u32 text_base) {
  u32 addr = text_base;
  for (auto& f : m.funcs) {
    f.addr = addr;
    for (auto& item : f.items) {
      item.addr = addr;
      addr += item.size();
    }
    f.end = addr;
  }
}

ProgramImage lower(const Module& m, const ProgramImage* carry) {
  Module tmp = m;
  relayout(tmp, carry ? carry->text_base : memmap::kTextBase);

  ProgramImage img;
  if (carry) {
    img.text_base = carry->text_base;
    img.sig = carry->sig;
    img.boot_iv = carry->boot_iv;
    img.iv_table = carry->iv_table;
    img.dispatchers = carry->dispatchers;
    img.stats = carry->stats;
    img.patches = carry->patches;
    img.patch_plan = carry->patch_plan;
    img.instrumented = carry->instrumented;
    img.has_signatures = carry->has_signatures;
  }

  for (const auto& f : tmp.funcs) {
    img.symbols[f.name] = f.addr;
    FuncInfo fi;
    fi.name = f.name;
    fi.addr = f.addr;
    fi.end = f.end;
    fi.secured = f.secured;
    fi.proto = f.proto;
    fi.handler_irq = f.handler_irq;
    img.functions.push_back(std::move(fi));
  }
  auto entry = img.symbols.find("_start");
  if (entry == img.symbols.end()) throw ToolError("no _start function");
  img.entry = entry->second;

  for (const auto& f : tmp.funcs) {
    for (const auto& item : f.items) {
      if (item.is_data) {
        img.text.push_back(item.data);
        img.data_words.push_back(item.addr);
        continue;
      }
      Instruction ins = item.ins;
      if (item.target >= 0) {
        if (size_t(item.target) >= f.items.size())
          throw ToolError("dangling target in " + f.name);
        ins.imm = i32(f.items[item.target].addr - item.addr);
      } else if (!item.callee.empty()) {
        auto sym = img.symbols.find(item.callee);
        if (sym == img.symbols.end()) throw ToolError("unknown symbol: " + item.callee);
        ins.imm = i32(sym->second - item.addr);
      }
      if (item.has_reloc) {
        auto sym = img.symbols.find(item.reloc_symbol);
        if (sym == img.symbols.end())
          throw ToolError("unknown symbol: " + item.reloc_symbol);
        const u32 value = sym->second + u32(item.reloc_addend);
        ins.imm = item.reloc_kind == RelocKind::hi20 ? i32(((value + 0x800u) >> 12) << 12)
                                                     : i32(value << 20) >> 20;
        img.relocs.push_back({item.addr, item.reloc_kind, item.reloc_symbol, item.reloc_addend});
      }
      ins.word = encode(ins);
      img.text.push_back(ins.word);
      if (ins.is_verification()) {
        img.text.push_back(item.ref);
        img.data_words.push_back(item.addr + 4);
      }
      if (!item.icall_proto.empty())
        img.icall_sites.push_back({item.addr, item.icall_proto});
    }
  }
  validate_image(img);
  return img;
}

Module lift(const ProgramImage& img) {
  Module m;
  std::vector<FuncInfo> funcs = img.functions;
  std::sort(funcs.begin(), funcs.end(),
            [](const FuncInfo& a, const FuncInfo& b) { return a.addr < b.addr; });

  std::map<u32, const Reloc*> reloc_at;
  for (const auto& r : img.relocs) reloc_at[r.addr] = &r;
  std::map<u32, const IcallSite*> icall_at;
  for (const auto& s : img.icall_sites) icall_at[s.addr] = &s;

  for (const auto& fi : funcs) {
    AsmFunction f;
    f.name = fi.name;
    f.secured = fi.secured;
    f.proto = fi.proto;
    f.handler_irq = fi.handler_irq;
    f.addr = fi.addr;
    f.end = fi.end;

    std::map<u32, int> idx_at;
    u32 a = fi.addr;
    while (a < fi.end) {
      AsmItem item;
      item.addr = a;
      if (img.is_data_word(a)) {
        item.is_data = true;
        item.data = img.word_at(a);
        a += 4;
      } else {
        auto d = decode(img.word_at(a));
        if (!d) throw ToolError("undecodable word at " + hex32(a));
        item.ins = *d;
        if (d->is_verification()) {
          if (a + 8 > fi.end || !img.is_data_word(a + 4))
            throw ToolError("verification at " + hex32(a) + " has no reference word");
          item.ref = img.word_at(a + 4);
          a += 8;
        } else {
          a += 4;
        }
        if (auto rit = reloc_at.find(item.addr); rit != reloc_at.end()) {
          item.has_reloc = true;
          item.reloc_kind = rit->second->kind;
          item.reloc_symbol = rit->second->symbol;
          item.reloc_addend = rit->second->addend;
        }
        if (auto iit = icall_at.find(item.addr); iit != icall_at.end())
          item.icall_proto = iit->second->proto;
      }
      idx_at[item.addr] = int(f.items.size());
      f.items.push_back(std::move(item));
    }

    for (auto& item : f.items) {
      if (item.is_data) continue;
      const InstrKind k = item.ins.kind;
      if (k != InstrKind::branch && k != InstrKind::mafia_branch && k != InstrKind::jal &&
          k != InstrKind::mafia_jal)
        continue;
      const u32 t = item.addr + u32(item.ins.imm);
      const bool self_call = t == fi.addr && item.ins.rd != 0 &&
                             (k == InstrKind::jal || k == InstrKind::mafia_jal);
      if (t >= fi.addr && t < fi.end && !self_call) {
        auto tit = idx_at.find(t);
        if (tit == idx_at.end())
          throw ToolError("transfer at " + hex32(item.addr) + " lands between items");
        item.target = tit->second;
        continue;
      }
      if (k == InstrKind::branch || k == InstrKind::mafia_branch)
        throw ToolError("branch at " + hex32(item.addr) + " leaves its function");
      const FuncInfo* callee = img.function_at(t);
      if (!callee || callee->addr != t)
        throw ToolError("jump at " + hex32(item.addr) + " into the middle of a function");
      item.callee = callee->name;
    }
    m.funcs.push_back(std::move(f));
  }
  return m;
}

ProgramImage assemble(const std::string& source, const SigConfig& sig, u64 boot_iv,
                      const std::string& filename) {
  Module m = parse_asm(source, filename);
  ProgramImage img = lower(m);
  img.sig = sig;
  img.boot_iv = boot_iv;
  img.stats.baseline_text_bytes = u32(img.text.size()) * 4;
  return img;
}

}  // namespace mafia
