#include <doctest.h>

#include <string>

#include "mafia/asm.hpp"
#include "support.hpp"

using namespace mafia;

TEST_CASE("functions, labels and symbols get laid out in order") {
  auto img = ts::bare(
      ".func _start() -> void\n"
      "  li a0, 3\n"
      "  lui t0, 0x40000\n"
      "  sw a0, 0(t0)\n"
      "spin:\n"
      "  j spin\n"
      "\n"
      ".func f(i32) -> i32\n"
      "  ret\n");
  REQUIRE(img.functions.size() == 2);
  CHECK(img.functions[0].name == "_start");
  CHECK(img.functions[0].addr == memmap::kTextBase);
  CHECK(img.entry == memmap::kTextBase);
  CHECK(img.functions[1].name == "f");
  CHECK(img.functions[1].addr == img.functions[0].end);
  CHECK(img.symbols.at("f") == img.functions[1].addr);
  CHECK(img.stats.baseline_text_bytes == img.text.size() * 4);

  // spin: j spin assembles to jal x0, 0
  const u32 spin = memmap::kTextBase + 12;
  auto j = decode(img.word_at(spin));
  REQUIRE(j.has_value());
  CHECK(j->mnemonic == Mnemonic::jal);
  CHECK(j->rd == 0);
  CHECK(j->imm == 0);
}

TEST_CASE("li expands by immediate size") {
  // Fits addi: one instruction.
  auto small = ts::bare(".func _start() -> void\n  li a0, -5\nx:\n  j x\n");
  auto i0 = decode(small.word_at(memmap::kTextBase));
  REQUIRE(i0.has_value());
  CHECK(i0->mnemonic == Mnemonic::addi);
  CHECK(i0->rs1 == 0);
  CHECK(i0->imm == -5);

  // Needs the upper part: lui + addi, and the addi sign quirk is
  // compensated in the lui field.
  auto big = ts::bare(".func _start() -> void\n  li a0, 0x12345FFF\nx:\n  j x\n");
  auto hi = decode(big.word_at(memmap::kTextBase));
  auto lo = decode(big.word_at(memmap::kTextBase + 4));
  REQUIRE(hi.has_value());
  REQUIRE(lo.has_value());
  CHECK(hi->mnemonic == Mnemonic::lui);
  CHECK(lo->mnemonic == Mnemonic::addi);
  const u32 val = (u32(hi->imm) & 0xFFFFF000u) + u32(lo->imm);
  CHECK(val == 0x12345FFFu);
}

TEST_CASE("la materializes a symbol address and survives relayout") {
  auto img = ts::bare(ts::with_start(
      ".func f() -> i32\n"
      "  la a0, f\n"
      "  ret\n"));
  REQUIRE(img.relocs.size() == 2);
  CHECK(img.relocs[0].symbol == "f");
  CHECK(img.relocs[1].symbol == "f");

  const FuncInfo* f = img.function_named("f");
  REQUIRE(f != nullptr);
  auto hi = decode(img.word_at(f->addr));
  auto lo = decode(img.word_at(f->addr + 4));
  REQUIRE(hi.has_value());
  REQUIRE(lo.has_value());
  CHECK((u32(hi->imm) + u32(lo->imm)) == f->addr);

  // Nothing moved: lift + lower reproduces the image bit for bit.
  Module m = lift(img);
  ProgramImage again = lower(m, &img);
  CHECK(again.text == img.text);
}

TEST_CASE("pseudo instructions lower to their base forms") {
  auto img = ts::bare(
      ".func _start() -> void\n"
      "  nop\n"
      "  mv a1, a0\n"
      "  call f\n"
      "  ret\n"
      "\n"
      ".func f() -> void\n"
      "  ret\n");
  const u32 base = memmap::kTextBase;
  auto nop = decode(img.word_at(base));
  CHECK(nop->mnemonic == Mnemonic::addi);
  CHECK(nop->rd == 0);
  auto mv = decode(img.word_at(base + 4));
  CHECK(mv->mnemonic == Mnemonic::addi);
  CHECK(mv->rd == 11);
  CHECK(mv->rs1 == 10);
  CHECK(mv->imm == 0);
  auto call = decode(img.word_at(base + 8));
  CHECK(call->mnemonic == Mnemonic::jal);
  CHECK(call->rd == 1);
  auto ret = decode(img.word_at(base + 12));
  CHECK(ret->mnemonic == Mnemonic::jalr);
  CHECK(ret->rd == 0);
  CHECK(ret->rs1 == 1);
  CHECK(ret->imm == 0);
}

TEST_CASE("data words are recorded and kept out of the decode path") {
  auto img = ts::bare(
      ".func _start() -> void\n"
      "x:\n"
      "  j x\n"
      "tab:\n"
      "  .word 0xdeadbeef\n"
      "  .word 7\n");
  const u32 base = memmap::kTextBase;
  CHECK(img.is_data_word(base + 4));
  CHECK(img.is_data_word(base + 8));
  CHECK(!img.is_data_word(base));
  CHECK(img.word_at(base + 4) == 0xdeadbeefu);
  CHECK(img.word_at(base + 8) == 7u);
}

TEST_CASE("icall tags attach to the next jalr") {
  auto img = ts::bare(
      ".func _start() -> void\n"
      "  la t3, f\n"
      "  .icall i32(i32)\n"
      "  jalr ra, t3, 0\n"
      "x:\n"
      "  j x\n"
      "\n"
      ".func f(i32) -> i32\n"
      "  ret\n");
  REQUIRE(img.icall_sites.size() == 1);
  CHECK(img.icall_sites[0].proto == "i32(i32)");
  CHECK(img.icall_sites[0].addr == memmap::kTextBase + 8);
}

TEST_CASE("header directives set function attributes") {
  auto img = ts::bare(
      ".func _start() -> void\n"
      "x:\n"
      "  j x\n"
      "\n"
      ".func f() -> void\n"
      ".secured\n"
      "  ret\n"
      "\n"
      ".func h() -> void\n"
      ".handler 3\n"
      "  mret\n");
  CHECK(!img.function_named("_start")->secured);
  CHECK(img.function_named("f")->secured);
  const FuncInfo* h = img.function_named("h");
  CHECK(h->handler_irq == 3);
  CHECK(h->secured);  // handlers are always monitored
}

TEST_CASE("source errors carry positions and reasons") {
  // Unknown mnemonic.
  CHECK_THROWS_AS(ts::bare(".func _start() -> void\n  frob a0\n"), AsmError);
  // Unknown register.
  CHECK_THROWS_AS(ts::bare(".func _start() -> void\n  addi q0, q0, 1\n"), AsmError);
  // Branch to a label in another function is not representable.
  CHECK_THROWS_AS(ts::bare(".func _start() -> void\n  beq a0, a0, elsewhere\n"
                           "\n.func f() -> void\nelsewhere:\n  ret\n"),
                  AsmError);
  // Immediate out of range for addi.
  CHECK_THROWS_AS(ts::bare(".func _start() -> void\n  addi a0, a0, 5000\nx:\n  j x\n"),
                  ToolError);
  // Code outside any function.
  CHECK_THROWS_AS(ts::bare("  addi a0, a0, 1\n"), AsmError);
}

TEST_CASE("lift then lower is the identity on built images") {
  const std::string src = ts::with_start(
      ".func f(i32) -> i32\n"
      ".secured\n"
      "  li t0, 3\n"
      "  blt a0, t0, low\n"
      "  addi a0, a0, 10\n"
      "  ret\n"
      "low:\n"
      "  addi a0, a0, 1\n"
      "  ret\n");
  for (auto sig : {ts::crc_cfg(), ts::mac_cfg()}) {
    ProgramImage img = ts::build(src, sig);
    ProgramImage again = lower(lift(img), &img);
    CHECK(again.text == img.text);
    CHECK(again.data_words == img.data_words);
    CHECK(again.functions.size() == img.functions.size());
  }
}

TEST_CASE("save and load round-trip the whole image") {
  ProgramImage img = ts::build(ts::with_start(
      ".func f() -> i32\n"
      ".secured\n"
      "  li a0, 9\n"
      "  ret\n"));
  const std::string dir = "/tmp/mafia-test-image";
  save_image(img, dir);
  ProgramImage back = load_image(dir);
  CHECK(back.text == img.text);
  CHECK(back.patches == img.patches);
  CHECK(back.symbols == img.symbols);
  CHECK(back.data_words == img.data_words);
  CHECK(back.block_starts == img.block_starts);
  CHECK(back.iv_table == img.iv_table);
  CHECK(back.boot_iv == img.boot_iv);
  CHECK(back.sig.kind == img.sig.kind);
  CHECK(back.instrumented == img.instrumented);
  CHECK(back.has_signatures == img.has_signatures);
  REQUIRE(back.patch_plan.size() == img.patch_plan.size());
  for (size_t i = 0; i < img.patch_plan.size(); i++) {
    CHECK(back.patch_plan[i].from == img.patch_plan[i].from);
    CHECK(back.patch_plan[i].to == img.patch_plan[i].to);
    CHECK(back.patch_plan[i].slot == img.patch_plan[i].slot);
    CHECK(back.patch_plan[i].kind == img.patch_plan[i].kind);
  }
}
