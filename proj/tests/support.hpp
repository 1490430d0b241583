// Shared helpers for the toolchain tests: assemble-and-instrument small
// programs written inline in the test cases.
#pragma once

#include <string>

#include "mafia/asm.hpp"
#include "mafia/passes.hpp"
#include "mafia/siggen.hpp"

namespace ts {

inline mafia::SigConfig crc_cfg() { return mafia::SigConfig{}; }

inline mafia::SigConfig mac_cfg() {
  mafia::SigConfig s;
  s.kind = mafia::SigKind::cbcmac;
  s.key[0] = 0x0011223344556677ull;
  s.key[1] = 0x8899aabbccddeeffull;
  return s;
}

// parse + lower only.
inline mafia::ProgramImage bare(const std::string& src,
                                mafia::SigConfig sig = crc_cfg()) {
  return mafia::assemble(src, sig, 0, "<test>");
}

// Full build: assemble, all passes, signature values.
inline mafia::ProgramImage build(const std::string& src,
                                 mafia::SigConfig sig = crc_cfg()) {
  return mafia::generate_signatures(mafia::instrument(bare(src, sig)));
}

// A minimal _start that stores f()'s result to the halt address.
inline std::string with_start(const std::string& body) {
  return ".func _start() -> void\n"
         "  call f\n"
         "  lui t0, 0x40000\n"
         "  sw a0, 0(t0)\n"
         "spin:\n"
         "  j spin\n"
         "\n" +
         body;
}

}  // namespace ts
