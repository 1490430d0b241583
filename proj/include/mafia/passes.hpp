// Binary instrumentation passes. Each is image to image and idempotent.
//
// Build order:
//   1. generate_dispatchers   rewrite tagged indirect calls to dispatchers
//   2. eliminate_forwarding_deps  break operand forwarding across block entries
//   3. place_verifications    convert control flow in secured functions to
//                             verifying variants with inline reference words
//   4. place_patches          plan signature patches and insert patch loads
//
// instrument() runs all four. Signature values themselves are produced by
// generate_signatures() afterwards; the passes only shape the code.
#pragma once

#include "mafia/image.hpp"

namespace mafia {

ProgramImage generate_dispatchers(const ProgramImage& img);
ProgramImage eliminate_forwarding_deps(const ProgramImage& img);
ProgramImage place_verifications(const ProgramImage& img);
ProgramImage place_patches(const ProgramImage& img);

ProgramImage instrument(const ProgramImage& img);

}  // namespace mafia
