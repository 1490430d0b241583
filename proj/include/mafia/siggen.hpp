// Offline signature generation: the final pipeline stage of a build.
//
// Takes an instrumented image (verification instructions, patch loads and the
// patch plan in place) and computes the actual values: per-block entry
// signatures, in-line reference words, patch values and the interrupt vector
// IVs. Everything is written in place; the layout never changes here, which
// is what makes the computation well-founded (signatures depend on addresses,
// addresses never depend on signatures).
#pragma once

#include <string>

#include "mafia/image.hpp"

namespace mafia {

// Entry-signature anchor of a function: a named constant derived from the
// function name, except for the boot entry which anchors at the configured
// boot IV. Masked to the signature register width.
u64 function_entry_iv(const ProgramImage& img, const std::string& name);

// Fills reference words, patch values and the interrupt vector table.
// Requires an instrumented image; throws ToolError if the plan left any
// reachable block without a signature source.
ProgramImage generate_signatures(const ProgramImage& img);

}  // namespace mafia
