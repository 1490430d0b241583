// Signature functions for the CACFI monitor.
//
// Two configurations:
//  - cbcmac: CBC-MAC over PRINCE, 64-bit tags. One chaining step encrypts
//    (previous XOR sigma) under the 128-bit key.
//  - crc32: the 64-bit sigma is shifted MSB-first through a degree-32 LFSR
//    seeded with the previous signature; no input/output reflection, no
//    final XOR, no zero flush. Equivalent to prev*x^64 XOR sigma*x^32 mod G.
//
// The signature update function u(S, P) = S XOR P; the default patch value
// is 0, the XOR identity. Verification compares the low 32 bits of the
// running signature against the in-line reference word.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mafia/common.hpp"

namespace mafia {

enum class SigKind : u8 { crc32, cbcmac };

struct SigConfig {
  SigKind kind = SigKind::crc32;
  u32 poly = 0xFA567D89u;   // generator, x^32 implicit
  u64 key[2] = {0, 0};      // k0 (high), k1 (low) halves of the 128-bit key
  bool is64() const { return kind == SigKind::cbcmac; }
  // Signature register width in bytes as stored in patch slots.
  u32 patch_bytes() const { return is64() ? 8 : 4; }
};

// PRINCE block cipher: 64-bit block, 128-bit key (k0 || k1).
u64 prince_encrypt(u64 block, u64 k0, u64 k1);
u64 prince_decrypt(u64 block, u64 k0, u64 k1);

// One chaining step: f(prev, sigma).
u64 sig_step(const SigConfig& cfg, u64 prev, u64 sigma);

// Chains a block of pipeline states from an IV.
u64 sig_chain(const SigConfig& cfg, u64 iv, std::span<const u64> sigmas);

// Signature update at taken control transfers.
inline u64 sig_update(u64 sig, u64 patch) { return sig ^ patch; }

// Runtime/reference comparison uses the low 32 bits in both configurations.
inline u32 sig_verified_part(u64 sig) { return static_cast<u32>(sig); }

// Masks a signature to the configured register width.
inline u64 sig_mask(const SigConfig& cfg, u64 v) {
  return cfg.is64() ? v : (v & 0xFFFFFFFFull);
}

// Minimal-weight nonzero codeword search for the CRC configuration.
//
// By linearity a fault pattern e over the chained input bitstream escapes
// detection iff e is a codeword of the CRC code, independent of IV and data.
// The search covers bitstreams of max_blocks 64-bit states and weights up to
// max_weight (exact for weights <= 4).
struct CollisionSearchResult {
  bool found = false;
  int weight = 0;               // weight of the found codeword
  int searched_weight = 0;      // exhaustively covered bound
  std::vector<int> positions;   // bit positions, 0 = first chained bit
};

CollisionSearchResult crc_collision_search(u32 poly, int max_blocks,
                                           int max_weight,
                                           int max_bits_bound = 4096);

}  // namespace mafia
