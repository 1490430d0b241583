// Shared base types and small helpers used across the toolchain and simulator.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mafia {

using u8 = uint8_t;
using u16 = uint16_t;
using u32 = uint32_t;
using u64 = uint64_t;
using i32 = int32_t;
using i64 = int64_t;

// Tool-level failures (bad input, unsatisfiable plan). Not architectural traps.
struct ToolError : std::runtime_error {
  explicit ToolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Assembly source errors carry a source position.
struct AsmError : ToolError {
  int line = 0;
  int col = 0;
  AsmError(const std::string& msg, int line_, int col_ = 0)
      : ToolError("line " + std::to_string(line_) +
                  (col_ ? ":" + std::to_string(col_) : "") + ": " + msg),
        line(line_),
        col(col_) {}
};

// Simulator configuration/usage errors (bad image, out-of-section ldp, ...).
struct SimError : ToolError {
  explicit SimError(const std::string& msg) : ToolError(msg) {}
};

inline std::string hex32(u32 v) {
  char buf[11];
  snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

inline std::string hex64(u64 v) {
  char buf[19];
  snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline u32 sext(u32 value, int bits) {
  int shift = 32 - bits;
  return static_cast<u32>(static_cast<i32>(value << shift) >> shift);
}

inline int popcount64(u64 v) { return __builtin_popcountll(v); }

// FNV-1a, used for deterministic symbol-derived constants and trace hashing.
inline u64 fnv1a64(const void* data, size_t n, u64 seed = 0xcbf29ce484222325ull) {
  const u8* p = static_cast<const u8*>(data);
  u64 h = seed;
  for (size_t i = 0; i < n; i++) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline u64 fnv1a64(const std::string& s, u64 seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

}  // namespace mafia
