#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tokidx/backbone.hpp"

// Binary checkpoint, version 1, little-endian:
//
//   magic   8 bytes  "TIDXCKPT"
//   u32     format version (1)
//   u32     record count
//   per record:
//     u8    kind: 0 = generic parameter, 1 = token-indexed table
//     kind 1 only: u32 layer, u32 expert (0xFFFFFFFF for the single-table
//                  plugin), u64 vocab rows, u64 row width
//     u16   name length, then the name bytes
//     u8    rank, then u64 dims[rank]
//     f64   row-major data
//
// Token-indexed tables carry their (layer, expert, V, d) header explicitly so
// external tools can locate them without knowing the naming scheme.

namespace tokidx::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kNoExpert = 0xFFFFFFFFu;

struct TableMeta {
  std::uint32_t layer = 0;
  std::uint32_t expert = kNoExpert;
  std::uint64_t vocab = 0;
  std::uint64_t dim = 0;
};

struct Record {
  std::string name;
  Tensor value;
  std::optional<TableMeta> table;
};

void save_checkpoint(const Model& model, const std::string& path);
std::vector<Record> read_checkpoint(const std::string& path);

// Restores parameter values by name; throws on missing names or shape
// mismatches.
void load_checkpoint(Model& model, const std::string& path);

}  // namespace tokidx::ckpt
