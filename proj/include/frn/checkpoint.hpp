#pragma once

#include <cstdint>
#include <string>

#include "frn/training.hpp"

namespace frn {

/// Binary checkpoint, see docs/formats.md:
///
///   8 bytes magic "FRNCKPT\0", u32 version, u32 precision tag, u32 head kind,
///   u32 formulation, u64 config hash, u64 rng seed, u64 rng blocks used,
///   u32 tensor count, then per tensor: u32 name length, name bytes,
///   u32 rows, u32 cols, rows*cols f64 (row-major); trailing CRC32.
inline constexpr char kCheckpointMagic[8] = {'F', 'R', 'N', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  Precision precision = Precision::f64;
  std::uint64_t config_hash = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_blocks = 0;
};

struct Checkpoint {
  Model model;
  CheckpointMeta meta;
};

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace frn
