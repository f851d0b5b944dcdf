#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pvtadp/core/shape.h"

namespace pvtadp::train {

// On-disk layout (all integers little-endian):
//   "PVTA" | u32 version=1 | u32 n + n bytes of JSON config | u32 tensor count
//   per tensor: u16 n + name | u8 dtype | u8 rank | rank x u32 dims | values
// dtype 0 stores 32-bit floats, 1 stores 64-bit floats.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<double> values;  // exact for both dtypes
};

struct Checkpoint {
  std::string config;  // JSON text, kept verbatim
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic/version, truncation, trailing bytes,
// unknown dtype or duplicate names.
Checkpoint decode_checkpoint(std::string_view bytes);

// Writes to a temporary file next to `path` and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pvtadp::train
