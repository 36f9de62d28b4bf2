#pragma once

// Binary parameter archive:
//   "MAPGOCKP" | u32 version | u32 count |
//   count x (u32 name length, name, u32 rows, u32 cols, rows*cols f64 row-major) |
//   32-byte SHA-256 of everything before it.
// Integers and doubles are little-endian.

#include <filesystem>
#include <string>
#include <vector>

#include "mapgo/autodiff.hpp"

namespace mapgo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Mat value;
};

std::string sha256_hex(const std::string& bytes);

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
/// Throws CorruptCheckpoint on a bad magic, version, truncation or hash.
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<ad::Parameter*>& params);
/// Loads values by name; every parameter must be present with its shape.
void load_checkpoint(const std::filesystem::path& path, const std::vector<ad::Parameter*>& params);

}  // namespace mapgo
