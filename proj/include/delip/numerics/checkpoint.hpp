#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "delip/numerics/parameters.hpp"

namespace delip {

/// On-disk layout (all integers little-endian):
///
///   magic    8 bytes  "DELIPCKP"
///   version  u32      kCheckpointVersion
///   n_meta   u32, then n_meta x { u32 len, key bytes, u32 len, value bytes }
///   n_arrays u32, then n_arrays x { u32 len, name bytes, u32 rank,
///                                   rank x u64 dims, prod(dims) x f32 values }
///
/// Metadata keys are written in sorted order, arrays in store order, so equal
/// content always produces equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> meta;
  std::vector<CheckpointArray> arrays;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Values are narrowed to f32 on capture.
Checkpoint capture(const ParameterStore& store, std::map<std::string, std::string> meta);
// Every store parameter must appear with a matching shape; extra arrays are an error.
void restore(ParameterStore& store, const Checkpoint& ckpt);

}  // namespace delip
