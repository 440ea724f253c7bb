#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "delip/env/door_world.hpp"

namespace delip::env {

// Header of the per-step dataset file.
inline constexpr const char* kDatasetHeader = "episode_id,t,action,o_left,o_door,o_right,reward";

/// Sidecar written next to a dataset CSV (`<csv>.meta`), one key=value per line.
struct DatasetMeta {
  EnvConfig env;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::size_t length = 0;
};

void write_dataset_csv(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories);
// Rejects a missing/incorrect header, non-contiguous episode/t indices and ragged lengths.
std::vector<Trajectory> read_dataset_csv(const std::filesystem::path& path);

std::filesystem::path meta_path_for(const std::filesystem::path& csv);
void write_dataset_meta(const std::filesystem::path& path, const DatasetMeta& meta);
DatasetMeta read_dataset_meta(const std::filesystem::path& path);

// Round-trip exact decimal rendering used by every CSV writer in the project.
std::string format_real(double v);

// Shared key=value parsing for sidecars and config files; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

// Applies one `key=value` (keys without the "env." prefix) to an EnvConfig.
// Returns false for an unknown key; throws ContractError for an unparsable value.
bool apply_env_key(EnvConfig& cfg, const std::string& key, const std::string& value);

}  // namespace delip::env
