#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delip/belief/particles.hpp"
#include "delip/cli/evaluate.hpp"
#include "delip/env/door_world.hpp"
#include "delip/planner/pomcp.hpp"
#include "delip/ssm/model.hpp"
#include "delip/trainer/trainer.hpp"

namespace delip::cli {

/// Every tunable of a run. Set from a flat `prefix.key=value` file and
/// `--set` overrides; prefixes are env, model, train, planner, belief, eval.
struct RunConfig {
  env::EnvConfig env = env::make_default_config();
  ssm::ModelShape model;
  trainer::TrainConfig train;
  planner::PlannerConfig planner;
  double oracle_reward_sigma = 0.1;
  EvalConfig eval;

  // Throws UsageError for an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  void set(const std::string& assignment);  // "key=value"
  void validate() const;

  // Sorted key=value lines covering every field.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

// Reference page: every key, its default, one line of description.
std::string defaults_reference();

}  // namespace delip::cli
