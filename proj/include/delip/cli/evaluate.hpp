#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "delip/belief/particles.hpp"
#include "delip/env/door_world.hpp"
#include "delip/planner/pomcp.hpp"

namespace delip::cli {

enum class Method { Delip, Oracle, Random };

const char* method_name(Method m);
Method method_from_string(const std::string& s);  // throws UsageError

struct EvalConfig {
  std::size_t episodes = 100;
  std::size_t length = 100;
  std::size_t particles = 500;
  belief::FilterConfig filter;
  bool dump_belief = false;
  bool parallel = true;  // episodes across OpenMP threads; results are identical either way
};

struct StepRecord {
  std::size_t t = 0;
  env::Action action = env::Action::Left;
  double position = 0.0;  // before the action
  env::Observation observation{};  // after the action
  double reward = 0.0;
  bool reinitialized = false;
};

struct EpisodeResult {
  std::size_t episode = 0;
  double return_total = 0.0;
  bool success = false;  // at least one correct open
  std::vector<StepRecord> steps;
  std::vector<planner::SearchDiagnostics> decisions;
  std::vector<belief::BeliefParticles> beliefs;  // per step, when dumping
};

// One episode against the true environment. `model` is the planner's and the
// filter's world model; it is unused for Random. Episode e draws everything
// from rng.split(e).
EpisodeResult run_episode(Method method, const env::EnvConfig& env_cfg, const WorldModel* model,
                          const planner::PlannerConfig& planner_cfg, const EvalConfig& eval_cfg, const Rng& rng,
                          std::size_t episode);

std::vector<EpisodeResult> run_eval(Method method, const env::EnvConfig& env_cfg, const WorldModel* model,
                                    const planner::PlannerConfig& planner_cfg, const EvalConfig& eval_cfg,
                                    const Rng& rng);

struct Summary {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample std / sqrt(n); 0 for n < 2
  double success_rate = 0.0;
};
Summary summarize(const std::vector<EpisodeResult>& results);

/// Identity fields stamped on every metrics row.
struct RunTag {
  Method method = Method::Oracle;
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr const char* kMetricsHeader = "method,dataset_size,seed,episode,return_total,success,config_hash";
inline constexpr const char* kStepsHeader = "episode,t,position,action,o_left,o_door,o_right,reward,reinitialized";

// metrics.csv, steps.csv, decisions.csv (planner methods) and belief.csv (when dumped).
void write_eval_outputs(const std::filesystem::path& dir, const RunTag& tag, const std::vector<EpisodeResult>& results);

}  // namespace delip::cli
