#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "delip/numerics/rng.hpp"

namespace delip::env {

enum class Action : int { Left = 0, Right = 1, Open = 2 };
inline constexpr int kNumActions = 3;

Action action_from_int(int a);
const char* action_name(Action a);

// (left_signal, door_signal, right_signal)
using Observation = std::array<double, 3>;

struct EnvConfig {
  double lower_bound = -15.0;
  double upper_bound = 15.0;
  std::vector<double> doors = {-12.0, -6.0, 2.0, 10.0};
  int correct_door_index = 2;
  double step_size = 1.0;
  double init_mean = 0.0;
  double init_std = 5.0;
  double boundary_penalty = -1.0;
  double open_tolerance = 0.5;
  double obs_noise_std = 0.05;
  double sigma_boundary = 1.0;
  double sigma_door = 0.5;

  // Throws ContractError naming the first violated invariant.
  void validate() const;
  double correct_door() const { return doors.at(static_cast<std::size_t>(correct_door_index)); }

  // Canonical "key=value" lines; the basis of config_hash().
  std::string canonical() const;
  std::uint64_t hash() const;
};

EnvConfig make_default_config();

/// One recorded interaction: the observation the agent held when it chose
/// `action`, the action, and the reward that action produced.
struct Step {
  Action action = Action::Open;
  Observation observation{};
  double reward = 0.0;
};

struct Trajectory {
  std::vector<Step> steps;
  // Position at which each step's action was taken. Debug/evaluation only.
  std::optional<std::vector<double>> true_positions;

  std::size_t length() const { return steps.size(); }
  double total_reward() const;
};

// Noiseless signal bumps at `position`.
Observation signals(double position, const EnvConfig& cfg);

// signals(position) plus N(0, obs_noise_std^2) per channel.
Observation observe(double position, const EnvConfig& cfg, Rng& rng);

// Initial position: N(init_mean, init_std) clipped to the bounds.
double reset(const EnvConfig& cfg, Rng& rng);
double clip_position(double position, const EnvConfig& cfg);

// Deterministic reward of taking `action` at `position`.
double reward(double position, Action action, const EnvConfig& cfg);

/// Applies `action` at `position`. The returned Step carries the reward of the
/// move and a noisy observation of the *new* position.
std::pair<double, Step> step(double position, Action action, const EnvConfig& cfg, Rng& rng);

// Position reached by `action` from `position` (no noise involved).
double move(double position, Action action, const EnvConfig& cfg);

}  // namespace delip::env
