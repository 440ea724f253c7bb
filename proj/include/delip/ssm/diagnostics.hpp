#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "delip/env/door_world.hpp"
#include "delip/ssm/model.hpp"

namespace delip::ssm {

/// One-step prediction at step t of a trajectory with known positions: the
/// posterior mixture-mean state s_t is pushed through the transition mean
/// for a_t and decoded; the target is the noiseless signal at x_{t+1}.
struct PredictionRow {
  std::size_t trajectory = 0;
  std::size_t t = 0;
  double next_position = 0.0;
  env::Observation truth{};
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
  double reward = 0.0;  // observed r_t
  double reward_mean = 0.0;
  double reward_stddev = 0.0;
};

// Trajectories must carry true_positions.
std::vector<PredictionRow> one_step_predictions(const DelipModel& model, const env::EnvConfig& env,
                                                std::span<const env::Trajectory> trajectories,
                                                bool zero_reward_input);

// Per observation channel root-mean-square error of `mean` against `truth`.
std::array<double, 3> channel_rmse(std::span<const PredictionRow> rows);

void write_predictions_csv(std::ostream& os, std::span<const PredictionRow> rows);

}  // namespace delip::ssm
