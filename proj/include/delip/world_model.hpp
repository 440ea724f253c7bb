#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "delip/env/door_world.hpp"
#include "delip/numerics/rng.hpp"
#include "delip/numerics/tensor.hpp"

namespace delip {

/// Result of one generative step (s, a) -> (s', o, r).
struct QueryResult {
  std::vector<double> next_state;
  env::Observation observation{};
  double reward = 0.0;
};

/// The generative interface the planner and the belief filter are written
/// against. Implemented by the learned model and by the ground-truth
/// simulator, so swapping one for the other touches no planner or filter code.
///
/// Reward convention: r is produced by taking `a` in state `s` (the
/// pre-action state); the observation belongs to s'.
class WorldModel {
public:
  virtual ~WorldModel() = default;

  virtual std::size_t state_dim() const = 0;

  // n initial belief particles, one per row.
  virtual Tensor sample_initial(std::size_t n, Rng& rng) const = 0;

  // Full query. When `with_observation` is false the observation is left
  // zeroed and not sampled (the planner never reads it).
  virtual QueryResult query(std::span<const double> state, env::Action action, Rng& rng,
                            bool with_observation = true) const = 0;

  // Row-wise s' ~ p(. | s, a).
  virtual Tensor propagate(const Tensor& states, env::Action action, Rng& rng) const = 0;

  // Row-wise log p(o | s').
  virtual std::vector<double> observation_log_likelihood(const Tensor& states,
                                                         const env::Observation& obs) const = 0;

  // Row-wise log p(r | s, a).
  virtual std::vector<double> reward_log_likelihood(const Tensor& states, env::Action action,
                                                    double reward) const = 0;
};

}  // namespace delip
