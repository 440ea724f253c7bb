#pragma once

#include "delip/env/door_world.hpp"
#include "delip/world_model.hpp"

namespace delip::env {

/// The true DoorWorld dynamics behind the WorldModel interface (the Oracle's
/// simulator). State is the 1-D position. Rewards are deterministic, so the
/// filter scores them with a narrow Gaussian of width `reward_sigma`.
class OracleWorld final : public WorldModel {
public:
  explicit OracleWorld(EnvConfig cfg, double reward_sigma = 0.1);

  std::size_t state_dim() const override { return 1; }
  // Uniform over the position bounds.
  Tensor sample_initial(std::size_t n, Rng& rng) const override;
  QueryResult query(std::span<const double> state, Action action, Rng& rng,
                    bool with_observation = true) const override;
  Tensor propagate(const Tensor& states, Action action, Rng& rng) const override;
  std::vector<double> observation_log_likelihood(const Tensor& states, const Observation& obs) const override;
  std::vector<double> reward_log_likelihood(const Tensor& states, Action action, double reward) const override;

  const EnvConfig& config() const { return cfg_; }
  // Width of the Gaussian observation likelihood (never below 0.05, so a
  // noiseless environment still yields usable particle weights).
  double observation_sigma() const { return obs_sigma_; }

private:
  EnvConfig cfg_;
  double reward_sigma_;
  double obs_sigma_;
};

}  // namespace delip::env
