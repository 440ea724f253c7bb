#include "delip/env/oracle_world.hpp"

#include <algorithm>
#include <cmath>

#include "delip/numerics/errors.hpp"
#include "delip/numerics/gaussian.hpp"

namespace delip::env {
namespace {

constexpr double kMinObservationSigma = 0.05;

double normal_log_pdf(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

}  // namespace

OracleWorld::OracleWorld(EnvConfig cfg, double reward_sigma)
    : cfg_(std::move(cfg)),
      reward_sigma_(reward_sigma),
      obs_sigma_(std::max(cfg_.obs_noise_std, kMinObservationSigma)) {
  cfg_.validate();
  if (!(reward_sigma_ > 0.0)) throw ContractError("oracle: reward_sigma must be positive");
}

Tensor OracleWorld::sample_initial(std::size_t n, Rng& rng) const {
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) out(i, 0) = cfg_.lower_bound + (cfg_.upper_bound - cfg_.lower_bound) * rng.uniform();
  return out;
}

QueryResult OracleWorld::query(std::span<const double> state, Action action, Rng& rng, bool with_observation) const {
  if (state.size() != 1) throw ContractError("oracle: state must be one-dimensional");
  QueryResult out;
  const double x = clip_position(state[0], cfg_);
  out.next_state = {move(x, action, cfg_)};
  out.reward = reward(x, action, cfg_);
  if (with_observation) out.observation = observe(out.next_state[0], cfg_, rng);
  return out;
}

Tensor OracleWorld::propagate(const Tensor& states, Action action, Rng&) const {
  Tensor out(states.rows(), 1);
  for (std::size_t i = 0; i < states.rows(); ++i) out(i, 0) = move(clip_position(states(i, 0), cfg_), action, cfg_);
  return out;
}

std::vector<double> OracleWorld::observation_log_likelihood(const Tensor& states, const Observation& obs) const {
  std::vector<double> out(states.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Observation mean = signals(clip_position(states(i, 0), cfg_), cfg_);
    double lp = 0.0;
    for (std::size_t k = 0; k < 3; ++k) lp += normal_log_pdf(obs[k], mean[k], obs_sigma_);
    out[i] = lp;
  }
  return out;
}

std::vector<double> OracleWorld::reward_log_likelihood(const Tensor& states, Action action, double r) const {
  std::vector<double> out(states.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = normal_log_pdf(r, reward(clip_position(states(i, 0), cfg_), action, cfg_), reward_sigma_);
  }
  return out;
}

}  // namespace delip::env
