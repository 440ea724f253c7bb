#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "delip/env/door_world.hpp"

namespace delip::trainer {

/// Uniform-length trajectories plus their cached returns.
struct Dataset {
  std::vector<env::Trajectory> trajectories;
  std::vector<double> returns;
  std::uint64_t env_hash = 0;
  std::uint64_t seed = 0;

  // Validates uniform length and fills `returns`.
  static Dataset from(std::vector<env::Trajectory> trajectories, std::uint64_t env_hash, std::uint64_t seed);

  std::size_t size() const { return trajectories.size(); }
  std::size_t length() const { return trajectories.empty() ? 0 : trajectories.front().length(); }
};

// n_episodes episodes of T uniformly random actions. True positions are kept
// on each trajectory for diagnostics.
Dataset collect(const env::EnvConfig& cfg, std::size_t n_episodes, std::size_t length, Rng& rng);

// Uniform bins over [min, max] of the returns; the top edge is inclusive and a
// degenerate range puts everything in bin 0.
std::vector<std::size_t> bin_by_return(std::span<const double> returns, std::size_t n_bins);

// batch_size / n_bins draws (with replacement) from every nonempty bin; the
// quota of empty bins is handed out one draw at a time, round-robin, to the
// nonempty bins. Indices are grouped by bin in ascending bin order.
std::vector<std::size_t> sample_batch(std::span<const std::size_t> bins, std::size_t n_bins, std::size_t batch_size,
                                      Rng& rng);

// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace delip::trainer
