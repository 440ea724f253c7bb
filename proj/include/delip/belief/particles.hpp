#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "delip/world_model.hpp"

namespace delip::belief {

inline constexpr double kDefaultBinWidth = 0.1;

/// Per-dimension bin indices floor(s_i / width + 1e-9).
struct StateKey {
  std::vector<std::int64_t> bins;

  bool operator==(const StateKey&) const = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept;
};

// Throws ContractError on a non-finite coordinate.
StateKey discretize(std::span<const double> s, double width = kDefaultBinWidth);

/// Weighted particle approximation of the belief over latent states. One
/// particle per row of `particles`.
struct BeliefParticles {
  Tensor particles;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> particle(std::size_t i) const { return particles.row(i); }
  // Index drawn in proportion to the weights.
  std::size_t sample_index(Rng& rng) const;
  // Throws ContractError unless sizes agree, n >= 1 and weights are finite, >= 0, summing to 1 (1e-9).
  void validate() const;
};

// Particles from the model's initial-state distribution, uniform weights.
BeliefParticles init_belief(const WorldModel& model, std::size_t n_particles, Rng& rng);

struct FilterConfig {
  // Total (mean) likelihood below which the particle set is considered degenerate.
  double degeneracy_threshold = 1e-30;
};

struct UpdateResult {
  BeliefParticles belief;           // resampled, uniform weights
  std::vector<double> weights;      // normalized weights before resampling
  bool reinitialized = false;
};

// Weights particles by p(o | s) and resamples. Used once for the observation
// available before the first action.
UpdateResult condition(const BeliefParticles& belief, const env::Observation& obs, const WorldModel& model, Rng& rng,
                       const FilterConfig& cfg = {});

// One filtering step for the transition (s, a) -> s' with observed reward r
// (a function of s and a) and observation o (of s'):
// w ∝ p(r | s, a) p(o | s'), s' ~ p(. | s, a), then systematic resampling.
// A degenerate update re-draws from init_belief, conditions on o, and sets
// `reinitialized`.
UpdateResult update(const BeliefParticles& belief, env::Action action, const env::Observation& obs, double reward,
                    const WorldModel& model, Rng& rng, const FilterConfig& cfg = {});

// Normalizes log-weights in place to probabilities; returns log of the mean
// likelihood (log sum exp - log n).
double normalize_log_weights(std::vector<double>& log_weights);

// Systematic resampling: ancestor indices for n equally weighted offspring.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng);

// CSV dump: "step,particle,s0[,s1...],weight".
void write_belief_header(std::ostream& os, std::size_t state_dim);
void append_belief_rows(std::ostream& os, std::size_t step, const BeliefParticles& belief);

// Weighted fraction of particles with |s_0 - target| <= radius.
double mass_within(const BeliefParticles& belief, double target, double radius);

}  // namespace delip::belief
