#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "delip/numerics/checkpoint.hpp"
#include "delip/ssm/model.hpp"
#include "delip/trainer/dataset.hpp"

namespace delip::trainer {

enum class TrainMode { Full, RewardsOnly };

const char* mode_name(TrainMode mode);
TrainMode mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::Full;
  std::size_t batch_size = 100;
  std::size_t max_epochs = 10000;
  std::size_t clamp_epochs = 1000;
  double clamp_log_var = -3.0;
  std::size_t n_bins = 5;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 10.0;       // <= 0 disables clipping
  std::size_t patience = 200;
  std::size_t ma_window = 50;
  std::size_t mc_samples = 1;
  // Stratified (return-binned) batches; off means shuffled passes.
  bool stratified = true;
  // Pretraining for Rewards-Only: posterior reward input zeroed and the
  // reward likelihood dropped from the objective.
  bool zero_reward_channel = false;

  void validate() const;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  double mean_elbo = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::size_t epochs_run = 0;
  bool converged = false;
  std::optional<std::size_t> best_epoch;
  double best_objective = 0.0;
  Checkpoint best;
  Checkpoint final;
};

// Called after every epoch with the model exactly as that epoch trained it
// (including the log-std override in force during the epoch).
using EpochHook = std::function<void(std::size_t epoch, const ssm::DelipModel& model)>;

// Log-std override for an epoch: clamp_log_var / 2 during the first
// clamp_epochs epochs (0-based), none afterwards.
std::optional<double> clamp_override(const TrainConfig& cfg, std::size_t epoch);

// Metadata shared by every checkpoint the trainer writes.
std::map<std::string, std::string> checkpoint_meta(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed,
                                                   std::size_t epochs_completed);

// Maximizes the mean ELBO over stratified (or shuffled) batches.
TrainResult train_full(ssm::DelipModel& model, const Dataset& data, const TrainConfig& cfg, Rng& rng,
                       const EpochHook& hook = {});

// Trains only the reward network of a model pretrained in Full mode with the
// reward channel zeroed. Latents are posterior mixture means, computed once.
TrainResult train_rewards_only(ssm::DelipModel& model, const Checkpoint& pretrained, const Dataset& data,
                               const TrainConfig& cfg, Rng& rng, const EpochHook& hook = {});

}  // namespace delip::trainer
