#include "delip/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/adam.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/numerics/runtime.hpp"
#include "delip/ssm/elbo.hpp"
#include "delip/ssm/model_io.hpp"

namespace delip::trainer {
namespace {

using Clock = std::chrono::steady_clock;

ssm::SequenceBatch gather(const Dataset& data, std::span<const std::size_t> idx, std::size_t num_actions) {
  std::vector<const env::Trajectory*> ptrs;
  ptrs.reserve(idx.size());
  for (std::size_t i : idx) ptrs.push_back(&data.trajectories[i]);
  return ssm::SequenceBatch::from(ptrs, num_actions);
}

// Index lists for one epoch: ceil(N / batch) batches.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, const TrainConfig& cfg,
                                                    std::span<const std::size_t> bins, Rng& rng) {
  const std::size_t n = data.size();
  const std::size_t steps = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::vector<std::size_t>> out;
  if (cfg.stratified) {
    for (std::size_t s = 0; s < steps; ++s) out.push_back(sample_batch(bins, cfg.n_bins, cfg.batch_size, rng));
    return out;
  }
  const auto perm = permutation(n, rng);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t b = s * cfg.batch_size;
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + cfg.batch_size)));
  }
  return out;
}

void apply_weight_decay(ParameterStore& store, double wd) {
  if (wd == 0.0) return;
  for (Parameter* p : store.all()) {
    if (p->frozen || p->grad.empty()) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += wd * p->value[i];
  }
}

/// Convergence bookkeeping: moving average of epoch objectives, counted
/// only once the variance clamp has been released.
class ConvergenceTracker {
public:
  ConvergenceTracker(std::size_t window, std::size_t patience) : window_(window), patience_(patience) {}

  // Returns true when the moving average has not improved for `patience` epochs.
  bool push(double value) {
    recent_.push_back(value);
    sum_ += value;
    if (recent_.size() > window_) {
      sum_ -= recent_.front();
      recent_.pop_front();
    }
    const double ma = sum_ / static_cast<double>(recent_.size());
    if (ma > best_) {
      best_ = ma;
      since_best_ = 0;
    } else {
      ++since_best_;
    }
    return since_best_ >= patience_;
  }

private:
  std::size_t window_;
  std::size_t patience_;
  std::deque<double> recent_;
  double sum_ = 0.0;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t since_best_ = 0;
};

using BatchObjective = std::function<Var(Graph&, std::span<const std::size_t>, Rng&)>;

TrainResult run_epochs(ssm::DelipModel& model, const Dataset& data, const TrainConfig& cfg, Rng& rng,
                       const BatchObjective& objective, const std::map<std::string, std::string>& base_meta,
                       const EpochHook& hook) {
  configure_allocator();
  const auto bins = bin_by_return(data.returns, cfg.n_bins);
  AdamState adam = make_adam_state(model.params(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  ConvergenceTracker tracker(cfg.ma_window, cfg.patience);
  TrainResult result;
  const auto start = Clock::now();

  auto meta_at = [&](std::size_t epochs_completed) {
    auto m = base_meta;
    m["train.epochs_completed"] = std::to_string(epochs_completed);
    return m;
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    model.force_log_std(clamp_override(cfg, epoch));
    Rng epoch_rng = rng.split(epoch);
    double total = 0.0;
    const auto batches = epoch_batches(data, cfg, bins, epoch_rng);
    for (const auto& idx : batches) {
      Graph g;
      Var obj = objective(g, idx, epoch_rng);
      const double value = obj.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("training objective is not finite at epoch " + std::to_string(epoch));
      }
      model.params().zero_grad();
      g.backward(ad::scale(obj, -1.0));
      apply_weight_decay(model.params(), cfg.weight_decay);
      if (cfg.grad_clip > 0.0) clip_grad_norm(model.params(), cfg.grad_clip);
      adam_step(model.params(), adam);
      total += value;
    }
    const double mean = total / static_cast<double>(batches.size());
    result.log.push_back({epoch, mean, std::chrono::duration<double>(Clock::now() - start).count()});
    result.epochs_run = epoch + 1;
    if (hook) hook(epoch, model);

    if (epoch < cfg.clamp_epochs) continue;
    if (!result.best_epoch || mean > result.best_objective) {
      result.best_epoch = epoch;
      result.best_objective = mean;
      result.best = ssm::save_model(model, meta_at(epoch + 1));
    }
    if (tracker.push(mean)) {
      result.converged = true;
      break;
    }
  }
  result.final = ssm::save_model(model, meta_at(result.epochs_run));
  if (!result.best_epoch) result.best = result.final;
  return result;
}

}  // namespace

const char* mode_name(TrainMode mode) { return mode == TrainMode::Full ? "full" : "rewards-only"; }

TrainMode mode_from_string(const std::string& s) {
  if (s == "full") return TrainMode::Full;
  if (s == "rewards-only") return TrainMode::RewardsOnly;
  throw UsageError("unknown training mode '" + s + "' (expected full or rewards-only)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (n_bins < 1 || batch_size % n_bins != 0) throw ContractError("train: batch_size must be divisible by n_bins");
  if (!(learning_rate > 0.0)) throw ContractError("train: learning_rate must be positive");
  if (weight_decay < 0.0) throw ContractError("train: weight_decay must be >= 0");
  if (mc_samples < 1) throw ContractError("train: mc_samples must be >= 1");
  if (ma_window < 1) throw ContractError("train: ma_window must be >= 1");
  if (!std::isfinite(clamp_log_var)) throw ContractError("train: clamp_log_var must be finite");
}

std::optional<double> clamp_override(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch < cfg.clamp_epochs) return cfg.clamp_log_var / 2.0;
  return std::nullopt;
}

std::map<std::string, std::string> checkpoint_meta(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed,
                                                   std::size_t epochs_completed) {
  std::map<std::string, std::string> m;
  m["train.mode"] = mode_name(cfg.mode);
  m["train.reward_input"] = cfg.zero_reward_channel || cfg.mode == TrainMode::RewardsOnly ? "zeroed" : "observed";
  m["train.stratified"] = cfg.stratified ? "1" : "0";
  m["train.clamp_epochs"] = std::to_string(cfg.clamp_epochs);
  m["train.clamp_log_var"] = env::format_real(cfg.clamp_log_var);
  m["train.epochs_completed"] = std::to_string(epochs_completed);
  m["train.seed"] = std::to_string(seed);
  m["data.size"] = std::to_string(data.size());
  m["data.length"] = std::to_string(data.length());
  m["data.seed"] = std::to_string(data.seed);
  m["env_hash"] = std::to_string(data.env_hash);
  return m;
}

TrainResult train_full(ssm::DelipModel& model, const Dataset& data, const TrainConfig& cfg, Rng& rng,
                       const EpochHook& hook) {
  cfg.validate();
  if (cfg.mode != TrainMode::Full) throw ContractError("train_full: config mode is not full");
  if (data.size() == 0) throw ContractError("train_full: dataset is empty");
  model.unfreeze_all();
  ssm::ElboOptions options;
  options.mc_samples = cfg.mc_samples;
  options.include_reward_term = !cfg.zero_reward_channel;
  options.zero_reward_input = cfg.zero_reward_channel;
  const std::size_t A = model.shape().num_actions;
  BatchObjective objective = [&](Graph& g, std::span<const std::size_t> idx, Rng& r) {
    return ssm::elbo(g, model, gather(data, idx, A), r, options);
  };
  auto result = run_epochs(model, data, cfg, rng, objective, checkpoint_meta(cfg, data, rng.seed(), 0), hook);
  return result;
}

TrainResult train_rewards_only(ssm::DelipModel& model, const Checkpoint& pretrained, const Dataset& data,
                               const TrainConfig& cfg, Rng& rng, const EpochHook& hook) {
  cfg.validate();
  if (cfg.mode != TrainMode::RewardsOnly) throw ContractError("train_rewards_only: config mode is not rewards-only");
  if (data.size() == 0) throw ContractError("train_rewards_only: dataset is empty");
  if (ssm::meta_value(pretrained, "train.mode") != "full" ||
      ssm::meta_value(pretrained, "train.reward_input") != "zeroed") {
    throw ContractError("pretrained checkpoint must come from full-mode training with the reward channel zeroed");
  }

  // Posterior means with the reward channel zeroed; the override (if any)
  // does not affect mixture means, so this is independent of the clamp.
  model.force_log_std(std::nullopt);
  const std::size_t A = model.shape().num_actions;
  const std::size_t D = model.shape().latent_dim;
  const std::size_t T = data.length();
  std::vector<Tensor> latents(T, Tensor(data.size(), D));
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < data.size(); b += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(data.size(), b + kChunk); ++i) idx.push_back(i);
    const auto means = ssm::posterior_mean_states(model, gather(data, idx, A), true);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        for (std::size_t d = 0; d < D; ++d) latents[t](idx[j], d) = means[t](j, d);
      }
    }
  }

  model.freeze_all_except(ssm::kRewardNetPrefix);
  BatchObjective objective = [&](Graph& g, std::span<const std::size_t> idx, Rng&) {
    std::vector<Tensor> states(T, Tensor(idx.size(), D));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        for (std::size_t d = 0; d < D; ++d) states[t](j, d) = latents[t](idx[j], d);
      }
    }
    return ssm::reward_log_likelihood(g, model.generative(), gather(data, idx, A), states);
  };
  auto meta = checkpoint_meta(cfg, data, rng.seed(), 0);
  meta["pretrained.data.size"] = ssm::meta_value(pretrained, "data.size");
  auto result = run_epochs(model, data, cfg, rng, objective, meta, hook);
  model.unfreeze_all();
  return result;
}

}  // namespace delip::trainer
