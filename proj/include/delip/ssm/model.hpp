#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delip/env/door_world.hpp"
#include "delip/numerics/autodiff.hpp"
#include "delip/numerics/gaussian.hpp"
#include "delip/numerics/layers.hpp"
#include "delip/numerics/parameters.hpp"
#include "delip/numerics/rng.hpp"

namespace delip::ssm {

struct ModelShape {
  std::size_t latent_dim = 2;
  std::size_t obs_dim = 3;
  std::size_t num_actions = env::kNumActions;
  std::size_t net_hidden = 100;   // observation / reward networks
  std::size_t lstm_hidden = 10;   // per direction
  std::size_t head_hidden = 32;   // posterior head
  std::size_t components = 4;     // posterior mixture size
};

/// Decides what every emitted log standard deviation is: either the raw
/// network output clamped to [kMinLogStd, kMaxLogStd], or (during the
/// variance-clamp phase of training) a fixed value for all distributions.
struct LogStdPolicy {
  std::optional<double> forced;

  Var apply(Graph& g, Var raw) const;
  void apply(Tensor& raw) const;
};

struct GaussianVars {
  Var mean;
  Var log_std;
};

// Row-major batch of diagonal Gaussians: row i is one distribution.
struct GaussianBatch {
  Tensor mean;
  Tensor log_std;

  GaussianParams row(std::size_t i) const;
};

/// p(s1) = N(mu0, sigma0); p(s_t | s_{t-1}, a_{t-1}) linear-Gaussian;
/// p(o_t | s_t) and p(r_t | s_t, a_t) from ReLU networks.
class GenerativeModel {
public:
  GenerativeModel(ParameterStore& store, const ModelShape& shape, const LogStdPolicy& policy);

  void init(Rng& rng);

  GaussianVars prior(Graph& g, std::size_t rows) const;
  GaussianVars transition(Graph& g, Var s_prev, Var a_prev_onehot) const;
  GaussianVars observation(Graph& g, Var s) const;
  GaussianVars reward(Graph& g, Var s, Var a_onehot) const;

  GaussianParams eval_prior() const;
  GaussianBatch eval_transition(const Tensor& s_prev, env::Action a) const;
  GaussianBatch eval_transition(const Tensor& s_prev, const Tensor& a_onehot) const;
  GaussianBatch eval_observation(const Tensor& s) const;
  GaussianBatch eval_reward(const Tensor& s, env::Action a) const;
  GaussianBatch eval_reward(const Tensor& s, const Tensor& a_onehot) const;

  // Allocation-free single-state forms for the planner's inner loop.
  void transition_row(std::span<const double> s, env::Action a, std::span<double> mean,
                      std::span<double> log_std) const;
  void observation_row(std::span<const double> s, std::span<double> mean, std::span<double> log_std) const;
  void reward_row(std::span<const double> s, env::Action a, double& mean, double& log_std) const;

  const ModelShape& shape() const { return shape_; }

private:
  double apply_policy(double raw) const;

  ModelShape shape_;
  const LogStdPolicy* policy_;
  Parameter* prior_mean_;
  Parameter* prior_log_std_;
  Dense trans_mean_;
  Dense trans_log_std_;
  Mlp obs_trunk_;
  Dense obs_mean_;
  Dense obs_log_std_;
  Mlp reward_trunk_;
  Dense reward_mean_;
  Dense reward_log_std_;
};

// Per-row mixture heads: log_weights [n x K], means/log_stds [n x K*D].
struct MixtureVars {
  Var log_weights;
  Var means;
  Var log_stds;
};

struct MixtureParams {
  std::vector<double> weights;
  std::vector<GaussianParams> components;

  std::vector<double> mean() const;
  double log_pdf(std::span<const double> x) const;
};

struct MixtureBatch {
  Tensor log_weights;
  Tensor means;
  Tensor log_stds;

  MixtureParams row(std::size_t i, std::size_t latent_dim) const;
  // Row-wise mixture mean sum_k w_k mu_k -> [n x D].
  Tensor mean(std::size_t latent_dim) const;
};

/// Time-major batch of equal-length trajectories; entry t holds one row per trajectory.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Tensor> obs;       // [B x 3]
  std::vector<Tensor> reward;    // [B x 1]
  std::vector<Tensor> action;    // [B x A] one-hot

  static SequenceBatch from(std::span<const env::Trajectory* const> trajectories, std::size_t num_actions);
  static SequenceBatch from(const env::Trajectory& trajectory, std::size_t num_actions);
  // Batch repeated `times` along the batch axis; row r holds trajectory r % batch.
  SequenceBatch tiled(std::size_t times) const;
};

/// q(s_t | s_{t-1}, a_{t-1}, o, r, a): bidirectional LSTM summary plus a
/// dense head emitting a Gaussian mixture whose component means are offsets
/// from s_{t-1}.
class PosteriorModel {
public:
  PosteriorModel(ParameterStore& store, const ModelShape& shape, const LogStdPolicy& policy);

  void init(Rng& rng);

  // summary_t for every t, each [B x 2H].
  std::vector<Var> summarize(Graph& g, const SequenceBatch& batch, bool zero_reward) const;
  MixtureVars head(Graph& g, Var summary, Var s_prev, Var a_prev_onehot) const;

  std::vector<Tensor> eval_summarize(const SequenceBatch& batch, bool zero_reward) const;
  MixtureBatch eval_head(const Tensor& summary, const Tensor& s_prev, const Tensor& a_prev_onehot) const;

  const ModelShape& shape() const { return shape_; }

private:
  Tensor input_at(const SequenceBatch& batch, std::size_t t, bool zero_reward) const;

  ModelShape shape_;
  const LogStdPolicy* policy_;
  LstmCell forward_;
  LstmCell backward_;
  Dense head_hidden_;
  Dense head_logits_;
  Dense head_means_;
  Dense head_log_stds_;
};

/// Generative model plus posterior, sharing one ParameterStore (names are
/// prefixed "gen." and "post."). Not movable: the sub-models point at the
/// store's parameters and at `log_std_policy`.
class DelipModel {
public:
  DelipModel(const ModelShape& shape, Rng& rng);
  DelipModel(const DelipModel&) = delete;
  DelipModel& operator=(const DelipModel&) = delete;

  const ModelShape& shape() const { return shape_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  GenerativeModel& generative() { return gen_; }
  const GenerativeModel& generative() const { return gen_; }
  PosteriorModel& posterior() { return post_; }
  const PosteriorModel& posterior() const { return post_; }

  void force_log_std(std::optional<double> value) { log_std_policy_.forced = value; }
  std::optional<double> forced_log_std() const { return log_std_policy_.forced; }

  // Marks every parameter frozen except those whose name starts with `prefix`.
  void freeze_all_except(const std::string& prefix);
  void unfreeze_all();

private:
  ModelShape shape_;
  LogStdPolicy log_std_policy_;
  ParameterStore store_;
  GenerativeModel gen_;
  PosteriorModel post_;
};

// Weights from scaled-uniform fan-in initialization, all initial log-stds -1, prior mean 0.
std::unique_ptr<DelipModel> init_model(const ModelShape& shape, Rng& rng);

Tensor one_hot(env::Action a, std::size_t rows, std::size_t num_actions);

// Parameter-name prefix of the reward network (the only part trained in rewards-only mode).
inline constexpr const char* kRewardNetPrefix = "gen.reward.";

}  // namespace delip::ssm
