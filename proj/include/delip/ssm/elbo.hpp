#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "delip/ssm/model.hpp"
#include "delip/world_model.hpp"

namespace delip::ssm {

/// Random choices made by one ancestral posterior pass: per time step, the
/// mixture component of every row and the standard-normal noise [R x D].
/// Replaying them turns the ELBO into a deterministic function of the
/// parameters (used by gradient checks).
struct PosteriorDraws {
  std::vector<std::vector<std::uint32_t>> components;
  std::vector<Tensor> noise;
};

struct ElboOptions {
  std::size_t mc_samples = 1;
  bool include_reward_term = true;
  bool zero_reward_input = false;
  const PosteriorDraws* replay = nullptr;
  PosteriorDraws* record = nullptr;
};

// Differentiable posterior pass over R = mc_samples * batch rows
// (row r belongs to trajectory r % batch).
struct PosteriorPass {
  std::vector<Var> states;   // s_t, each [R x D]
  Var log_q;                 // [R x 1], sum over t of log q(s_t | ...)
};

PosteriorPass run_posterior(Graph& g, const DelipModel& model, const SequenceBatch& batch, Rng& rng,
                            const ElboOptions& options);

// [R x 1] log p(s, o, r | a) for the latent paths in `states`.
Var log_joint_rows(Graph& g, const GenerativeModel& gen, const SequenceBatch& batch, std::size_t mc_samples,
                   std::span<const Var> states, bool include_reward_term);

// Mean over trajectories and samples of log p(o, r, s | a) - log q(s | o, r, a); 1x1.
Var elbo(Graph& g, const DelipModel& model, const SequenceBatch& batch, Rng& rng, const ElboOptions& options = {});

// Mean over rows of sum_t log p(r_t | s_t, a_t) for fixed latent paths (each [B x D]); 1x1.
Var reward_log_likelihood(Graph& g, const GenerativeModel& gen, const SequenceBatch& batch,
                          std::span<const Tensor> states);

// Scalar ELBO for one trajectory (no gradient).
double elbo_value(const DelipModel& model, const env::Trajectory& trajectory, std::size_t mc_samples, Rng& rng);

struct Conditionals {
  GaussianParams transition;
  GaussianParams observation;
  GaussianParams reward;
};

// p(s_t | s_prev, a_prev), p(o_t | s_t), p(r_t | s_t, a_t).
Conditionals conditionals(const GenerativeModel& gen, std::span<const double> s_prev, env::Action a_prev,
                          std::span<const double> s_t, env::Action a_t);

// log p(s_1) + sum_t [log p(o_t|s_t) + log p(r_t|s_t,a_t)] + sum_{t>=2} log p(s_t|s_{t-1},a_{t-1}).
double joint_log_prob(const GenerativeModel& gen, const env::Trajectory& trajectory,
                      const std::vector<std::vector<double>>& path);

struct PosteriorSample {
  std::vector<std::vector<double>> states;
  std::vector<MixtureParams> mixtures;
  double log_q = 0.0;
};

PosteriorSample posterior_encode(const DelipModel& model, const env::Trajectory& trajectory, Rng& rng,
                                 bool zero_reward_input = false);

// n importance log-weights log p(o, r, s | a) - log q(s | o, r, a) with s ~ q.
std::vector<double> importance_log_weights(const DelipModel& model, const env::Trajectory& trajectory,
                                           std::size_t n, Rng& rng, bool zero_reward_input = false);

// Deterministic pass that feeds the mixture mean forward as s_{t-1}; returns [B x D] per t.
std::vector<Tensor> posterior_mean_states(const DelipModel& model, const SequenceBatch& batch,
                                          bool zero_reward_input);

// s' ~ p(.|s,a), o ~ p(.|s'), r ~ p(.|s,a).
QueryResult query_model(const GenerativeModel& gen, std::span<const double> state, env::Action action, Rng& rng,
                        bool with_observation = true);

/// The learned model behind the WorldModel interface (the DELIP simulator).
class LearnedWorld final : public WorldModel {
public:
  explicit LearnedWorld(const DelipModel& model) : model_(&model) {}

  std::size_t state_dim() const override { return model_->shape().latent_dim; }
  Tensor sample_initial(std::size_t n, Rng& rng) const override;
  QueryResult query(std::span<const double> state, env::Action action, Rng& rng,
                    bool with_observation = true) const override;
  Tensor propagate(const Tensor& states, env::Action action, Rng& rng) const override;
  std::vector<double> observation_log_likelihood(const Tensor& states, const env::Observation& obs) const override;
  std::vector<double> reward_log_likelihood(const Tensor& states, env::Action action, double reward) const override;

private:
  const DelipModel* model_;
};

// Every standard deviation the model currently emits on `batch`
// (prior, transition, observation, reward, posterior components).
std::vector<double> emitted_stddevs(const DelipModel& model, const SequenceBatch& batch);

}  // namespace delip::ssm
