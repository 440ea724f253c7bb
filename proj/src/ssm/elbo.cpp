#include "delip/ssm/elbo.hpp"

#include <algorithm>
#include <cmath>

#include "delip/numerics/errors.hpp"

namespace delip::ssm {
namespace {

Tensor tile_rows(const Tensor& src, std::size_t times) {
  if (times == 1) return src;
  Tensor out(src.rows() * times, src.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto s = src.row(r % src.rows());
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

// Rows of parts stacked in order.
Tensor stack_rows(std::span<const Tensor> parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Tensor out(rows, parts.empty() ? 0 : parts[0].cols());
  std::size_t r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r0 * out.cols()));
    r0 += p.rows();
  }
  return out;
}

// Time-stacked [T*R x cols] copy of per-t [B x cols] tensors, each tiled `times`.
Tensor stacked(const std::vector<Tensor>& per_t, std::size_t begin, std::size_t end, std::size_t times) {
  std::vector<Tensor> parts;
  for (std::size_t t = begin; t < end; ++t) parts.push_back(tile_rows(per_t[t], times));
  return stack_rows(parts);
}

std::uint32_t draw_component(std::span<const double> log_weights, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    acc += std::exp(log_weights[k]);
    if (u < acc) return static_cast<std::uint32_t>(k);
  }
  return static_cast<std::uint32_t>(log_weights.size() - 1);
}

std::vector<std::uint32_t> draw_components(const Tensor& log_weights, Rng& rng) {
  std::vector<std::uint32_t> out(log_weights.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = draw_component(log_weights.row(r), rng);
  return out;
}

double logsumexp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Row-wise diagonal Gaussian log density of x under (mean, log_std) blocks.
double row_log_pdf(std::span<const double> x, const double* mean, const double* log_std) {
  double lp = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double z = (x[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -kHalfLog2Pi - log_std[d] - 0.5 * z * z;
  }
  return lp;
}

void check_draws(const PosteriorDraws* replay, std::size_t T, std::size_t rows, std::size_t D) {
  if (replay == nullptr) return;
  if (replay->components.size() != T || replay->noise.size() != T) {
    throw ContractError("posterior replay: draws cover a different number of steps");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (replay->components[t].size() != rows || replay->noise[t].rows() != rows || replay->noise[t].cols() != D) {
      throw ContractError("posterior replay: draw shape mismatch at step " + std::to_string(t));
    }
  }
}

struct EvalPass {
  std::vector<Tensor> states;        // [R x D] per t
  std::vector<MixtureBatch> mixtures;
  std::vector<double> log_q;         // per row
};

// Non-recording twin of run_posterior; consumes the RNG identically.
EvalPass encode_eval(const DelipModel& model, const SequenceBatch& batch, std::size_t mc, Rng& rng, bool zero_reward,
                     const PosteriorDraws* replay) {
  const auto& shape = model.shape();
  const std::size_t D = shape.latent_dim;
  const std::size_t K = shape.components;
  const std::size_t R = batch.batch * mc;
  check_draws(replay, batch.length, R, D);
  const auto summaries = model.posterior().eval_summarize(batch, zero_reward);
  EvalPass out;
  out.log_q.assign(R, 0.0);
  Tensor s_prev(R, D);
  Tensor a_prev(R, shape.num_actions);
  std::vector<double> terms(K);
  for (std::size_t t = 0; t < batch.length; ++t) {
    MixtureBatch mix = model.posterior().eval_head(tile_rows(summaries[t], mc), s_prev, a_prev);
    const auto comps = replay ? replay->components[t] : draw_components(mix.log_weights, rng);
    Tensor eps(R, D);
    if (replay) {
      eps = replay->noise[t];
    } else {
      for (double& v : eps.values()) v = rng.normal();
    }
    Tensor s(R, D);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t k = comps[r];
      for (std::size_t d = 0; d < D; ++d) {
        s(r, d) = mix.means(r, k * D + d) + std::exp(mix.log_stds(r, k * D + d)) * eps(r, d);
      }
      for (std::size_t j = 0; j < K; ++j) {
        terms[j] = mix.log_weights(r, j) + row_log_pdf(s.row(r), &mix.means(r, j * D), &mix.log_stds(r, j * D));
      }
      out.log_q[r] += logsumexp(terms);
    }
    s_prev = s;
    a_prev = tile_rows(batch.action[t], mc);
    out.states.push_back(std::move(s));
    out.mixtures.push_back(std::move(mix));
  }
  return out;
}

std::vector<double> log_joint_eval(const GenerativeModel& gen, const SequenceBatch& batch, std::size_t mc,
                                   const std::vector<Tensor>& states) {
  const std::size_t R = batch.batch * mc;
  std::vector<double> lp(R, 0.0);
  const GaussianParams prior = gen.eval_prior();
  for (std::size_t r = 0; r < R; ++r) lp[r] += gaussian_log_pdf(states[0].row(r), prior);
  for (std::size_t t = 0; t < batch.length; ++t) {
    const Tensor obs = tile_rows(batch.obs[t], mc);
    const Tensor act = tile_rows(batch.action[t], mc);
    const Tensor rew = tile_rows(batch.reward[t], mc);
    const GaussianBatch po = gen.eval_observation(states[t]);
    const GaussianBatch pr = gen.eval_reward(states[t], act);
    for (std::size_t r = 0; r < R; ++r) {
      lp[r] += row_log_pdf(obs.row(r), po.mean.row(r).data(), po.log_std.row(r).data());
      lp[r] += row_log_pdf(rew.row(r), pr.mean.row(r).data(), pr.log_std.row(r).data());
    }
    if (t > 0) {
      const GaussianBatch ps = gen.eval_transition(states[t - 1], tile_rows(batch.action[t - 1], mc));
      for (std::size_t r = 0; r < R; ++r) lp[r] += row_log_pdf(states[t].row(r), ps.mean.row(r).data(), ps.log_std.row(r).data());
    }
  }
  return lp;
}

}  // namespace

PosteriorPass run_posterior(Graph& g, const DelipModel& model, const SequenceBatch& batch, Rng& rng,
                            const ElboOptions& options) {
  if (options.mc_samples < 1) throw ContractError("elbo: mc_samples must be >= 1");
  const auto& shape = model.shape();
  const std::size_t D = shape.latent_dim;
  const std::size_t K = shape.components;
  const std::size_t M = options.mc_samples;
  const std::size_t R = batch.batch * M;
  check_draws(options.replay, batch.length, R, D);
  if (options.record) {
    options.record->components.clear();
    options.record->noise.clear();
  }

  const auto summaries = model.posterior().summarize(g, batch, options.zero_reward_input);
  PosteriorPass pass;
  Var s_prev = g.constant(Tensor(R, D));
  Var a_prev = g.constant(Tensor(R, shape.num_actions));
  std::vector<Var> log_q_terms;
  for (std::size_t t = 0; t < batch.length; ++t) {
    Var summary = summaries[t];
    if (M > 1) {
      std::vector<Var> copies(M, summary);
      summary = ad::concat_rows(copies);
    }
    const MixtureVars mix = model.posterior().head(g, summary, s_prev, a_prev);
    const auto comps =
        options.replay ? options.replay->components[t] : draw_components(mix.log_weights.value(), rng);
    Tensor used_noise;
    Var s = sample_reparam(ad::gather_blocks(mix.means, comps, D), ad::gather_blocks(mix.log_stds, comps, D), rng,
                           options.replay ? &options.replay->noise[t] : nullptr, &used_noise);
    if (options.record) {
      options.record->components.push_back(comps);
      options.record->noise.push_back(std::move(used_noise));
    }
    std::vector<Var> per_component;
    per_component.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
      per_component.push_back(
          ad::gaussian_log_pdf_rows(s, ad::slice_cols(mix.means, k * D, D), ad::slice_cols(mix.log_stds, k * D, D)));
    }
    log_q_terms.push_back(ad::logsumexp_rows(ad::add(mix.log_weights, ad::concat_cols(per_component))));
    pass.states.push_back(s);
    s_prev = s;
    a_prev = g.constant(tile_rows(batch.action[t], M));
  }
  pass.log_q = ad::fold_rows(ad::concat_rows(log_q_terms), R);
  return pass;
}

Var log_joint_rows(Graph& g, const GenerativeModel& gen, const SequenceBatch& batch, std::size_t mc_samples,
                   std::span<const Var> states, bool include_reward_term) {
  const std::size_t T = batch.length;
  const std::size_t R = batch.batch * mc_samples;
  if (states.size() != T) throw ContractError("log joint: latent path length differs from trajectory length");

  Var all_states = ad::concat_rows(states);
  const GaussianVars po = gen.observation(g, all_states);
  Var per_step = ad::gaussian_log_pdf_rows(g.constant(stacked(batch.obs, 0, T, mc_samples)), po.mean, po.log_std);
  if (include_reward_term) {
    const GaussianVars pr = gen.reward(g, all_states, g.constant(stacked(batch.action, 0, T, mc_samples)));
    per_step = ad::add(per_step,
                       ad::gaussian_log_pdf_rows(g.constant(stacked(batch.reward, 0, T, mc_samples)), pr.mean, pr.log_std));
  }
  const GaussianVars p0 = gen.prior(g, R);
  Var total = ad::add(ad::fold_rows(per_step, R), ad::gaussian_log_pdf_rows(states[0], p0.mean, p0.log_std));
  if (T > 1) {
    Var prev = ad::concat_rows(states.subspan(0, T - 1));
    Var next = ad::concat_rows(states.subspan(1));
    const GaussianVars ps = gen.transition(g, prev, g.constant(stacked(batch.action, 0, T - 1, mc_samples)));
    total = ad::add(total, ad::fold_rows(ad::gaussian_log_pdf_rows(next, ps.mean, ps.log_std), R));
  }
  return total;
}

Var elbo(Graph& g, const DelipModel& model, const SequenceBatch& batch, Rng& rng, const ElboOptions& options) {
  const PosteriorPass pass = run_posterior(g, model, batch, rng, options);
  Var lj = log_joint_rows(g, model.generative(), batch, options.mc_samples, pass.states, options.include_reward_term);
  const double rows = static_cast<double>(batch.batch * options.mc_samples);
  return ad::scale(ad::sum(ad::sub(lj, pass.log_q)), 1.0 / rows);
}

Var reward_log_likelihood(Graph& g, const GenerativeModel& gen, const SequenceBatch& batch,
                          std::span<const Tensor> states) {
  if (states.size() != batch.length) throw ContractError("reward likelihood: path length mismatch");
  const std::size_t T = batch.length;
  Var s = g.constant(stack_rows(states));
  const GaussianVars pr = gen.reward(g, s, g.constant(stacked(batch.action, 0, T, 1)));
  Var lp = ad::gaussian_log_pdf_rows(g.constant(stacked(batch.reward, 0, T, 1)), pr.mean, pr.log_std);
  return ad::scale(ad::sum(lp), 1.0 / static_cast<double>(batch.batch));
}

std::vector<double> importance_log_weights(const DelipModel& model, const env::Trajectory& trajectory,
                                           std::size_t n, Rng& rng, bool zero_reward_input) {
  const SequenceBatch batch = SequenceBatch::from(trajectory, model.shape().num_actions);
  constexpr std::size_t kChunk = 4096;
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t done = 0; done < n;) {
    const std::size_t m = std::min(kChunk, n - done);
    const EvalPass pass = encode_eval(model, batch, m, rng, zero_reward_input, nullptr);
    const auto lj = log_joint_eval(model.generative(), batch, m, pass.states);
    for (std::size_t r = 0; r < m; ++r) out.push_back(lj[r] - pass.log_q[r]);
    done += m;
  }
  return out;
}

double elbo_value(const DelipModel& model, const env::Trajectory& trajectory, std::size_t mc_samples, Rng& rng) {
  if (mc_samples < 1) throw ContractError("elbo: mc_samples must be >= 1");
  const auto w = importance_log_weights(model, trajectory, mc_samples, rng);
  double s = 0.0;
  for (double v : w) s += v;
  return s / static_cast<double>(w.size());
}

Conditionals conditionals(const GenerativeModel& gen, std::span<const double> s_prev, env::Action a_prev,
                          std::span<const double> s_t, env::Action a_t) {
  const std::size_t D = gen.shape().latent_dim;
  if (s_prev.size() != D || s_t.size() != D) throw ContractError("conditionals: state has wrong dimension");
  const Tensor sp = Tensor::row_vector(s_prev);
  const Tensor st = Tensor::row_vector(s_t);
  return {gen.eval_transition(sp, a_prev).row(0), gen.eval_observation(st).row(0), gen.eval_reward(st, a_t).row(0)};
}

double joint_log_prob(const GenerativeModel& gen, const env::Trajectory& trajectory,
                      const std::vector<std::vector<double>>& path) {
  if (path.size() != trajectory.length()) throw ContractError("joint_log_prob: path length differs from trajectory");
  if (path.empty()) throw ContractError("joint_log_prob: empty trajectory");
  double lp = gaussian_log_pdf(path[0], gen.eval_prior());
  for (std::size_t t = 0; t < path.size(); ++t) {
    const env::Step& step = trajectory.steps[t];
    const env::Action a_prev = t > 0 ? trajectory.steps[t - 1].action : env::Action::Left;
    const Conditionals c = conditionals(gen, t > 0 ? path[t - 1] : path[t], a_prev, path[t], step.action);
    lp += gaussian_log_pdf(step.observation, c.observation);
    const double r = step.reward;
    lp += gaussian_log_pdf(std::span<const double>(&r, 1), c.reward);
    if (t > 0) lp += gaussian_log_pdf(path[t], c.transition);
  }
  return lp;
}

PosteriorSample posterior_encode(const DelipModel& model, const env::Trajectory& trajectory, Rng& rng,
                                 bool zero_reward_input) {
  const SequenceBatch batch = SequenceBatch::from(trajectory, model.shape().num_actions);
  const EvalPass pass = encode_eval(model, batch, 1, rng, zero_reward_input, nullptr);
  PosteriorSample out;
  for (std::size_t t = 0; t < batch.length; ++t) {
    auto row = pass.states[t].row(0);
    out.states.emplace_back(row.begin(), row.end());
    out.mixtures.push_back(pass.mixtures[t].row(0, model.shape().latent_dim));
  }
  out.log_q = pass.log_q[0];
  return out;
}

std::vector<Tensor> posterior_mean_states(const DelipModel& model, const SequenceBatch& batch,
                                          bool zero_reward_input) {
  const auto& shape = model.shape();
  const auto summaries = model.posterior().eval_summarize(batch, zero_reward_input);
  std::vector<Tensor> out;
  Tensor s_prev(batch.batch, shape.latent_dim);
  Tensor a_prev(batch.batch, shape.num_actions);
  for (std::size_t t = 0; t < batch.length; ++t) {
    s_prev = model.posterior().eval_head(summaries[t], s_prev, a_prev).mean(shape.latent_dim);
    a_prev = batch.action[t];
    out.push_back(s_prev);
  }
  return out;
}

QueryResult query_model(const GenerativeModel& gen, std::span<const double> state, env::Action action, Rng& rng,
                        bool with_observation) {
  const std::size_t D = gen.shape().latent_dim;
  if (state.size() != D) throw ContractError("query: state has wrong dimension");
  QueryResult out;
  out.next_state.resize(D);
  thread_local std::vector<double> log_std;
  log_std.resize(std::max<std::size_t>(D, 3));
  gen.transition_row(state, action, out.next_state, std::span<double>(log_std.data(), D));
  for (std::size_t d = 0; d < D; ++d) out.next_state[d] += std::exp(log_std[d]) * rng.normal();
  if (with_observation) {
    gen.observation_row(out.next_state, out.observation, std::span<double>(log_std.data(), 3));
    for (std::size_t k = 0; k < 3; ++k) out.observation[k] += std::exp(log_std[k]) * rng.normal();
  }
  double r_mean = 0.0, r_log_std = 0.0;
  gen.reward_row(state, action, r_mean, r_log_std);
  out.reward = r_mean + std::exp(r_log_std) * rng.normal();
  return out;
}

Tensor LearnedWorld::sample_initial(std::size_t n, Rng& rng) const {
  const GaussianParams prior = model_->generative().eval_prior();
  Tensor out(n, prior.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < prior.dim(); ++d) out(i, d) = prior.mean[d] + std::exp(prior.log_std[d]) * rng.normal();
  }
  return out;
}

QueryResult LearnedWorld::query(std::span<const double> state, env::Action action, Rng& rng,
                                bool with_observation) const {
  return query_model(model_->generative(), state, action, rng, with_observation);
}

Tensor LearnedWorld::propagate(const Tensor& states, env::Action action, Rng& rng) const {
  GaussianBatch p = model_->generative().eval_transition(states, action);
  for (std::size_t i = 0; i < p.mean.size(); ++i) p.mean[i] += std::exp(p.log_std[i]) * rng.normal();
  return std::move(p.mean);
}

std::vector<double> LearnedWorld::observation_log_likelihood(const Tensor& states, const env::Observation& obs) const {
  const GaussianBatch p = model_->generative().eval_observation(states);
  std::vector<double> out(states.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = row_log_pdf(obs, p.mean.row(i).data(), p.log_std.row(i).data());
  return out;
}

std::vector<double> LearnedWorld::reward_log_likelihood(const Tensor& states, env::Action action,
                                                        double reward) const {
  const GaussianBatch p = model_->generative().eval_reward(states, action);
  std::vector<double> out(states.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = row_log_pdf(std::span<const double>(&reward, 1), p.mean.row(i).data(), p.log_std.row(i).data());
  return out;
}

std::vector<double> emitted_stddevs(const DelipModel& model, const SequenceBatch& batch) {
  Rng rng(0);
  std::vector<double> out;
  auto take = [&](const Tensor& log_std) {
    for (double v : log_std.values()) out.push_back(std::exp(v));
  };
  for (double v : model.generative().eval_prior().log_std) out.push_back(std::exp(v));
  const EvalPass pass = encode_eval(model, batch, 1, rng, false, nullptr);
  for (std::size_t t = 0; t < batch.length; ++t) {
    take(pass.mixtures[t].log_stds);
    take(model.generative().eval_observation(pass.states[t]).log_std);
    take(model.generative().eval_reward(pass.states[t], batch.action[t]).log_std);
    if (t > 0) take(model.generative().eval_transition(pass.states[t - 1], batch.action[t - 1]).log_std);
  }
  return out;
}

}  // namespace delip::ssm
