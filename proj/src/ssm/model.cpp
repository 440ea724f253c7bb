#include "delip/ssm/model.hpp"

#include <algorithm>
#include <cmath>

#include "delip/numerics/errors.hpp"

namespace delip::ssm {
namespace {

// [rows x (a.cols + b.cols)]
Tensor hcat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ContractError("hcat: row mismatch");
  Tensor out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), o.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Tensor tile_cols(const Tensor& a, std::size_t times) {
  Tensor out(a.rows(), a.cols() * times);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < times; ++k) {
      for (std::size_t j = 0; j < a.cols(); ++j) out(i, k * a.cols() + j) = a(i, j);
    }
  }
  return out;
}

void log_softmax_inplace(Tensor& t) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto r = t.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : r) v -= lse;
  }
}

void check_width(const Tensor& t, std::size_t cols, const char* what) {
  if (t.cols() != cols) {
    throw ContractError(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " +
                        std::to_string(t.cols()));
  }
}

}  // namespace

Var LogStdPolicy::apply(Graph& g, Var raw) const {
  if (forced) return g.constant(Tensor(raw.rows(), raw.cols(), *forced));
  return ad::clamp(raw, kMinLogStd, kMaxLogStd);
}

void LogStdPolicy::apply(Tensor& raw) const {
  for (double& v : raw.values()) v = forced ? *forced : std::clamp(v, kMinLogStd, kMaxLogStd);
}

GaussianParams GaussianBatch::row(std::size_t i) const {
  auto m = mean.row(i);
  auto l = log_std.row(i);
  return GaussianParams({m.begin(), m.end()}, {l.begin(), l.end()});
}

Tensor one_hot(env::Action a, std::size_t rows, std::size_t num_actions) {
  Tensor t(rows, num_actions);
  for (std::size_t i = 0; i < rows; ++i) t(i, static_cast<std::size_t>(a)) = 1.0;
  return t;
}

// ---------------------------------------------------------------------------
// GenerativeModel

GenerativeModel::GenerativeModel(ParameterStore& store, const ModelShape& shape, const LogStdPolicy& policy)
    : shape_(shape),
      policy_(&policy),
      prior_mean_(&store.add("gen.prior.mean", 1, shape.latent_dim)),
      prior_log_std_(&store.add("gen.prior.log_std", 1, shape.latent_dim)),
      trans_mean_(store, "gen.trans.mean", shape.latent_dim + shape.num_actions, shape.latent_dim),
      trans_log_std_(store, "gen.trans.log_std", shape.latent_dim + shape.num_actions, shape.latent_dim),
      obs_trunk_(store, "gen.obs.trunk", {shape.latent_dim, shape.net_hidden, shape.net_hidden}),
      obs_mean_(store, "gen.obs.mean", shape.net_hidden, shape.obs_dim),
      obs_log_std_(store, "gen.obs.log_std", shape.net_hidden, shape.obs_dim),
      reward_trunk_(store, "gen.reward.trunk", {shape.latent_dim + shape.num_actions, shape.net_hidden, shape.net_hidden}),
      reward_mean_(store, "gen.reward.mean", shape.net_hidden, 1),
      reward_log_std_(store, "gen.reward.log_std", shape.net_hidden, 1) {}

void GenerativeModel::init(Rng& rng) {
  prior_mean_->value.fill(0.0);
  prior_log_std_->value.fill(-1.0);
  trans_mean_.init_fan_in(rng);
  trans_log_std_.init_constant(-1.0);
  obs_trunk_.init_fan_in(rng);
  obs_mean_.init_fan_in(rng);
  obs_log_std_.init_constant(-1.0);
  reward_trunk_.init_fan_in(rng);
  reward_mean_.init_fan_in(rng);
  reward_log_std_.init_constant(-1.0);
}

GaussianVars GenerativeModel::prior(Graph& g, std::size_t rows) const {
  Var mean = ad::broadcast_rows(g.parameter(*prior_mean_), rows);
  Var log_std = policy_->apply(g, ad::broadcast_rows(g.parameter(*prior_log_std_), rows));
  return {mean, log_std};
}

GaussianVars GenerativeModel::transition(Graph& g, Var s_prev, Var a_prev_onehot) const {
  const Var parts[] = {s_prev, a_prev_onehot};
  Var in = ad::concat_cols(parts);
  return {trans_mean_.forward(g, in), policy_->apply(g, trans_log_std_.forward(g, in))};
}

GaussianVars GenerativeModel::observation(Graph& g, Var s) const {
  Var h = ad::relu(obs_trunk_.forward(g, s));
  return {obs_mean_.forward(g, h), policy_->apply(g, obs_log_std_.forward(g, h))};
}

GaussianVars GenerativeModel::reward(Graph& g, Var s, Var a_onehot) const {
  const Var parts[] = {s, a_onehot};
  Var h = ad::relu(reward_trunk_.forward(g, ad::concat_cols(parts)));
  return {reward_mean_.forward(g, h), policy_->apply(g, reward_log_std_.forward(g, h))};
}

GaussianParams GenerativeModel::eval_prior() const {
  Tensor ls = prior_log_std_->value;
  policy_->apply(ls);
  auto m = prior_mean_->value.values();
  return GaussianParams({m.begin(), m.end()}, {ls.values().begin(), ls.values().end()});
}

GaussianBatch GenerativeModel::eval_transition(const Tensor& s_prev, env::Action a) const {
  return eval_transition(s_prev, one_hot(a, s_prev.rows(), shape_.num_actions));
}

GaussianBatch GenerativeModel::eval_transition(const Tensor& s_prev, const Tensor& a_onehot) const {
  check_width(s_prev, shape_.latent_dim, "transition");
  const Tensor in = hcat(s_prev, a_onehot);
  GaussianBatch out{trans_mean_.eval(in), trans_log_std_.eval(in)};
  policy_->apply(out.log_std);
  return out;
}

GaussianBatch GenerativeModel::eval_observation(const Tensor& s) const {
  check_width(s, shape_.latent_dim, "observation");
  Tensor h = obs_trunk_.eval(s);
  relu_inplace(h);
  GaussianBatch out{obs_mean_.eval(h), obs_log_std_.eval(h)};
  policy_->apply(out.log_std);
  return out;
}

GaussianBatch GenerativeModel::eval_reward(const Tensor& s, env::Action a) const {
  return eval_reward(s, one_hot(a, s.rows(), shape_.num_actions));
}

GaussianBatch GenerativeModel::eval_reward(const Tensor& s, const Tensor& a_onehot) const {
  check_width(s, shape_.latent_dim, "reward");
  Tensor h = reward_trunk_.eval(hcat(s, a_onehot));
  relu_inplace(h);
  GaussianBatch out{reward_mean_.eval(h), reward_log_std_.eval(h)};
  policy_->apply(out.log_std);
  return out;
}

double GenerativeModel::apply_policy(double raw) const {
  return policy_->forced ? *policy_->forced : std::clamp(raw, kMinLogStd, kMaxLogStd);
}

namespace {
thread_local std::vector<double> t_in, t_hidden, t_scratch;
}

void GenerativeModel::transition_row(std::span<const double> s, env::Action a, std::span<double> mean,
                                     std::span<double> log_std) const {
  const std::size_t D = shape_.latent_dim;
  t_in.assign(s.begin(), s.end());
  t_in.resize(D + shape_.num_actions, 0.0);
  std::fill(t_in.begin() + static_cast<std::ptrdiff_t>(D), t_in.end(), 0.0);
  t_in[D + static_cast<std::size_t>(a)] = 1.0;
  trans_mean_.eval_row(t_in, mean);
  trans_log_std_.eval_row(t_in, log_std);
  for (double& v : log_std) v = apply_policy(v);
}

void GenerativeModel::observation_row(std::span<const double> s, std::span<double> mean,
                                      std::span<double> log_std) const {
  obs_trunk_.eval_row(s, t_hidden, t_scratch);
  for (double& v : t_hidden) v = v > 0.0 ? v : 0.0;
  obs_mean_.eval_row(t_hidden, mean);
  obs_log_std_.eval_row(t_hidden, log_std);
  for (double& v : log_std) v = apply_policy(v);
}

void GenerativeModel::reward_row(std::span<const double> s, env::Action a, double& mean, double& log_std) const {
  const std::size_t D = shape_.latent_dim;
  t_in.assign(s.begin(), s.end());
  t_in.resize(D + shape_.num_actions, 0.0);
  std::fill(t_in.begin() + static_cast<std::ptrdiff_t>(D), t_in.end(), 0.0);
  t_in[D + static_cast<std::size_t>(a)] = 1.0;
  reward_trunk_.eval_row(t_in, t_hidden, t_scratch);
  for (double& v : t_hidden) v = v > 0.0 ? v : 0.0;
  reward_mean_.eval_row(t_hidden, std::span<double>(&mean, 1));
  reward_log_std_.eval_row(t_hidden, std::span<double>(&log_std, 1));
  log_std = apply_policy(log_std);
}

// ---------------------------------------------------------------------------
// Mixtures

std::vector<double> MixtureParams::mean() const {
  std::vector<double> m(components.empty() ? 0 : components[0].dim(), 0.0);
  for (std::size_t k = 0; k < components.size(); ++k) {
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += weights[k] * components[k].mean[d];
  }
  return m;
}

double MixtureParams::log_pdf(std::span<const double> x) const {
  std::vector<double> terms(components.size());
  for (std::size_t k = 0; k < components.size(); ++k) {
    terms[k] = std::log(weights[k]) + gaussian_log_pdf(x, components[k]);
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s);
}

MixtureParams MixtureBatch::row(std::size_t i, std::size_t latent_dim) const {
  MixtureParams p;
  const std::size_t k_count = log_weights.cols();
  for (std::size_t k = 0; k < k_count; ++k) {
    p.weights.push_back(std::exp(log_weights(i, k)));
    std::vector<double> m(latent_dim), l(latent_dim);
    for (std::size_t d = 0; d < latent_dim; ++d) {
      m[d] = means(i, k * latent_dim + d);
      l[d] = log_stds(i, k * latent_dim + d);
    }
    p.components.emplace_back(std::move(m), std::move(l));
  }
  return p;
}

Tensor MixtureBatch::mean(std::size_t latent_dim) const {
  Tensor out(means.rows(), latent_dim);
  for (std::size_t i = 0; i < means.rows(); ++i) {
    for (std::size_t k = 0; k < log_weights.cols(); ++k) {
      const double w = std::exp(log_weights(i, k));
      for (std::size_t d = 0; d < latent_dim; ++d) out(i, d) += w * means(i, k * latent_dim + d);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SequenceBatch

SequenceBatch SequenceBatch::from(std::span<const env::Trajectory* const> trajectories, std::size_t num_actions) {
  if (trajectories.empty()) throw ContractError("sequence batch: no trajectories");
  SequenceBatch b;
  b.batch = trajectories.size();
  b.length = trajectories[0]->length();
  if (b.length == 0) throw ContractError("sequence batch: empty trajectory");
  for (const auto* tr : trajectories) {
    if (tr->length() != b.length) throw ContractError("sequence batch: trajectories differ in length");
  }
  for (std::size_t t = 0; t < b.length; ++t) {
    Tensor o(b.batch, 3), r(b.batch, 1), a(b.batch, num_actions);
    for (std::size_t i = 0; i < b.batch; ++i) {
      const env::Step& s = trajectories[i]->steps[t];
      for (std::size_t k = 0; k < 3; ++k) o(i, k) = s.observation[k];
      r(i, 0) = s.reward;
      a(i, static_cast<std::size_t>(s.action)) = 1.0;
    }
    b.obs.push_back(std::move(o));
    b.reward.push_back(std::move(r));
    b.action.push_back(std::move(a));
  }
  return b;
}

SequenceBatch SequenceBatch::from(const env::Trajectory& trajectory, std::size_t num_actions) {
  const env::Trajectory* one[] = {&trajectory};
  return from(one, num_actions);
}

SequenceBatch SequenceBatch::tiled(std::size_t times) const {
  SequenceBatch b;
  b.batch = batch * times;
  b.length = length;
  auto tile = [&](const Tensor& src) {
    Tensor out(b.batch, src.cols());
    for (std::size_t r = 0; r < b.batch; ++r) {
      auto s = src.row(r % batch);
      std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
  };
  for (std::size_t t = 0; t < length; ++t) {
    b.obs.push_back(tile(obs[t]));
    b.reward.push_back(tile(reward[t]));
    b.action.push_back(tile(action[t]));
  }
  return b;
}

// ---------------------------------------------------------------------------
// PosteriorModel

PosteriorModel::PosteriorModel(ParameterStore& store, const ModelShape& shape, const LogStdPolicy& policy)
    : shape_(shape),
      policy_(&policy),
      forward_(store, "post.lstm_fwd", shape.obs_dim + 1 + shape.num_actions, shape.lstm_hidden),
      backward_(store, "post.lstm_bwd", shape.obs_dim + 1 + shape.num_actions, shape.lstm_hidden),
      head_hidden_(store, "post.head.hidden", 2 * shape.lstm_hidden + shape.latent_dim + shape.num_actions,
                   shape.head_hidden),
      head_logits_(store, "post.head.logits", shape.head_hidden, shape.components),
      head_means_(store, "post.head.means", shape.head_hidden, shape.components * shape.latent_dim),
      head_log_stds_(store, "post.head.log_stds", shape.head_hidden, shape.components * shape.latent_dim) {}

void PosteriorModel::init(Rng& rng) {
  forward_.init(rng);
  backward_.init(rng);
  head_hidden_.init_fan_in(rng);
  head_logits_.init_fan_in(rng);
  head_means_.init_fan_in(rng);
  head_log_stds_.init_constant(-1.0);
}

Tensor PosteriorModel::input_at(const SequenceBatch& batch, std::size_t t, bool zero_reward) const {
  const std::size_t width = shape_.obs_dim + 1 + shape_.num_actions;
  Tensor x(batch.batch, width);
  for (std::size_t i = 0; i < batch.batch; ++i) {
    for (std::size_t k = 0; k < shape_.obs_dim; ++k) x(i, k) = batch.obs[t](i, k);
    x(i, shape_.obs_dim) = zero_reward ? 0.0 : batch.reward[t](i, 0);
    for (std::size_t k = 0; k < shape_.num_actions; ++k) x(i, shape_.obs_dim + 1 + k) = batch.action[t](i, k);
  }
  return x;
}

std::vector<Var> PosteriorModel::summarize(Graph& g, const SequenceBatch& batch, bool zero_reward) const {
  const std::size_t T = batch.length;
  const std::size_t H = shape_.lstm_hidden;
  std::vector<Var> inputs;
  inputs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) inputs.push_back(g.constant(input_at(batch, t, zero_reward)));

  std::vector<Var> fwd(T), bwd(T);
  Var h = g.constant(Tensor(batch.batch, H));
  Var c = h;
  for (std::size_t t = 0; t < T; ++t) {
    std::tie(h, c) = forward_.step(g, inputs[t], h, c);
    fwd[t] = h;
  }
  h = g.constant(Tensor(batch.batch, H));
  c = h;
  for (std::size_t t = T; t-- > 0;) {
    std::tie(h, c) = backward_.step(g, inputs[t], h, c);
    bwd[t] = h;
  }
  std::vector<Var> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Var parts[] = {fwd[t], bwd[t]};
    out[t] = ad::concat_cols(parts);
  }
  return out;
}

MixtureVars PosteriorModel::head(Graph& g, Var summary, Var s_prev, Var a_prev_onehot) const {
  const Var parts[] = {summary, s_prev, a_prev_onehot};
  Var hidden = ad::tanh(head_hidden_.forward(g, ad::concat_cols(parts)));
  Var log_w = ad::log_softmax_rows(head_logits_.forward(g, hidden));
  std::vector<Var> tiles(shape_.components, s_prev);
  Var means = ad::add(ad::concat_cols(tiles), head_means_.forward(g, hidden));
  Var log_stds = policy_->apply(g, head_log_stds_.forward(g, hidden));
  return {log_w, means, log_stds};
}

std::vector<Tensor> PosteriorModel::eval_summarize(const SequenceBatch& batch, bool zero_reward) const {
  const std::size_t T = batch.length;
  const std::size_t H = shape_.lstm_hidden;
  std::vector<Tensor> inputs;
  inputs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) inputs.push_back(input_at(batch, t, zero_reward));
  std::vector<Tensor> fwd(T), bwd(T);
  Tensor h(batch.batch, H), c(batch.batch, H);
  for (std::size_t t = 0; t < T; ++t) {
    std::tie(h, c) = forward_.eval_step(inputs[t], h, c);
    fwd[t] = h;
  }
  h = Tensor(batch.batch, H);
  c = Tensor(batch.batch, H);
  for (std::size_t t = T; t-- > 0;) {
    std::tie(h, c) = backward_.eval_step(inputs[t], h, c);
    bwd[t] = h;
  }
  std::vector<Tensor> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = hcat(fwd[t], bwd[t]);
  return out;
}

MixtureBatch PosteriorModel::eval_head(const Tensor& summary, const Tensor& s_prev, const Tensor& a_prev_onehot) const {
  Tensor hidden = head_hidden_.eval(hcat(hcat(summary, s_prev), a_prev_onehot));
  for (double& v : hidden.values()) v = std::tanh(v);
  MixtureBatch out;
  out.log_weights = head_logits_.eval(hidden);
  log_softmax_inplace(out.log_weights);
  out.means = head_means_.eval(hidden);
  const Tensor base = tile_cols(s_prev, shape_.components);
  for (std::size_t i = 0; i < out.means.size(); ++i) out.means[i] = base[i] + out.means[i];
  out.log_stds = head_log_stds_.eval(hidden);
  policy_->apply(out.log_stds);
  return out;
}

// ---------------------------------------------------------------------------
// DelipModel

DelipModel::DelipModel(const ModelShape& shape, Rng& rng)
    : shape_(shape), store_(), gen_(store_, shape_, log_std_policy_), post_(store_, shape_, log_std_policy_) {
  if (shape.latent_dim < 1) throw ContractError("latent_dim must be >= 1");
  if (shape.components < 1) throw ContractError("mixture needs at least one component");
  gen_.init(rng);
  post_.init(rng);
}

void DelipModel::freeze_all_except(const std::string& prefix) {
  for (Parameter* p : store_.all()) p->frozen = p->name.rfind(prefix, 0) != 0;
}

void DelipModel::unfreeze_all() {
  for (Parameter* p : store_.all()) p->frozen = false;
}

std::unique_ptr<DelipModel> init_model(const ModelShape& shape, Rng& rng) {
  return std::make_unique<DelipModel>(shape, rng);
}

}  // namespace delip::ssm
