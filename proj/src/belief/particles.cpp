#include "delip/belief/particles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::belief {
namespace {

BeliefParticles uniform(Tensor particles) {
  BeliefParticles b;
  const std::size_t n = particles.rows();
  b.particles = std::move(particles);
  b.weights.assign(n, 1.0 / static_cast<double>(n));
  return b;
}

BeliefParticles resampled(const Tensor& particles, std::span<const double> weights, Rng& rng) {
  const auto idx = systematic_resample(weights, rng);
  Tensor out(idx.size(), particles.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = particles.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return uniform(std::move(out));
}

}  // namespace

std::size_t StateKeyHash::operator()(const StateKey& k) const noexcept {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::int64_t v : k.bins) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
  return static_cast<std::size_t>(h);
}

StateKey discretize(std::span<const double> s, double width) {
  StateKey key;
  key.bins.reserve(s.size());
  for (double v : s) {
    if (!std::isfinite(v)) throw ContractError("discretize: non-finite state coordinate");
    key.bins.push_back(static_cast<std::int64_t>(std::floor(v / width + 1e-9)));
  }
  return key;
}

std::size_t BeliefParticles::sample_index(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

void BeliefParticles::validate() const {
  if (weights.empty()) throw ContractError("belief: no particles");
  if (particles.rows() != weights.size()) throw ContractError("belief: particle/weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ContractError("belief: invalid weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("belief: weights do not sum to 1");
}

BeliefParticles init_belief(const WorldModel& model, std::size_t n_particles, Rng& rng) {
  if (n_particles < 1) throw ContractError("init_belief: need at least one particle");
  return uniform(model.sample_initial(n_particles, rng));
}

double normalize_log_weights(std::vector<double>& lw) {
  const double mx = *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(mx)) {
    // Every particle has zero likelihood (or the model produced NaN).
    std::fill(lw.begin(), lw.end(), 1.0 / static_cast<double>(lw.size()));
    return -std::numeric_limits<double>::infinity();
  }
  double s = 0.0;
  for (double& v : lw) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : lw) v /= s;
  return mx + std::log(s) - std::log(static_cast<double>(lw.size()));
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> out(n);
  const double step = 1.0 / static_cast<double>(n);
  double u = rng.uniform() * step;
  double cum = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (u >= cum && j + 1 < n) cum += weights[++j];
    out[i] = j;
    u += step;
  }
  return out;
}

UpdateResult condition(const BeliefParticles& belief, const env::Observation& obs, const WorldModel& model, Rng& rng,
                       const FilterConfig& cfg) {
  belief.validate();
  std::vector<double> lw = model.observation_log_likelihood(belief.particles, obs);
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] += std::log(belief.weights[i]) + std::log(static_cast<double>(lw.size()));
  const double log_total = normalize_log_weights(lw);
  UpdateResult out;
  if (!(log_total >= std::log(cfg.degeneracy_threshold))) {
    out.weights = belief.weights;
    out.belief = resampled(belief.particles, belief.weights, rng);
    out.reinitialized = true;
    return out;
  }
  out.belief = resampled(belief.particles, lw, rng);
  out.weights = std::move(lw);
  return out;
}

UpdateResult update(const BeliefParticles& belief, env::Action action, const env::Observation& obs, double reward,
                    const WorldModel& model, Rng& rng, const FilterConfig& cfg) {
  belief.validate();
  std::vector<double> lw = model.reward_log_likelihood(belief.particles, action, reward);
  const Tensor moved = model.propagate(belief.particles, action, rng);
  const std::vector<double> lo = model.observation_log_likelihood(moved, obs);
  const double n = static_cast<double>(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] += lo[i] + std::log(belief.weights[i] * n);
  const double log_total = normalize_log_weights(lw);

  UpdateResult out;
  if (!(log_total >= std::log(cfg.degeneracy_threshold))) {
    const BeliefParticles fresh = init_belief(model, belief.size(), rng);
    UpdateResult re = condition(fresh, obs, model, rng, cfg);
    re.reinitialized = true;
    return re;
  }
  out.belief = resampled(moved, lw, rng);
  out.weights = std::move(lw);
  return out;
}

void write_belief_header(std::ostream& os, std::size_t state_dim) {
  os << "step,particle";
  for (std::size_t d = 0; d < state_dim; ++d) os << ",s" << d;
  os << ",weight\n";
}

void append_belief_rows(std::ostream& os, std::size_t step, const BeliefParticles& belief) {
  for (std::size_t i = 0; i < belief.size(); ++i) {
    os << step << ',' << i;
    for (double v : belief.particle(i)) os << ',' << env::format_real(v);
    os << ',' << env::format_real(belief.weights[i]) << '\n';
  }
}

double mass_within(const BeliefParticles& belief, double target, double radius) {
  double m = 0.0;
  for (std::size_t i = 0; i < belief.size(); ++i) {
    if (std::abs(belief.particles(i, 0) - target) <= radius) m += belief.weights[i];
  }
  return m;
}

}  // namespace delip::belief
