#include "delip/trainer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "delip/numerics/errors.hpp"

namespace delip::trainer {

Dataset Dataset::from(std::vector<env::Trajectory> trajectories, std::uint64_t env_hash, std::uint64_t seed) {
  Dataset d;
  for (const auto& tr : trajectories) {
    if (tr.length() == 0) throw ContractError("dataset: empty trajectory");
    if (tr.length() != trajectories.front().length()) throw ContractError("dataset: trajectories differ in length");
    d.returns.push_back(tr.total_reward());
  }
  d.trajectories = std::move(trajectories);
  d.env_hash = env_hash;
  d.seed = seed;
  return d;
}

Dataset collect(const env::EnvConfig& cfg, std::size_t n_episodes, std::size_t length, Rng& rng) {
  if (n_episodes < 1) throw ContractError("collect: need at least one episode");
  if (length < 1) throw ContractError("collect: episode length must be >= 1");
  cfg.validate();
  std::vector<env::Trajectory> out(n_episodes);
  for (auto& tr : out) {
    double x = env::reset(cfg, rng);
    env::Observation o = env::observe(x, cfg, rng);
    std::vector<double> positions;
    for (std::size_t t = 0; t < length; ++t) {
      const auto a = static_cast<env::Action>(rng.uniform_index(env::kNumActions));
      auto [next, st] = env::step(x, a, cfg, rng);
      tr.steps.push_back({a, o, st.reward});
      positions.push_back(x);
      x = next;
      o = st.observation;
    }
    tr.true_positions = std::move(positions);
  }
  return Dataset::from(std::move(out), cfg.hash(), rng.seed());
}

std::vector<std::size_t> bin_by_return(std::span<const double> returns, std::size_t n_bins) {
  if (returns.empty()) throw ContractError("bin_by_return: empty dataset");
  if (n_bins < 1) throw ContractError("bin_by_return: need at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(returns.begin(), returns.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<std::size_t> bins(returns.size(), 0);
  if (!(hi > lo)) return bins;
  const double n = static_cast<double>(n_bins);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const double pos = std::floor((returns[i] - lo) * n / (hi - lo));
    bins[i] = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), n_bins - 1);
  }
  return bins;
}

std::vector<std::size_t> sample_batch(std::span<const std::size_t> bins, std::size_t n_bins, std::size_t batch_size,
                                      Rng& rng) {
  if (n_bins < 1 || batch_size % n_bins != 0) throw ContractError("sample_batch: batch_size must be divisible by n_bins");
  std::vector<std::vector<std::size_t>> members(n_bins);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i] >= n_bins) throw ContractError("sample_batch: bin index out of range");
    members[bins[i]].push_back(i);
  }
  std::vector<std::size_t> nonempty;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (!members[b].empty()) nonempty.push_back(b);
  }
  if (nonempty.empty()) throw ContractError("sample_batch: all bins are empty");

  const std::size_t quota = batch_size / n_bins;
  std::vector<std::size_t> take(n_bins, 0);
  for (std::size_t b : nonempty) take[b] = quota;
  const std::size_t spare = quota * (n_bins - nonempty.size());
  for (std::size_t j = 0; j < spare; ++j) ++take[nonempty[j % nonempty.size()]];

  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (std::size_t b : nonempty) {
    for (std::size_t j = 0; j < take[b]; ++j) out.push_back(members[b][rng.uniform_index(members[b].size())]);
  }
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.uniform_index(i)]);
  return p;
}

}  // namespace delip::trainer
