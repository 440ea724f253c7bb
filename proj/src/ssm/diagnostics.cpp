#include "delip/ssm/diagnostics.hpp"

#include <cmath>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/ssm/elbo.hpp"

namespace delip::ssm {

std::vector<PredictionRow> one_step_predictions(const DelipModel& model, const env::EnvConfig& env,
                                                std::span<const env::Trajectory> trajectories,
                                                bool zero_reward_input) {
  std::vector<const env::Trajectory*> ptrs;
  for (const auto& tr : trajectories) {
    if (!tr.true_positions || tr.true_positions->size() != tr.length()) {
      throw ContractError("one_step_predictions: trajectory lacks true positions");
    }
    ptrs.push_back(&tr);
  }
  if (ptrs.empty()) return {};
  const auto batch = SequenceBatch::from(ptrs, model.shape().num_actions);
  const auto states = posterior_mean_states(model, batch, zero_reward_input);
  const auto& gen = model.generative();

  std::vector<PredictionRow> rows;
  for (std::size_t t = 0; t + 1 < batch.length; ++t) {
    const auto next = gen.eval_transition(states[t], batch.action[t]);
    const auto obs = gen.eval_observation(next.mean);
    const auto rew = gen.eval_reward(states[t], batch.action[t]);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      PredictionRow row;
      row.trajectory = b;
      row.t = t;
      row.next_position = (*trajectories[b].true_positions)[t + 1];
      row.truth = env::signals(row.next_position, env);
      for (std::size_t c = 0; c < 3; ++c) {
        row.mean[c] = obs.mean(b, c);
        row.stddev[c] = std::exp(obs.log_std(b, c));
      }
      row.reward = trajectories[b].steps[t].reward;
      row.reward_mean = rew.mean(b, 0);
      row.reward_stddev = std::exp(rew.log_std(b, 0));
      rows.push_back(row);
    }
  }
  return rows;
}

std::array<double, 3> channel_rmse(std::span<const PredictionRow> rows) {
  std::array<double, 3> out{};
  if (rows.empty()) return out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < 3; ++c) out[c] += (r.mean[c] - r.truth[c]) * (r.mean[c] - r.truth[c]);
  }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(rows.size()));
  return out;
}

void write_predictions_csv(std::ostream& os, std::span<const PredictionRow> rows) {
  os << "trajectory,t,next_position,true_left,true_door,true_right,pred_left,pred_door,pred_right,"
        "std_left,std_door,std_right,reward,pred_reward,std_reward\n";
  for (const auto& r : rows) {
    os << r.trajectory << ',' << r.t << ',' << env::format_real(r.next_position);
    for (double v : r.truth) os << ',' << env::format_real(v);
    for (double v : r.mean) os << ',' << env::format_real(v);
    for (double v : r.stddev) os << ',' << env::format_real(v);
    os << ',' << env::format_real(r.reward) << ',' << env::format_real(r.reward_mean) << ','
       << env::format_real(r.reward_stddev) << '\n';
  }
}

}  // namespace delip::ssm
