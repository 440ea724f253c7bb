#include "delip/env/door_world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::env {

Action action_from_int(int a) {
  if (a < 0 || a >= kNumActions) throw ContractError("invalid action " + std::to_string(a));
  return static_cast<Action>(a);
}

const char* action_name(Action a) {
  switch (a) {
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Open: return "open";
  }
  return "?";
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("env config: " + what); };
  if (!(lower_bound < upper_bound)) fail("lower_bound must be below upper_bound");
  if (doors.empty()) fail("at least one door required");
  for (std::size_t i = 0; i < doors.size(); ++i) {
    if (!(doors[i] > lower_bound && doors[i] < upper_bound)) fail("door outside bounds");
    if (i > 0 && !(doors[i] > doors[i - 1])) fail("doors must be strictly increasing");
  }
  if (correct_door_index < 0 || static_cast<std::size_t>(correct_door_index) >= doors.size()) {
    fail("correct_door_index out of range");
  }
  if (!(step_size > 0.0)) fail("step_size must be positive");
  if (!(init_std >= 0.0)) fail("init_std must be nonnegative");
  if (boundary_penalty > 0.0) fail("boundary_penalty must be <= 0");
  if (!(open_tolerance > 0.0)) fail("open_tolerance must be positive");
  if (!(obs_noise_std >= 0.0)) fail("obs_noise_std must be nonnegative");
  if (!(sigma_boundary > 0.0) || !(sigma_door > 0.0)) fail("signal widths must be positive");
}

std::string EnvConfig::canonical() const {
  std::ostringstream os;
  auto line = [&](const char* key, double v) { os << key << '=' << format_real(v) << '\n'; };
  line("lower_bound", lower_bound);
  line("upper_bound", upper_bound);
  os << "doors=";
  for (std::size_t i = 0; i < doors.size(); ++i) os << (i ? "," : "") << format_real(doors[i]);
  os << "\n";
  os << "correct_door_index=" << correct_door_index << "\n";
  line("step_size", step_size);
  line("init_mean", init_mean);
  line("init_std", init_std);
  line("boundary_penalty", boundary_penalty);
  line("open_tolerance", open_tolerance);
  line("obs_noise_std", obs_noise_std);
  line("sigma_boundary", sigma_boundary);
  line("sigma_door", sigma_door);
  return os.str();
}

std::uint64_t EnvConfig::hash() const {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EnvConfig make_default_config() {
  EnvConfig cfg;
  cfg.validate();
  return cfg;
}

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

Observation signals(double x, const EnvConfig& cfg) {
  auto bump = [](double d, double sigma) { return std::exp(-(d * d) / (2.0 * sigma * sigma)); };
  double door = 0.0;
  for (double d : cfg.doors) door = std::max(door, bump(x - d, cfg.sigma_door));
  return {bump(x - cfg.lower_bound, cfg.sigma_boundary), door, bump(x - cfg.upper_bound, cfg.sigma_boundary)};
}

Observation observe(double position, const EnvConfig& cfg, Rng& rng) {
  Observation o = signals(position, cfg);
  if (cfg.obs_noise_std > 0.0) {
    for (double& v : o) v += cfg.obs_noise_std * rng.normal();
  }
  return o;
}

double clip_position(double position, const EnvConfig& cfg) {
  return std::clamp(position, cfg.lower_bound, cfg.upper_bound);
}

double reset(const EnvConfig& cfg, Rng& rng) {
  return clip_position(cfg.init_mean + cfg.init_std * rng.normal(), cfg);
}

namespace {
double unclipped_move(double position, Action action, const EnvConfig& cfg) {
  switch (action) {
    case Action::Left: return position - cfg.step_size;
    case Action::Right: return position + cfg.step_size;
    case Action::Open: return position;
  }
  throw ContractError("invalid action");
}
}  // namespace

double move(double position, Action action, const EnvConfig& cfg) {
  return clip_position(unclipped_move(position, action, cfg), cfg);
}

double reward(double position, Action action, const EnvConfig& cfg) {
  if (action == Action::Open) {
    return std::abs(position - cfg.correct_door()) <= cfg.open_tolerance ? 1.0 : 0.0;
  }
  const double target = unclipped_move(position, action, cfg);
  return (target < cfg.lower_bound || target > cfg.upper_bound) ? cfg.boundary_penalty : 0.0;
}

std::pair<double, Step> step(double position, Action action, const EnvConfig& cfg, Rng& rng) {
  const int a = static_cast<int>(action);
  if (a < 0 || a >= kNumActions) throw ContractError("invalid action " + std::to_string(a));
  Step s;
  s.action = action;
  s.reward = reward(position, action, cfg);
  const double next = move(position, action, cfg);
  s.observation = observe(next, cfg, rng);
  return {next, s};
}

}  // namespace delip::env
