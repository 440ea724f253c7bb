#include "delip/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::cli {
namespace {

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError("bad number for " + key + ": '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError("bad count for " + key + ": '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw UsageError("bad flag for " + key + ": '" + v + "' (expected 0/1/true/false)");
}

std::string real_str(double v) { return env::format_real(v); }

struct Entry {
  std::string key;
  const char* help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define REAL(prefix, member, field, help)                                                   \
  Entry {                                                                                   \
    prefix "." #field, help, [](const RunConfig& c) { return real_str(c.member.field); },  \
        [](RunConfig& c, const std::string& v) { c.member.field = to_real(prefix "." #field, v); } \
  }
#define SIZE(prefix, member, field, help)                                                        \
  Entry {                                                                                        \
    prefix "." #field, help, [](const RunConfig& c) { return std::to_string(c.member.field); },  \
        [](RunConfig& c, const std::string& v) { c.member.field = to_size(prefix "." #field, v); } \
  }
#define FLAG(prefix, member, field, help)                                                          \
  Entry {                                                                                          \
    prefix "." #field, help, [](const RunConfig& c) { return std::string(c.member.field ? "1" : "0"); }, \
        [](RunConfig& c, const std::string& v) { c.member.field = to_bool(prefix "." #field, v); } \
  }

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    // env.* goes through the env module's own key parser.
    const char* env_keys[][2] = {
        {"lower_bound", "left wall position"},
        {"upper_bound", "right wall position"},
        {"doors", "comma-separated door positions"},
        {"correct_door_index", "index into doors of the rewarding door"},
        {"step_size", "distance moved by Left/Right"},
        {"init_mean", "mean of the initial position"},
        {"init_std", "std of the initial position (then clipped)"},
        {"boundary_penalty", "reward for walking into a wall"},
        {"open_tolerance", "max distance to the correct door for a rewarded Open"},
        {"obs_noise_std", "observation noise std per channel"},
        {"sigma_boundary", "width of the wall signals"},
        {"sigma_door", "width of the door signal bumps"},
    };
    for (const auto& [k, help] : env_keys) {
      const std::string key = k;
      e.push_back(Entry{"env." + key, help,
                        [key](const RunConfig& c) {
                          std::istringstream lines(c.env.canonical());
                          for (std::string line; std::getline(lines, line);) {
                            if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
                          }
                          return std::string();
                        },
                        [key](RunConfig& c, const std::string& v) {
                          try {
                            env::apply_env_key(c.env, key, v);
                          } catch (const ContractError& err) {
                            throw UsageError(err.what());
                          }
                        }});
    }
    const std::vector<Entry> rest = {
        SIZE("model", model, latent_dim, "latent state dimension"),
        SIZE("model", model, net_hidden, "hidden width of the observation and reward networks"),
        SIZE("model", model, lstm_hidden, "LSTM units per direction in the posterior"),
        SIZE("model", model, head_hidden, "hidden width of the posterior head"),
        SIZE("model", model, components, "posterior mixture components"),
        SIZE("train", train, batch_size, "trajectories per batch"),
        SIZE("train", train, max_epochs, "epoch cap"),
        SIZE("train", train, clamp_epochs, "epochs with every log-variance forced to clamp_log_var"),
        REAL("train", train, clamp_log_var, "forced log-variance during the clamp phase"),
        SIZE("train", train, n_bins, "return bins for stratified batches"),
        REAL("train", train, learning_rate, "Adam step size"),
        REAL("train", train, weight_decay, "L2 coefficient added to gradients"),
        REAL("train", train, grad_clip, "global gradient-norm clip (<= 0 disables)"),
        SIZE("train", train, patience, "epochs without moving-average improvement before stopping"),
        SIZE("train", train, ma_window, "moving-average window for convergence"),
        SIZE("train", train, mc_samples, "posterior samples per trajectory"),
        FLAG("train", train, stratified, "return-stratified batches"),
        FLAG("train", train, zero_reward_channel, "zero posterior reward input and drop the reward term"),
        REAL("planner", planner, c, "UCB exploration constant"),
        SIZE("planner", planner, t_sim, "simulations per decision"),
        REAL("planner", planner, gamma, "discount"),
        REAL("planner", planner, epsilon, "discount cutoff gamma^depth <= epsilon"),
        SIZE("planner", planner, max_depth, "search and rollout depth cap"),
        REAL("planner", planner, n_init, "initial N(s,a)"),
        REAL("planner", planner, v_init, "initial V(s,a)"),
        REAL("planner", planner, bin_width, "state discretization width"),
        FLAG("planner", planner, expansion_rollouts, "rollout per action when a node is expanded"),
        REAL("belief", eval.filter, degeneracy_threshold, "mean likelihood below which the filter reinitializes"),
        Entry{"belief.oracle_reward_sigma", "reward likelihood width under the Oracle",
              [](const RunConfig& c) { return real_str(c.oracle_reward_sigma); },
              [](RunConfig& c, const std::string& v) { c.oracle_reward_sigma = to_real("belief.oracle_reward_sigma", v); }},
        SIZE("eval", eval, particles, "belief particles"),
        SIZE("eval", eval, episodes, "evaluation episodes"),
        SIZE("eval", eval, length, "steps per evaluation episode"),
        FLAG("eval", eval, dump_belief, "write belief.csv"),
        FLAG("eval", eval, parallel, "run episodes on OpenMP threads"),
    };
    e.insert(e.end(), rest.begin(), rest.end());
    return e;
  }();
  return entries;
}

#undef REAL
#undef SIZE
#undef FLAG

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "train.mode") {
    train.mode = trainer::mode_from_string(value);
    return;
  }
  for (const auto& e : table()) {
    if (key == e.key) {
      e.set(*this, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::validate() const {
  try {
    env.validate();
    train.validate();
    planner.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (model.latent_dim < 1 || model.components < 1) throw UsageError("model: latent_dim and components must be >= 1");
  if (eval.particles < 1) throw UsageError("eval.particles must be >= 1");
  if (!(oracle_reward_sigma > 0.0)) throw UsageError("belief.oracle_reward_sigma must be positive");
}

std::string RunConfig::canonical() const {
  std::vector<std::string> lines;
  lines.push_back(std::string("train.mode=") + trainer::mode_name(train.mode));
  for (const auto& e : table()) lines.push_back(e.key + "=" + e.get(*this));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (file) {
    if (!std::filesystem::exists(*file)) throw UsageError("config file not found: " + file->string());
    for (const auto& [k, v] : env::read_key_values(*file)) cfg.set(k, v);
  }
  for (const auto& o : overrides) cfg.set(o);
  cfg.validate();
  return cfg;
}

std::string defaults_reference() {
  const RunConfig def;
  std::ostringstream os;
  os << "# delip configuration keys (key=value, '#' comments)\n";
  os << "train.mode=" << trainer::mode_name(def.train.mode) << "  # full | rewards-only\n";
  for (const auto& e : table()) os << e.key << "=" << e.get(def) << "  # " << e.help << "\n";
  return os.str();
}

}  // namespace delip::cli
