#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "delip/belief/particles.hpp"
#include "delip/world_model.hpp"

namespace delip::planner {

inline constexpr std::size_t kActions = static_cast<std::size_t>(env::kNumActions);

struct PlannerConfig {
  double c = 1.0;
  std::size_t t_sim = 2000;
  double gamma = 1.0;
  double epsilon = 0.01;
  std::size_t max_depth = 30;
  double n_init = 0.0;
  double v_init = 0.0;
  double bin_width = belief::kDefaultBinWidth;
  // One rollout per action when a node is expanded. Their returns are
  // discarded, so switching them off only changes random-number consumption.
  bool expansion_rollouts = true;
  // Keep every backed-up return so V can be checked against a plain mean.
  bool audit = false;

  void validate() const;
};

struct ActionStats {
  double n = 0.0;
  double v = 0.0;
};

struct Node {
  double n = 0.0;
  std::array<ActionStats, kActions> actions{};
};

using SearchTree = std::unordered_map<belief::StateKey, Node, belief::StateKeyHash>;

// Upper-confidence score; +inf when n_sa == 0.
double ucb_score(double v, double n_s, double n_sa, double c);
// Highest score wins, ties to the lowest action index.
env::Action ucb_select(const Node& node, double c);

// gamma^depth <= epsilon, or depth >= max_depth.
bool cutoff(std::size_t depth, const PlannerConfig& cfg);

struct SearchDiagnostics {
  env::Action action = env::Action::Left;
  std::array<double, kActions> root_n{};
  std::array<double, kActions> root_v{};
  std::size_t simulations = 0;
  std::size_t root_cutoffs = 0;
  std::size_t root_keys = 0;
  std::size_t tree_size = 0;
  double total_increments = 0.0;  // sum of N(s) increments over all nodes
  double root_increments = 0.0;   // increments made at depth 0
  double wall_ms = 0.0;
};

/// State-keyed Monte-Carlo tree search over any WorldModel. The tree lives
/// for one search call.
class Pomcp {
public:
  Pomcp(const WorldModel& model, PlannerConfig cfg);

  env::Action search(const belief::BeliefParticles& belief, Rng& rng, SearchDiagnostics* diag = nullptr);

  double simulate(std::span<const double> s, std::size_t depth, Rng& rng);
  double rollout(std::span<const double> s, std::size_t depth, Rng& rng);

  const SearchTree& tree() const { return tree_; }
  const PlannerConfig& config() const { return cfg_; }
  void clear();

  // Audit log: every return backed up through (key, a). Empty unless cfg.audit.
  const std::vector<double>* audit_returns(const belief::StateKey& key, env::Action a) const;
  // Number of simulate() calls issued by the last search (cutoffs included).
  std::size_t simulate_calls() const { return simulate_calls_; }

private:
  void backup(Node& node, std::size_t a, double r, const belief::StateKey& key);

  const WorldModel* model_;
  PlannerConfig cfg_;
  SearchTree tree_;
  std::unordered_map<belief::StateKey, std::array<std::vector<double>, kActions>, belief::StateKeyHash> audit_;
  std::size_t simulate_calls_ = 0;
  double increments_ = 0.0;
  double root_increments_ = 0.0;
};

// Uniform-random action (the Random baseline and the rollout policy).
env::Action random_action(Rng& rng);

// CSV: step,action,n_left,n_right,n_open,v_left,v_right,v_open,wall_ms
void write_diagnostics_header(std::ostream& os);
void append_diagnostics_row(std::ostream& os, std::size_t step, const SearchDiagnostics& d);

}  // namespace delip::planner
