#include "delip/planner/pomcp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::planner {

void PlannerConfig::validate() const {
  if (t_sim < 1) throw ContractError("planner: t_sim must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("planner: gamma must be in (0, 1]");
  if (max_depth < 1) throw ContractError("planner: max_depth must be >= 1");
  if (!(c >= 0.0) || !std::isfinite(c)) throw ContractError("planner: c must be finite and >= 0");
  if (!(epsilon >= 0.0)) throw ContractError("planner: epsilon must be >= 0");
  if (!(n_init >= 0.0) || !std::isfinite(v_init)) throw ContractError("planner: bad node initializers");
  if (!(bin_width > 0.0)) throw ContractError("planner: bin_width must be positive");
}

double ucb_score(double v, double n_s, double n_sa, double c) {
  if (n_sa <= 0.0) return std::numeric_limits<double>::infinity();
  const double ln = n_s > 1.0 ? std::log(n_s) : 0.0;
  return v + c * std::sqrt(ln / n_sa);
}

env::Action ucb_select(const Node& node, double c) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < kActions; ++a) {
    const double s = ucb_score(node.actions[a].v, node.n, node.actions[a].n, c);
    if (s > best_score) {
      best_score = s;
      best = a;
    }
  }
  return env::action_from_int(static_cast<int>(best));
}

bool cutoff(std::size_t depth, const PlannerConfig& cfg) {
  if (depth >= cfg.max_depth) return true;
  return std::pow(cfg.gamma, static_cast<double>(depth)) <= cfg.epsilon;
}

env::Action random_action(Rng& rng) {
  return env::action_from_int(static_cast<int>(rng.uniform_index(kActions)));
}

Pomcp::Pomcp(const WorldModel& model, PlannerConfig cfg) : model_(&model), cfg_(cfg) { cfg_.validate(); }

void Pomcp::clear() {
  tree_.clear();
  audit_.clear();
  simulate_calls_ = 0;
  increments_ = 0.0;
  root_increments_ = 0.0;
}

double Pomcp::rollout(std::span<const double> s, std::size_t depth, Rng& rng) {
  double total = 0.0;
  double discount = 1.0;
  std::vector<double> state(s.begin(), s.end());
  for (std::size_t d = depth; !cutoff(d, cfg_); ++d) {
    QueryResult q = model_->query(state, random_action(rng), rng, false);
    total += discount * q.reward;
    discount *= cfg_.gamma;
    state = std::move(q.next_state);
  }
  return total;
}

void Pomcp::backup(Node& node, std::size_t a, double r, const belief::StateKey& key) {
  node.n += 1.0;
  increments_ += 1.0;
  ActionStats& st = node.actions[a];
  st.n += 1.0;
  st.v += (r - st.v) / st.n;
  if (cfg_.audit) audit_[key][a].push_back(r);
}

double Pomcp::simulate(std::span<const double> s, std::size_t depth, Rng& rng) {
  ++simulate_calls_;
  if (cutoff(depth, cfg_)) return 0.0;
  belief::StateKey key = belief::discretize(s, cfg_.bin_width);
  auto it = tree_.find(key);
  if (it == tree_.end()) {
    Node fresh;
    for (auto& st : fresh.actions) st = {cfg_.n_init, cfg_.v_init};
    fresh.n = cfg_.n_init * static_cast<double>(kActions);
    it = tree_.emplace(key, fresh).first;
    if (cfg_.expansion_rollouts) {
      for (std::size_t a = 0; a < kActions; ++a) (void)rollout(s, depth, rng);
    }
  }
  Node& node = it->second;
  const env::Action a = ucb_select(node, cfg_.c);
  QueryResult q = model_->query(s, a, rng, false);
  const double r = q.reward + cfg_.gamma * simulate(q.next_state, depth + 1, rng);
  backup(node, static_cast<std::size_t>(a), r, key);
  if (depth == 0) root_increments_ += 1.0;
  return r;
}

env::Action Pomcp::search(const belief::BeliefParticles& belief, Rng& rng, SearchDiagnostics* diag) {
  const auto start = std::chrono::steady_clock::now();
  clear();
  std::vector<belief::StateKey> roots;
  std::unordered_set<belief::StateKey, belief::StateKeyHash> seen;
  std::size_t root_cutoffs = 0;
  for (std::size_t i = 0; i < cfg_.t_sim; ++i) {
    const auto s = belief.particle(belief.sample_index(rng));
    if (cutoff(0, cfg_)) ++root_cutoffs;
    auto key = belief::discretize(s, cfg_.bin_width);
    if (seen.insert(key).second) roots.push_back(std::move(key));
    simulate(s, 0, rng);
  }

  // Root statistics pooled over every sampled root key, weighted by visits.
  std::array<double, kActions> n{};
  std::array<double, kActions> sum{};
  for (const auto& key : roots) {
    auto it = tree_.find(key);
    if (it == tree_.end()) continue;
    for (std::size_t a = 0; a < kActions; ++a) {
      n[a] += it->second.actions[a].n;
      sum[a] += it->second.actions[a].n * it->second.actions[a].v;
    }
  }
  std::array<double, kActions> v{};
  std::size_t best = 0;
  for (std::size_t a = 0; a < kActions; ++a) {
    v[a] = n[a] > 0.0 ? sum[a] / n[a] : cfg_.v_init;
    if (v[a] > v[best]) best = a;
  }
  const env::Action action = env::action_from_int(static_cast<int>(best));
  if (diag) {
    diag->action = action;
    diag->root_n = n;
    diag->root_v = v;
    diag->simulations = cfg_.t_sim;
    diag->root_cutoffs = root_cutoffs;
    diag->root_keys = roots.size();
    diag->tree_size = tree_.size();
    diag->total_increments = increments_;
    diag->root_increments = root_increments_;
    diag->wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return action;
}

const std::vector<double>* Pomcp::audit_returns(const belief::StateKey& key, env::Action a) const {
  auto it = audit_.find(key);
  if (it == audit_.end()) return nullptr;
  return &it->second[static_cast<std::size_t>(a)];
}

void write_diagnostics_header(std::ostream& os) {
  os << "step,action,n_left,n_right,n_open,v_left,v_right,v_open,wall_ms\n";
}

void append_diagnostics_row(std::ostream& os, std::size_t step, const SearchDiagnostics& d) {
  os << step << ',' << env::action_name(d.action);
  for (double x : d.root_n) os << ',' << env::format_real(x);
  for (double x : d.root_v) os << ',' << env::format_real(x);
  os << ',' << env::format_real(d.wall_ms) << '\n';
}

}  // namespace delip::planner
