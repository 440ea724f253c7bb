#include <doctest.h>

#include <cmath>
#include <numeric>

#include "delip/env/oracle_world.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/planner/pomcp.hpp"
#include "stub_world.hpp"

using namespace delip;
using env::Action;

namespace {

belief::BeliefParticles point_belief(double s) {
  belief::BeliefParticles b{Tensor(1, 1, s), {1.0}};
  return b;
}

}  // namespace

TEST_CASE("ucb score") {
  CHECK(planner::ucb_score(0.5, 10, 5, 1.0) == doctest::Approx(0.5 + std::sqrt(std::log(10.0) / 5.0)));
  CHECK(planner::ucb_score(0.5, 10, 5, 1.0) == doctest::Approx(1.1786).epsilon(1e-4));
  CHECK(std::isinf(planner::ucb_score(0.0, 10, 0, 1.0)));

  planner::Node node;
  node.n = 10;
  node.actions[0] = {5, 0.9};
  node.actions[1] = {5, 0.1};
  CHECK(planner::ucb_select(node, 1.0) == Action::Open);
  node.actions[2] = {1, 0.3};
  CHECK(planner::ucb_select(node, 0.0) == Action::Left);
  node.actions[1].v = 0.95;
  CHECK(planner::ucb_select(node, 0.0) == Action::Right);
  node.actions[1].v = 0.9;
  CHECK(planner::ucb_select(node, 0.0) == Action::Left);
}

TEST_CASE("depth cutoff") {
  planner::PlannerConfig cfg;
  cfg.gamma = 0.9;
  cfg.epsilon = 0.2;
  CHECK_FALSE(planner::cutoff(15, cfg));
  CHECK(planner::cutoff(16, cfg));
  cfg.gamma = 1.0;
  cfg.epsilon = 0.01;
  CHECK_FALSE(planner::cutoff(29, cfg));
  CHECK(planner::cutoff(30, cfg));
}

TEST_CASE("rollout") {
  testing::StubWorld world;
  planner::PlannerConfig cfg;
  planner::Pomcp p(world, cfg);
  Rng rng(1);
  const double s = 0.0;
  CHECK(p.rollout({&s, 1}, 30, rng) == 0.0);
  CHECK(p.rollout({&s, 1}, 0, rng) == 0.0);
  world.reward_fn = [](double, Action) { return 1.0; };
  CHECK(p.rollout({&s, 1}, 0, rng) == 30.0);
}

TEST_CASE("search") {
  testing::StubWorld world;
  world.reward_fn = [](double, Action a) { return a == Action::Open ? 1.0 : 0.0; };
  planner::PlannerConfig cfg;
  cfg.t_sim = 300;
  Rng rng(2);

  SUBCASE("dominant action") {
    planner::Pomcp p(world, cfg);
    CHECK(p.search(point_belief(0.3), rng) == Action::Open);
  }
  SUBCASE("one simulation") {
    cfg.t_sim = 1;
    planner::Pomcp p(world, cfg);
    planner::SearchDiagnostics d;
    p.search(point_belief(0.3), rng, &d);
    CHECK(d.simulations == 1);
    CHECK(d.root_increments == 1.0);
    // the first untried action at the fresh root
    const double s0 = 0.3;
    const auto& root = p.tree().at(belief::discretize({&s0, 1}));
    CHECK(root.actions[0].n == 1.0);
    CHECK(root.actions[1].n == 0.0);
  }
  SUBCASE("same seed, same action and statistics") {
    planner::Pomcp p(world, cfg);
    Rng a(9), b(9);
    planner::SearchDiagnostics da, db;
    belief::BeliefParticles bel{Tensor(3, 1), {0.2, 0.3, 0.5}};
    bel.particles(1, 0) = 4.0;
    bel.particles(2, 0) = -2.0;
    CHECK(p.search(bel, a, &da) == p.search(bel, b, &db));
    CHECK(da.root_n == db.root_n);
    CHECK(da.root_v == db.root_v);
  }
  SUBCASE("visit increments and audit means") {
    cfg.audit = true;
    world.reward_fn = [&](double s, Action a) { return (a == Action::Open ? 1.0 : 0.0) + 0.1 * s; };
    planner::Pomcp p(world, cfg);
    planner::SearchDiagnostics d;
    p.search(point_belief(0.0), rng, &d);
    CHECK(d.root_increments == static_cast<double>(cfg.t_sim - d.root_cutoffs));
    // every simulation descends to the depth cap
    CHECK(d.total_increments == static_cast<double>(cfg.t_sim * cfg.max_depth));
    double node_sum = 0.0;
    for (const auto& [key, node] : p.tree()) node_sum += node.n;
    CHECK(node_sum == d.total_increments);
    std::size_t checked = 0;
    for (const auto& [key, node] : p.tree()) {
      double n_sum = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        n_sum += node.actions[a].n;
        const auto* log = p.audit_returns(key, static_cast<Action>(a));
        if (node.actions[a].n == 0) continue;
        REQUIRE(log != nullptr);
        REQUIRE(log->size() == static_cast<std::size_t>(node.actions[a].n));
        const double mean = std::accumulate(log->begin(), log->end(), 0.0) / static_cast<double>(log->size());
        CHECK(node.actions[a].v == doctest::Approx(mean).epsilon(1e-12));
        ++checked;
      }
      CHECK(node.n == n_sum);
    }
    CHECK(checked > 10);
  }
}

TEST_CASE("shifting every reward leaves the choice unchanged") {
  // Every simulation from depth d runs exactly max_depth - d steps, so with
  // each bin visited at a single depth a constant k shifts all sibling
  // values by the same amount.
  const std::vector<double> starts = {0.0, 1.7, 2.0, 5.0, -3.2};
  std::vector<Action> base;
  std::vector<std::array<double, 3>> base_n;
  for (double k : {0.0, 3.0, -7.5}) {
    testing::StubWorld shifted;
    shifted.drift = true;
    shifted.reward_fn = [k](double s, Action a) {
      if (a == Action::Open) return k + (std::abs(s - 2.0) < 0.5 ? 1.0 : 0.0);
      return k + (a == Action::Left ? 0.25 : -0.25) * std::sin(s);
    };
    planner::PlannerConfig cfg;
    cfg.t_sim = 500;
    planner::Pomcp p(shifted, cfg);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      Rng rng(11);
      planner::SearchDiagnostics d;
      const auto a = p.search(point_belief(starts[i]), rng, &d);
      if (k == 0.0) {
        base.push_back(a);
        base_n.push_back(d.root_n);
      } else {
        INFO("k=" << k << " start=" << starts[i]);
        CHECK(a == base[i]);
        CHECK(d.root_n == base_n[i]);
      }
    }
  }
  CHECK(base[2] == Action::Open);
  CHECK(base[1] == Action::Open);
}

TEST_CASE("the planner drives any world model") {
  auto cfg = env::make_default_config();
  env::OracleWorld oracle(cfg);
  planner::PlannerConfig pc;
  pc.t_sim = 200;
  planner::Pomcp p(oracle, pc);
  Rng rng(5);
  CHECK(p.search(point_belief(2.0), rng) == Action::Open);
  CHECK_THROWS_AS([] {
    planner::PlannerConfig bad;
    bad.t_sim = 0;
    bad.validate();
  }(), ContractError);
}
