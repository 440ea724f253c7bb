#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "delip/cli/commands.hpp"
#include "delip/cli/config.hpp"
#include "delip/cli/evaluate.hpp"
#include "delip/env/oracle_world.hpp"
#include "delip/numerics/errors.hpp"

using namespace delip;
using namespace delip::cli;

namespace {

MetricRow row(const std::string& method, std::size_t size, double ret) {
  MetricRow r;
  r.method = method;
  r.dataset_size = size;
  r.return_total = ret;
  r.success = ret > 0;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config keys") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("planner.no_such_key", "1"), UsageError);
  CHECK_THROWS_AS(cfg.set("planner.c", "abc"), UsageError);
  CHECK_THROWS_AS(cfg.set("missing-equals"), UsageError);
  const auto before = cfg.hash_hex();
  cfg.set("planner.t_sim=500");
  CHECK(cfg.planner.t_sim == 500);
  CHECK(cfg.hash_hex() != before);
  RunConfig again;
  again.set("planner.t_sim", "500");
  CHECK(again.canonical() == cfg.canonical());
  cfg.set("env.obs_noise_std", "0");
  CHECK(cfg.env.obs_noise_std == 0.0);
  CHECK(defaults_reference().find("planner.t_sim") != std::string::npos);
}

TEST_CASE("report aggregation") {
  SUBCASE("toy regret") {
    const auto rows = aggregate({row("oracle", 0, 1), row("oracle", 0, 1), row("random", 0, 0), row("random", 0, 0)}, true);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "oracle");
    CHECK(*rows[0].regret == 0.0);
    CHECK(rows[1].method == "random");
    CHECK(*rows[1].regret == 1.0);
    CHECK(rows[1].n == 2);
    CHECK(rows[1].stderr_ == 0.0);
  }
  SUBCASE("sorted by method then size") {
    const auto rows = aggregate({row("delip", 8000, 1), row("oracle", 0, 2), row("delip", 500, 3), row("delip", 2000, 4)}, true);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].dataset_size == 500);
    CHECK(rows[1].dataset_size == 2000);
    CHECK(rows[2].dataset_size == 8000);
    CHECK(rows[3].method == "oracle");
    CHECK(*rows[0].regret == doctest::Approx(-1.0));
  }
  SUBCASE("regret needs oracle rows") {
    CHECK_THROWS_AS(aggregate({row("random", 0, 1)}, true), ContractError);
    CHECK_FALSE(aggregate({row("random", 0, 1)}, false)[0].regret.has_value());
  }
}

TEST_CASE("evaluation bookkeeping") {
  const auto env_cfg = env::make_default_config();
  env::OracleWorld oracle(env_cfg);
  planner::PlannerConfig pc;
  pc.t_sim = 50;
  EvalConfig ec;
  ec.episodes = 4;
  ec.length = 30;
  ec.particles = 100;
  const Rng rng(3);

  const auto random = run_eval(Method::Random, env_cfg, nullptr, pc, ec, rng);
  CHECK(random.size() == 4);
  for (const auto* results : {&random}) {
    for (const auto& ep : *results) {
      double sum = 0.0;
      bool opened = false;
      for (const auto& s : ep.steps) {
        sum += s.reward;
        opened = opened || s.reward == 1.0;
      }
      CHECK(sum == ep.return_total);
      CHECK(opened == ep.success);
    }
  }
  SUBCASE("parallel and serial runs agree") {
    auto serial = ec;
    serial.parallel = false;
    const auto a = run_eval(Method::Oracle, env_cfg, &oracle, pc, ec, rng);
    const auto b = run_eval(Method::Oracle, env_cfg, &oracle, pc, serial, rng);
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(a[e].return_total == b[e].return_total);
      REQUIRE(a[e].steps.size() == b[e].steps.size());
      for (std::size_t t = 0; t < a[e].steps.size(); ++t) CHECK(a[e].steps[t].action == b[e].steps[t].action);
      CHECK(a[e].decisions.size() == 30);
    }
  }
  SUBCASE("outputs round trip through the report reader") {
    const auto dir = std::filesystem::temp_directory_path() / "delip_cli_test";
    std::filesystem::remove_all(dir);
    write_eval_outputs(dir, {Method::Random, 0, 3, "abc"}, random);
    CHECK(slurp(dir / "metrics.csv").rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    const auto rows = read_metrics_csv(dir / "metrics.csv");
    REQUIRE(rows.size() == 4);
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(rows[e].return_total == random[e].return_total);
      CHECK(rows[e].config_hash == "abc");
    }
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("command preconditions") {
  const auto dir = std::filesystem::temp_directory_path() / "delip_cmd_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ostringstream log;

  CollectArgs c;
  c.episodes = 3;
  c.length = 10;
  c.common.seed = 5;
  c.out = dir / "a.csv";
  CHECK(run_collect(c, log) == 0);
  CHECK_THROWS_AS(run_collect(c, log), UsageError);
  c.common.force = true;
  const auto first = slurp(c.out);
  CHECK(run_collect(c, log) == 0);
  CHECK(slurp(c.out) == first);

  TrainArgs t;
  t.mode = "rewards-only";
  t.data = c.out;
  t.out = dir / "train";
  CHECK_THROWS_AS(run_train(t, log), UsageError);

  EvalArgs e;
  e.planner = "delip";
  e.out = dir / "eval";
  CHECK_THROWS_AS(run_eval(e, log), UsageError);
  std::filesystem::remove_all(dir);
}
