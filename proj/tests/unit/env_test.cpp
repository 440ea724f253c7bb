#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "delip/env/dataset_csv.hpp"
#include "delip/env/door_world.hpp"
#include "delip/env/oracle_world.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/trainer/dataset.hpp"

using namespace delip;
using env::Action;

TEST_CASE("default config") {
  const auto cfg = env::make_default_config();
  CHECK(cfg.doors.size() == 4);
  CHECK(cfg.correct_door() == 2.0);
  // second door from the right
  CHECK(cfg.doors[cfg.doors.size() - 2] == cfg.correct_door());
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.correct_door_index = 4;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("reset clips to the bounds") {
  const auto cfg = env::make_default_config();
  CHECK(env::clip_position(17.2, cfg) == 15.0);
  CHECK(env::clip_position(-3.4, cfg) == -3.4);
  Rng rng(4);
  double m = 0.0, ss = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 100000; ++i) {
    const double x = env::reset(cfg, rng);
    CHECK_LE(std::abs(x), 15.0);
    if (std::abs(x) < 15.0) {
      m += x;
      ss += x * x;
      ++n;
    }
  }
  m /= static_cast<double>(n);
  const double sd = std::sqrt(ss / static_cast<double>(n) - m * m);
  CHECK(sd >= 4.7);
  CHECK(sd <= 5.3);
}

TEST_CASE("step dynamics and rewards") {
  const auto cfg = env::make_default_config();
  Rng rng(1);
  auto [p1, s1] = env::step(0.0, Action::Right, cfg, rng);
  CHECK(p1 == 1.0);
  CHECK(s1.reward == 0.0);
  auto [p2, s2] = env::step(-15.0, Action::Left, cfg, rng);
  CHECK(p2 == -15.0);
  CHECK(s2.reward == -1.0);
  auto [p3, s3] = env::step(2.0, Action::Open, cfg, rng);
  CHECK(p3 == 2.0);
  CHECK(s3.reward == 1.0);
  auto [p4, s4] = env::step(10.0, Action::Open, cfg, rng);
  CHECK(p4 == 10.0);
  CHECK(s4.reward == 0.0);
  CHECK(env::reward(2.5, Action::Open, cfg) == 1.0);
  CHECK(env::reward(2.51, Action::Open, cfg) == 0.0);
  CHECK_THROWS_AS(env::action_from_int(3), ContractError);
}

TEST_CASE("random walks stay inside the bounds") {
  const auto cfg = env::make_default_config();
  Rng rng(12);
  double x = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = env::action_from_int(static_cast<int>(rng.uniform_index(3)));
    const double before = x;
    x = env::move(x, a, cfg);
    CHECK_LE(std::abs(x), 15.0);
    if (a == Action::Open) CHECK(x == before);
    if (std::abs(before) <= 13.0) {
      CHECK(env::move(env::move(before, Action::Left, cfg), Action::Right, cfg) == before);
    }
  }
}

TEST_CASE("noiseless signals") {
  const auto cfg = env::make_default_config();
  CHECK(env::signals(-15.0, cfg)[0] == doctest::Approx(1.0));
  CHECK(env::signals(15.0, cfg)[2] == doctest::Approx(1.0));
  CHECK(env::signals(2.0, cfg)[1] == doctest::Approx(1.0));
  const auto at0 = env::signals(0.0, cfg);
  CHECK(at0[1] == doctest::Approx(std::exp(-8.0)).epsilon(1e-12));
  CHECK(at0[1] == doctest::Approx(3.355e-4).epsilon(1e-3));
  CHECK(at0[0] < 1e-40);
  CHECK(at0[2] < 1e-40);
  for (double x = -15.0; x <= 15.0; x += 0.01) {
    for (double v : env::signals(x, cfg)) {
      CHECK_GE(v, 0.0);
      CHECK_LE(v, 1.0);
    }
    // continuity
    const auto a = env::signals(x, cfg);
    const auto b = env::signals(x + 1e-6, cfg);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-5);
  }
}

TEST_CASE("dataset csv round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "delip_env_test";
  std::filesystem::create_directories(dir);
  const auto cfg = env::make_default_config();
  Rng rng(5);
  auto data = trainer::collect(cfg, 3, 7, rng);
  const auto csv = dir / "d.csv";
  env::write_dataset_csv(csv, data.trajectories);
  const auto back = env::read_dataset_csv(csv);
  REQUIRE(back.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    REQUIRE(back[e].length() == 7);
    for (std::size_t t = 0; t < 7; ++t) {
      CHECK(back[e].steps[t].action == data.trajectories[e].steps[t].action);
      CHECK(back[e].steps[t].reward == data.trajectories[e].steps[t].reward);
      CHECK(back[e].steps[t].observation == data.trajectories[e].steps[t].observation);
    }
  }
  env::write_dataset_meta(env::meta_path_for(csv), {cfg, 5, 3, 7});
  const auto meta = env::read_dataset_meta(env::meta_path_for(csv));
  CHECK(meta.env.hash() == cfg.hash());
  CHECK(meta.episodes == 3);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "episode,t,action\n0,0,1\n";
  }
  CHECK_THROWS_AS(env::read_dataset_csv(dir / "bad.csv"), ContractError);
  {
    std::ofstream gap(dir / "gap.csv");
    gap << env::kDatasetHeader << "\n0,0,1,0,0,0,0\n0,2,1,0,0,0,0\n";
  }
  CHECK_THROWS_AS(env::read_dataset_csv(dir / "gap.csv"), ContractError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("oracle world follows the true dynamics") {
  const auto cfg = env::make_default_config();
  env::OracleWorld w(cfg);
  Rng rng(2);
  const double s = 1.6;
  const auto q = w.query({&s, 1}, Action::Open, rng);
  CHECK(q.next_state[0] == 1.6);
  CHECK(q.reward == 1.0);
  const auto init = w.sample_initial(500, rng);
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < init.rows(); ++i) {
    lo = std::min(lo, init(i, 0));
    hi = std::max(hi, init(i, 0));
  }
  CHECK(lo >= -15.0);
  CHECK(hi <= 15.0);
  CHECK(w.observation_sigma() == doctest::Approx(0.05));
  auto quiet = cfg;
  quiet.obs_noise_std = 0.0;
  CHECK(env::OracleWorld(quiet).observation_sigma() == doctest::Approx(0.05));
}
