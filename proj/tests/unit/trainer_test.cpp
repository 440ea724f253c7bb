#include <doctest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/ssm/elbo.hpp"
#include "delip/ssm/model_io.hpp"
#include "delip/trainer/dataset.hpp"
#include "delip/trainer/trainer.hpp"

using namespace delip;

namespace {

ssm::ModelShape tiny_shape() {
  ssm::ModelShape s;
  s.net_hidden = 8;
  s.lstm_hidden = 4;
  s.head_hidden = 6;
  return s;
}

std::vector<std::size_t> counts(std::span<const std::size_t> idx, std::span<const std::size_t> bins, std::size_t n) {
  std::vector<std::size_t> c(n, 0);
  for (std::size_t i : idx) ++c[bins[i]];
  return c;
}

}  // namespace

TEST_CASE("collect") {
  const auto cfg = env::make_default_config();
  Rng rng(1);
  const auto one = trainer::collect(cfg, 1, 100, rng);
  REQUIRE(one.size() == 1);
  CHECK(one.length() == 100);

  SUBCASE("action histogram") {
    Rng r(2);
    const auto d = trainer::collect(cfg, 1000, 100, r);
    std::array<double, 3> h{};
    for (const auto& t : d.trajectories) {
      for (const auto& s : t.steps) h[static_cast<int>(s.action)] += 1.0;
    }
    for (double v : h) {
      CHECK(v / 1e5 >= 0.32);
      CHECK(v / 1e5 <= 0.35);
    }
  }
  SUBCASE("same seed gives the same csv bytes") {
    const auto dir = std::filesystem::temp_directory_path() / "delip_collect_test";
    std::filesystem::create_directories(dir);
    for (const char* name : {"a.csv", "b.csv"}) {
      Rng r(3);
      env::write_dataset_csv(dir / name, trainer::collect(cfg, 5, 20, r).trajectories);
    }
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("bin_by_return") {
  const std::vector<double> r = {-3, -1, 0, 1, 2};
  CHECK(trainer::bin_by_return(r, 5) == std::vector<std::size_t>{0, 2, 3, 4, 4});
  const std::vector<double> flat = {1.5, 1.5, 1.5};
  CHECK(trainer::bin_by_return(flat, 5) == std::vector<std::size_t>{0, 0, 0});
  Rng rng(4);
  std::vector<double> many(200);
  for (double& v : many) v = rng.normal() * 10.0;
  for (std::size_t b : trainer::bin_by_return(many, 5)) CHECK(b < 5);
}

TEST_CASE("stratified batches") {
  Rng rng(5);
  SUBCASE("every bin nonempty gives exact quotas") {
    std::vector<std::size_t> bins;
    for (std::size_t i = 0; i < 57; ++i) bins.push_back(i % 5);
    for (int rep = 0; rep < 20; ++rep) {
      const auto idx = trainer::sample_batch(bins, 5, 100, rng);
      REQUIRE(idx.size() == 100);
      CHECK(counts(idx, bins, 5) == std::vector<std::size_t>(5, 20));
    }
  }
  SUBCASE("one nonempty bin") {
    const std::vector<std::size_t> bins = {3, 3, 3};
    const auto idx = trainer::sample_batch(bins, 5, 100, rng);
    CHECK(idx.size() == 100);
    CHECK(counts(idx, bins, 5)[3] == 100);
  }
  SUBCASE("single member bin is drawn with replacement") {
    std::vector<std::size_t> bins = {0, 1, 1, 2, 2, 3, 3, 4, 4};
    const auto idx = trainer::sample_batch(bins, 5, 100, rng);
    CHECK(std::count(idx.begin(), idx.end(), std::size_t{0}) == 20);
  }
  SUBCASE("permutation") {
    auto p = trainer::permutation(50, rng);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
  }
}

TEST_CASE("clamp schedule") {
  trainer::TrainConfig cfg;
  CHECK(trainer::clamp_override(cfg, 0) == -1.5);
  CHECK(trainer::clamp_override(cfg, 999) == -1.5);
  CHECK_FALSE(trainer::clamp_override(cfg, 1000).has_value());
  CHECK_FALSE(trainer::clamp_override(cfg, 1001).has_value());
}

TEST_CASE("training a single trajectory") {
  Rng data_rng(6);
  const auto data = trainer::collect(env::make_default_config(), 1, 20, data_rng);
  trainer::TrainConfig cfg;
  cfg.max_epochs = 300;
  cfg.clamp_epochs = 20;
  cfg.batch_size = 5;
  cfg.learning_rate = 3e-3;
  cfg.patience = 100000;
  cfg.stratified = false;

  Rng init(7);
  ssm::DelipModel model(tiny_shape(), init);
  std::vector<double> sigmas_during_clamp;
  Rng probe_rng(1);
  const auto batch = ssm::SequenceBatch::from(data.trajectories.front(), 3);
  Rng rng(8);
  const auto res = trainer::train_full(model, data, cfg, rng, [&](std::size_t epoch, const ssm::DelipModel& m) {
    if (epoch == 19) sigmas_during_clamp = ssm::emitted_stddevs(m, batch);
  });
  CHECK(res.log.size() <= cfg.max_epochs);
  REQUIRE(res.log.size() == 300);
  for (double s : sigmas_during_clamp) CHECK(s == doctest::Approx(std::exp(-1.5)));
  double first = 0.0, last = 0.0;
  for (std::size_t i = 20; i < 30; ++i) first += res.log[i].mean_elbo;
  for (std::size_t i = 290; i < 300; ++i) last += res.log[i].mean_elbo;
  CHECK(last > first);

  SUBCASE("same inputs give identical checkpoint bytes") {
    Rng init2(7), rng2(8);
    ssm::DelipModel again(tiny_shape(), init2);
    const auto res2 = trainer::train_full(again, data, cfg, rng2);
    CHECK(encode_checkpoint(res2.final) == encode_checkpoint(res.final));
  }
}

TEST_CASE("rewards-only training") {
  Rng data_rng(9);
  auto data = trainer::collect(env::make_default_config(), 20, 15, data_rng);
  Rng init(10);
  ssm::DelipModel model(tiny_shape(), init);
  const auto pretrained = ssm::save_model(model, {{"train.mode", "full"}, {"train.reward_input", "zeroed"}, {"data.size", "20"}});

  trainer::TrainConfig cfg;
  cfg.mode = trainer::TrainMode::RewardsOnly;
  cfg.max_epochs = 40;
  cfg.clamp_epochs = 0;
  cfg.batch_size = 10;
  cfg.patience = 100000;

  SUBCASE("only the reward network moves") {
    Rng rng(11);
    const auto res = trainer::train_rewards_only(model, pretrained, data, cfg, rng);
    REQUIRE(res.final.arrays.size() == pretrained.arrays.size());
    bool reward_changed = false;
    for (std::size_t i = 0; i < pretrained.arrays.size(); ++i) {
      const auto& name = pretrained.arrays[i].name;
      REQUIRE(res.final.arrays[i].name == name);
      const bool same = res.final.arrays[i].values == pretrained.arrays[i].values;
      if (name.rfind(ssm::kRewardNetPrefix, 0) == 0) {
        reward_changed = reward_changed || !same;
      } else {
        INFO(name);
        CHECK(same);
      }
    }
    CHECK(reward_changed);
  }
  SUBCASE("constant reward is regressed") {
    const double c = 0.7;
    for (auto& t : data.trajectories) {
      for (auto& s : t.steps) s.reward = c;
    }
    data = trainer::Dataset::from(data.trajectories, data.env_hash, data.seed);
    cfg.max_epochs = 400;
    cfg.learning_rate = 1e-2;
    Rng rng(12);
    trainer::train_rewards_only(model, pretrained, data, cfg, rng);
    Rng grid(13);
    for (int i = 0; i < 50; ++i) {
      const std::vector<double> s = {grid.normal() * 0.5, grid.normal() * 0.5};
      for (auto a : {env::Action::Left, env::Action::Right, env::Action::Open}) {
        double mean = 0.0, log_std = 0.0;
        model.generative().reward_row(s, a, mean, log_std);
        CHECK(std::abs(mean - c) <= 0.05);
      }
    }
  }
}
