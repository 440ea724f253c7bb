#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "delip/env/door_world.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/numerics/gaussian.hpp"
#include "delip/ssm/elbo.hpp"
#include "delip/ssm/model.hpp"
#include "delip/ssm/model_io.hpp"
#include "delip/trainer/dataset.hpp"

using namespace delip;
using env::Action;

namespace {

env::Trajectory toy_trajectory(std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  return trainer::collect(env::make_default_config(), 1, T, rng).trajectories.front();
}

ssm::ModelShape small_shape(std::size_t latent = 2) {
  ssm::ModelShape s;
  s.latent_dim = latent;
  s.net_hidden = 8;
  s.lstm_hidden = 4;
  s.head_hidden = 6;
  return s;
}

}  // namespace

TEST_CASE("model initialization") {
  SUBCASE("latent_dim 1") {
    Rng rng(1);
    ssm::DelipModel m(small_shape(1), rng);
    const auto prior = m.generative().eval_prior();
    CHECK(prior.mean.size() == 1);
    CHECK(prior.mean[0] == 0.0);
    CHECK(prior.log_std[0] == doctest::Approx(-1.0));
  }
  SUBCASE("same seed, same checkpoint bytes") {
    Rng a(7), b(7);
    ssm::DelipModel m1(ssm::ModelShape{}, a), m2(ssm::ModelShape{}, b);
    CHECK(encode_checkpoint(ssm::save_model(m1, {})) == encode_checkpoint(ssm::save_model(m2, {})));
  }
  SUBCASE("initial elbo is finite") {
    Rng rng(3);
    ssm::DelipModel m(ssm::ModelShape{}, rng);
    CHECK(std::isfinite(ssm::elbo_value(m, toy_trajectory(100, 4), 4, rng)));
  }
}

TEST_CASE("conditionals") {
  Rng rng(2);
  ssm::DelipModel m(small_shape(), rng);
  SUBCASE("zeroed transition map gives a zero mean") {
    for (Parameter* p : m.params().all()) {
      if (p->name.rfind("gen.trans.mean", 0) == 0) p->value.fill(0.0);
    }
    const double s[2] = {3.0, -4.0};
    const auto c = ssm::conditionals(m.generative(), s, Action::Right, s, Action::Open);
    CHECK(c.transition.mean[0] == 0.0);
    CHECK(c.transition.mean[1] == 0.0);
  }
  SUBCASE("observation ignores the action") {
    const double s[2] = {0.4, 1.1};
    const auto a = ssm::conditionals(m.generative(), s, Action::Left, s, Action::Left);
    const auto b = ssm::conditionals(m.generative(), s, Action::Left, s, Action::Open);
    CHECK(a.observation.mean == b.observation.mean);
    CHECK(a.observation.log_std == b.observation.log_std);
  }
  SUBCASE("finite over a grid") {
    for (double x = -20.0; x <= 20.0; x += 2.5) {
      for (double y = -20.0; y <= 20.0; y += 2.5) {
        const double s[2] = {x, y};
        const auto c = ssm::conditionals(m.generative(), s, Action::Left, s, Action::Right);
        for (const auto* g : {&c.transition, &c.observation, &c.reward}) {
          for (double v : g->mean) CHECK(std::isfinite(v));
          for (double v : g->log_std) {
            CHECK(v >= kMinLogStd);
            CHECK(v <= kMaxLogStd);
          }
        }
      }
    }
  }
  SUBCASE("shape mismatch") {
    const double s[3] = {0, 0, 0};
    CHECK_THROWS_AS(ssm::conditionals(m.generative(), s, Action::Left, s, Action::Left), ContractError);
  }
}

TEST_CASE("joint log probability") {
  Rng rng(5);
  ssm::DelipModel m(small_shape(), rng);
  const auto& gen = m.generative();
  const auto traj = toy_trajectory(4, 9);
  std::vector<std::vector<double>> path = {{0.1, -0.2}, {0.5, 0.0}, {1.0, 0.3}, {0.7, -1.0}};

  // term by term
  double expected = gaussian_log_pdf(path[0], gen.eval_prior());
  for (std::size_t t = 0; t < 4; ++t) {
    const auto c = ssm::conditionals(gen, t ? path[t - 1] : path[t], t ? traj.steps[t - 1].action : Action::Left,
                                     path[t], traj.steps[t].action);
    expected += gaussian_log_pdf(traj.steps[t].observation, c.observation);
    const double r = traj.steps[t].reward;
    expected += gaussian_log_pdf({&r, 1}, c.reward);
    if (t) expected += gaussian_log_pdf(path[t], c.transition);
  }
  CHECK(ssm::joint_log_prob(gen, traj, path) == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("T = 1 has no transition term") {
    env::Trajectory one;
    one.steps = {traj.steps[0]};
    const auto c = ssm::conditionals(gen, path[0], Action::Left, path[0], one.steps[0].action);
    const double r = one.steps[0].reward;
    const double want = gaussian_log_pdf(path[0], gen.eval_prior()) +
                        gaussian_log_pdf(one.steps[0].observation, c.observation) + gaussian_log_pdf({&r, 1}, c.reward);
    CHECK(ssm::joint_log_prob(gen, one, {path[0]}) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("moving o_1 toward the predicted mean never lowers the value") {
    env::Trajectory one;
    one.steps = {traj.steps[0]};
    const auto mu = gen.eval_observation(Tensor::row_vector(path[0])).row(0).mean;
    double prev = -1e300;
    for (double f = 0.0; f <= 1.0; f += 0.1) {
      for (int c = 0; c < 3; ++c) one.steps[0].observation[c] = (1 - f) * traj.steps[0].observation[c] + f * mu[c];
      const double v = ssm::joint_log_prob(gen, one, {path[0]});
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
  CHECK_THROWS_AS(ssm::joint_log_prob(gen, traj, {path[0]}), ContractError);
}

TEST_CASE("posterior encoding") {
  Rng rng(6);
  ssm::DelipModel m(ssm::ModelShape{}, rng);
  const auto traj = toy_trajectory(100, 10);
  const auto enc = ssm::posterior_encode(m, traj, rng);
  REQUIRE(enc.mixtures.size() == 100);
  REQUIRE(enc.states.size() == 100);
  for (const auto& mix : enc.mixtures) {
    REQUIRE(mix.weights.size() == 4);
    double s = 0.0;
    for (double w : mix.weights) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  double lq = 0.0;
  for (std::size_t t = 0; t < 100; ++t) lq += enc.mixtures[t].log_pdf(enc.states[t]);
  CHECK(enc.log_q == doctest::Approx(lq).epsilon(1e-9));
}

TEST_CASE("mixture log density") {
  GaussianParams g({0.3, -0.2}, {-0.5, 0.1});
  ssm::MixtureParams same{{0.25, 0.25, 0.25, 0.25}, {g, g, g, g}};
  const double x[2] = {0.1, 0.4};
  CHECK(same.log_pdf(x) == doctest::Approx(gaussian_log_pdf(x, g)).epsilon(1e-12));
  GaussianParams h({1.0, 1.0}, {0.0, 0.0});
  ssm::MixtureParams ab{{0.7, 0.1, 0.1, 0.1}, {g, h, h, h}};
  ssm::MixtureParams ba{{0.1, 0.1, 0.7, 0.1}, {h, h, g, h}};
  CHECK(ab.log_pdf(x) == doctest::Approx(ba.log_pdf(x)).epsilon(1e-12));
}

TEST_CASE("degenerate posterior mixture") {
  Rng init(16);
  ssm::DelipModel m(small_shape(), init);
  for (const char* n : {"post.head.means.w", "post.head.means.b", "post.head.log_stds.w", "post.head.logits.w",
                        "post.head.logits.b"}) {
    m.params().get(n).value.fill(0.0);
  }
  auto& ls = m.params().get("post.head.log_stds.b").value;
  for (std::size_t i = 0; i < ls.size(); ++i) ls[i] = i % 2 ? -0.3 : 0.2;
  Rng rng(3);
  const auto enc = ssm::posterior_encode(m, toy_trajectory(5, 2), rng);
  double single = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    for (double w : enc.mixtures[t].weights) CHECK(w == doctest::Approx(0.25));
    single += gaussian_log_pdf(enc.states[t], enc.mixtures[t].components[0]);
  }
  CHECK(enc.log_q == doctest::Approx(single).epsilon(1e-10));
}

TEST_CASE("elbo is a lower bound on an importance-sampled likelihood") {
  Rng init(17);
  ssm::DelipModel m(small_shape(1), init);
  const auto traj = toy_trajectory(3, 5);
  Rng rng(9);
  const auto w = ssm::importance_log_weights(m, traj, 100000, rng);
  const double n = static_cast<double>(w.size());
  const double mx = *std::max_element(w.begin(), w.end());
  double se = 0.0, mean = 0.0, ss = 0.0;
  for (double v : w) {
    const double e = std::exp(v - mx);
    se += e;
    ss += e * e;
  }
  const double log_p = mx + std::log(se / n);
  // delta-method standard error of log(mean of exp(w))
  const double m1 = se / n;
  const double var = ss / n - m1 * m1;
  const double log_se = std::sqrt(var / n) / m1;
  for (double v : w) mean += v;
  mean /= n;
  CHECK(mean <= log_p + 3.0 * log_se);
  Rng r2(10);
  CHECK(ssm::elbo_value(m, traj, 1000, r2) <= log_p + 3.0 * log_se + 0.05);
}

TEST_CASE("elbo gradient against finite differences with frozen draws") {
  Rng init(18);
  ssm::DelipModel m(small_shape(), init);
  const auto traj = toy_trajectory(5, 6);
  const auto batch = ssm::SequenceBatch::from(traj, 3);
  ssm::PosteriorDraws draws;
  m.params().zero_grad();
  {
    Graph g;
    Rng rng(1);
    ssm::ElboOptions opt;
    opt.record = &draws;
    g.backward(ssm::elbo(g, m, batch, rng, opt));
  }
  auto value = [&] {
    Graph g;
    Rng rng(1);
    ssm::ElboOptions opt;
    opt.replay = &draws;
    return ssm::elbo(g, m, batch, rng, opt).value().item();
  };
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (Parameter* p : m.params().all()) {
    const std::size_t stride = std::max<std::size_t>(1, p->value.size() / 7);
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = value();
      p->value[i] = orig - h;
      const double down = value();
      p->value[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - p->grad[i]) / std::max(1e-4, std::abs(fd) + std::abs(p->grad[i]));
      if (rel > worst) {
        worst = rel;
        INFO(p->name << "[" << i << "] fd=" << fd << " ad=" << p->grad[i]);
      }
      ++checked;
    }
  }
  CHECK(checked > 50);
  CHECK(worst <= 1e-3);
}

TEST_CASE("elbo with the posterior forced onto the generative model") {
  // One latent dimension, transition mean = s_prev, posterior components =
  // s_prev + 0 with the same forced sigma: log p(s) - log q(s) vanishes and
  // the ELBO is the expected observation + reward log-likelihood along
  // a transition-model random walk from N(0, sigma).
  Rng init(19);
  ssm::DelipModel m(small_shape(1), init);
  m.force_log_std(-3.0);
  for (Parameter* p : m.params().all()) {
    if (p->name.rfind("gen.trans.mean", 0) == 0 || p->name.rfind("gen.prior.mean", 0) == 0 ||
        p->name.rfind("post.head.means", 0) == 0) {
      p->value.fill(0.0);
    }
  }
  m.params().get("gen.trans.mean.w").value(0, 0) = 1.0;
  const auto traj = toy_trajectory(3, 8);
  const double sigma = std::exp(-3.0);
  const int n = 20000;
  Rng walk(4);
  double sum = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = sigma * walk.normal();
    double ll = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
      if (t) s += sigma * walk.normal();
      const auto c = ssm::conditionals(m.generative(), {&s, 1}, Action::Left, {&s, 1}, traj.steps[t].action);
      ll += gaussian_log_pdf(traj.steps[t].observation, c.observation);
      ll += gaussian_log_pdf({&traj.steps[t].reward, 1}, c.reward);
    }
    sum += ll;
    ss += ll * ll;
  }
  const double mean = sum / n;
  const double se = std::sqrt((ss / n - mean * mean) / n);
  Rng rng(1);
  const auto w = ssm::importance_log_weights(m, traj, n, rng);
  double e = 0.0, es = 0.0;
  for (double v : w) {
    e += v;
    es += v * v;
  }
  e /= n;
  const double se2 = std::sqrt((es / n - e * e) / n);
  CHECK(std::abs(e - mean) < 4.0 * std::hypot(se, se2));
}

TEST_CASE("query model") {
  Rng init(13);
  ssm::DelipModel m(ssm::ModelShape{}, init);
  const double s[2] = {0.3, -0.8};
  SUBCASE("degenerate noise returns the means") {
    m.force_log_std(-20.0);
    Rng rng(2);
    const auto q = ssm::query_model(m.generative(), s, Action::Right, rng);
    const auto c = ssm::conditionals(m.generative(), s, Action::Right, s, Action::Right);
    for (int d = 0; d < 2; ++d) CHECK(q.next_state[d] == doctest::Approx(c.transition.mean[d]).epsilon(1e-6));
    const auto o = m.generative().eval_observation(Tensor::row_vector(q.next_state)).row(0);
    for (int k = 0; k < 3; ++k) CHECK(q.observation[k] == doctest::Approx(o.mean[k]).epsilon(1e-6));
    CHECK(q.reward == doctest::Approx(c.reward.mean[0]).epsilon(1e-6));
  }
  SUBCASE("same rng state, same tuple") {
    Rng a(5), b(5);
    const auto qa = ssm::query_model(m.generative(), s, Action::Open, a);
    const auto qb = ssm::query_model(m.generative(), s, Action::Open, b);
    CHECK(qa.next_state == qb.next_state);
    CHECK(qa.observation == qb.observation);
    CHECK(qa.reward == qb.reward);
  }
  SUBCASE("monte carlo mean of the next state") {
    Rng rng(6);
    const auto c = ssm::conditionals(m.generative(), s, Action::Left, s, Action::Left);
    const int n = 10000;
    for (int d = 0; d < 2; ++d) {
      double sum = 0.0;
      Rng r = rng.split(static_cast<std::uint64_t>(d));
      for (int i = 0; i < n; ++i) sum += ssm::query_model(m.generative(), s, Action::Left, r, false).next_state[d];
      const double se = std::exp(c.transition.log_std[d]) / std::sqrt(static_cast<double>(n));
      CHECK(std::abs(sum / n - c.transition.mean[d]) < 4.0 * se);
    }
  }
}

TEST_CASE("checkpoint restores the model and its clamp override") {
  Rng init(14);
  ssm::DelipModel m(small_shape(), init);
  m.force_log_std(-1.5);
  const auto ckpt = ssm::save_model(m, {{"train.mode", "full"}});
  auto back = ssm::load_model(ckpt);
  REQUIRE(back->forced_log_std().has_value());
  CHECK(*back->forced_log_std() == -1.5);
  CHECK(back->shape().net_hidden == 8);
  CHECK(ssm::meta_value(ckpt, "train.mode") == "full");
  CHECK_THROWS_AS(ssm::meta_value(ckpt, "missing"), ContractError);
}

TEST_CASE("every emitted sigma lies in the clamp range") {
  Rng init(15);
  ssm::DelipModel m(ssm::ModelShape{}, init);
  Rng rng(2);
  auto data = trainer::collect(env::make_default_config(), 4, 20, rng);
  std::vector<const env::Trajectory*> ptrs;
  for (const auto& t : data.trajectories) ptrs.push_back(&t);
  const auto batch = ssm::SequenceBatch::from(ptrs, 3);
  for (double s : ssm::emitted_stddevs(m, batch)) {
    CHECK(s >= std::exp(kMinLogStd));
    CHECK(s <= std::exp(kMaxLogStd));
  }
  m.force_log_std(-1.5);
  for (double s : ssm::emitted_stddevs(m, batch)) CHECK(s == doctest::Approx(std::exp(-1.5)));
}
