#include <doctest.h>

#include <cmath>
#include <numbers>

#include "delip/numerics/adam.hpp"
#include "delip/numerics/autodiff.hpp"
#include "delip/numerics/checkpoint.hpp"
#include "delip/numerics/gaussian.hpp"
#include "delip/numerics/kernels.hpp"
#include "delip/numerics/layers.hpp"

using namespace delip;

namespace {

GaussianParams g1(double m, double s) { return GaussianParams({m}, {std::log(s)}); }

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("gaussian log density matches closed form") {
  const double x0 = 0.0;
  const double x1 = 1.0;
  // -0.5 ln(2 pi) and -0.5 ln(2 pi) - 0.5
  const double c = -0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(gaussian_log_pdf({&x0, 1}, g1(0, 1)) == doctest::Approx(c).epsilon(1e-12));
  CHECK(gaussian_log_pdf({&x0, 1}, g1(0, 1)) == doctest::Approx(-0.9189385).epsilon(1e-7));
  CHECK(gaussian_log_pdf({&x1, 1}, g1(0, 1)) == doctest::Approx(-1.4189385).epsilon(1e-7));
  // mode at the mean
  for (double x : {-0.5, 0.3, 2.0}) {
    const double at_mean = 1.7;
    CHECK(gaussian_log_pdf({&x, 1}, g1(1.7, 0.4)) < gaussian_log_pdf({&at_mean, 1}, g1(1.7, 0.4)));
  }
}

TEST_CASE("kl between diagonal gaussians") {
  CHECK(kl_gaussian(g1(0.3, 0.7), g1(0.3, 0.7)) == doctest::Approx(0.0));
  CHECK(kl_gaussian(g1(0, 1), g1(1, 1)) == doctest::Approx(0.5).epsilon(1e-9));
  // ln(1/2) + (4 + 0)/2 - 1/2
  CHECK(kl_gaussian(g1(0, 2), g1(0, 1)) == doctest::Approx(std::log(0.5) + 1.5).epsilon(1e-12));
  CHECK(kl_gaussian(g1(0, 2), g1(0, 1)) == doctest::Approx(0.8068528).epsilon(1e-7));
}

TEST_CASE("reparameterized sampling") {
  Rng rng(3);
  SUBCASE("degenerate sigma returns the mean") {
    GaussianParams p({1.25, -3.0}, {-20.0, -20.0});
    const auto s = sample_reparam(p, rng);
    CHECK(s[0] == doctest::Approx(1.25).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(-3.0).epsilon(1e-6));
  }
  SUBCASE("same rng state, same draw") {
    Rng a(99), b(99);
    CHECK(sample_reparam(g1(0, 1), a) == sample_reparam(g1(0, 1), b));
  }
  SUBCASE("moments of 1e5 draws") {
    double m = 0.0, ss = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double v = sample_reparam(g1(0, 1), rng)[0];
      m += v;
      ss += v * v;
    }
    m /= n;
    const double sd = std::sqrt(ss / n - m * m);
    CHECK(std::abs(m) < 0.02);
    CHECK(sd >= 0.99);
    CHECK(sd <= 1.01);
  }
}

TEST_CASE("rng split streams depend only on the seed") {
  Rng a(5);
  Rng child_before = a.split(7);
  for (int i = 0; i < 10; ++i) a.uniform();
  Rng child_after = a.split(7);
  CHECK(child_before.uniform() == child_after.uniform());
  CHECK(Rng(5).split(1).uniform() != Rng(5).split(2).uniform());
}

TEST_CASE("autodiff basics") {
  ParameterStore store;
  Parameter& w = store.add("w", 1, 1);
  SUBCASE("square") {
    w.value[0] = 3.0;
    Graph g;
    Var x = g.parameter(w);
    Var y = ad::mul(x, x);
    CHECK(y.value().item() == 9.0);
    store.zero_grad();
    g.backward(y);
    CHECK(w.grad[0] == doctest::Approx(6.0));
  }
  SUBCASE("relu gate") {
    Parameter& v = store.add("v", 1, 2);
    v.value[0] = -1.0;
    v.value[1] = 2.0;
    Graph g;
    Var y = ad::sum(ad::relu(g.parameter(v)));
    CHECK(y.value().item() == 2.0);
    store.zero_grad();
    g.backward(y);
    CHECK(v.grad[0] == 0.0);
    CHECK(v.grad[1] == 1.0);
  }
}

TEST_CASE("two-layer network gradient against central differences") {
  Rng rng(21);
  ParameterStore store;
  Mlp net(store, "net", {4, 6, 3});
  net.init_fan_in(rng);
  const Tensor x = random_tensor(5, 4, rng);
  auto loss = [&](Graph& g) { return ad::sum(ad::tanh(net.forward(g, g.constant(x)))); };
  store.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  const double h = 1e-3;
  double worst = 0.0;
  for (Parameter* p : store.all()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      Graph gp;
      const double up = loss(gp).value().item();
      p->value[i] = orig - h;
      Graph gm;
      const double down = loss(gm).value().item();
      p->value[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - p->grad[i]) / std::max(1e-6, std::abs(fd) + std::abs(p->grad[i]));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("adam") {
  ParameterStore store;
  Parameter& w = store.add("w", 1, 1);
  SUBCASE("zero gradient is a fixed point") {
    w.value[0] = 0.7;
    auto st = make_adam_state(store, {});
    store.zero_grad();
    adam_step(store, st);
    CHECK(w.value[0] == 0.7);
    CHECK(st.step_count == 1);
  }
  SUBCASE("first step moves by about lr against the gradient sign") {
    auto st = make_adam_state(store, {1e-3, 0.9, 0.999, 1e-8});
    w.grad[0] = 0.3;
    adam_step(store, st);
    CHECK(w.value[0] == doctest::Approx(-1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
  }
  SUBCASE("quadratic converges") {
    auto st = make_adam_state(store, {0.05, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 500; ++i) {
      w.grad[0] = 2.0 * (w.value[0] - 2.0);
      adam_step(store, st);
    }
    CHECK(std::abs(w.value[0] - 2.0) < 0.05);
  }
  SUBCASE("frozen parameters are untouched") {
    w.value[0] = 1.5;
    w.frozen = true;
    auto st = make_adam_state(store, {});
    w.grad[0] = 1.0;
    adam_step(store, st);
    CHECK(w.value[0] == 1.5);
  }
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(8);
  // Big enough to cross the parallel threshold.
  const Tensor a = random_tensor(700, 100, rng);
  const Tensor b = random_tensor(100, 120, rng);
  const Tensor bt = random_tensor(120, 100, rng);
  const Tensor d = random_tensor(700, 120, rng);

  Tensor c1, c2;
  kernels::serial::matmul(a, b, c1);
  kernels::parallel::matmul(a, b, c2);
  REQUIRE(c1.same_shape(c2));
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));

  Tensor n1(700, 120, 1.0), n2(700, 120, 1.0);
  kernels::serial::matmul_nt_acc(a, bt, n1);
  kernels::parallel::matmul_nt_acc(a, bt, n2);
  for (std::size_t i = 0; i < n1.size(); ++i) CHECK(n1[i] == doctest::Approx(n2[i]).epsilon(1e-12));

  Tensor t1(100, 120), t2(100, 120);
  kernels::serial::matmul_tn_acc(a, d, t1);
  kernels::parallel::matmul_tn_acc(a, d, t2);
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == doctest::Approx(t2[i]).epsilon(1e-12));

  // Against a naive triple loop.
  double worst = 0.0;
  for (std::size_t i = 0; i < 700; i += 37) {
    for (std::size_t j = 0; j < 120; j += 11) {
      double s = 0.0;
      for (std::size_t k = 0; k < 100; ++k) s += a(i, k) * b(k, j);
      worst = std::max(worst, std::abs(s - c1(i, j)));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("checkpoint round trip is byte stable") {
  Rng rng(1);
  ParameterStore store;
  Mlp net(store, "net", {3, 4, 2});
  net.init_fan_in(rng);
  const auto ckpt = capture(store, {{"b", "2"}, {"a", "1"}});
  const auto bytes = encode_checkpoint(ckpt);
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.meta.at("a") == "1");

  ParameterStore other;
  Mlp net2(other, "net", {3, 4, 2});
  restore(other, back);
  for (std::size_t i = 0; i < store.get("net.l0.w").value.size(); ++i) {
    CHECK(other.get("net.l0.w").value[i] == static_cast<double>(static_cast<float>(store.get("net.l0.w").value[i])));
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS(decode_checkpoint(truncated));
}
