#include <benchmark/benchmark.h>

#include "delip/numerics/kernels.hpp"
#include "delip/numerics/rng.hpp"

using namespace delip;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Shapes from training: a batch of 100 trajectories through a 100-unit layer,
// and the same batch tiled 10x for multi-sample objectives.
template <void (*Mm)(const Tensor&, const Tensor&, Tensor&, bool)>
void BM_matmul(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(rows, 100, 1);
  const Tensor b = random_tensor(100, 100, 2);
  Tensor c;
  for (auto _ : state) {
    Mm(a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows) * 100 * 100);
}

template <void (*Mm)(const Tensor&, const Tensor&, Tensor&)>
void BM_matmul_tn(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(rows, 100, 3);
  const Tensor d = random_tensor(rows, 100, 4);
  Tensor g(100, 100);
  for (auto _ : state) {
    Mm(a, d, g);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows) * 100 * 100);
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(100)->Arg(1000)->Arg(10000);
BENCHMARK(BM_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(100)->Arg(1000)->Arg(10000);
BENCHMARK(BM_matmul_tn<kernels::serial::matmul_tn_acc>)->Name("matmul_tn/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_matmul_tn<kernels::parallel::matmul_tn_acc>)->Name("matmul_tn/parallel")->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
