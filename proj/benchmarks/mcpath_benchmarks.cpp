#include <benchmark/benchmark.h>

#include "mcpath/pathbuild.hpp"

using namespace mcpath;

namespace {

NetworkArch bench_arch(int width) {
  NetworkArch a;
  a.widths = {32, width, width, 10};
  return a;
}

Dataset bench_data(int n) {
  Rng rng(1);
  Dataset d;
  d.inputs.resize(n, 32);
  for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = rng.normal();
  d.targets = Matrix::Zero(n, 10);
  for (int i = 0; i < n; ++i) d.targets(i, i % 10) = 1.0;
  return d;
}

void BM_Forward(benchmark::State& state) {
  const auto arch = bench_arch(static_cast<int>(state.range(0)));
  const Params p = init_params(arch, 1);
  const Dataset d = bench_data(1000);
  for (auto _ : state) benchmark::DoNotOptimize(average_loss(arch, p, d));
  state.SetItemsProcessed(state.iterations() * d.size());
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256);

void BM_Gradient(benchmark::State& state) {
  const auto arch = bench_arch(static_cast<int>(state.range(0)));
  const Params p = init_params(arch, 1);
  const Dataset d = bench_data(100);
  for (auto _ : state) benchmark::DoNotOptimize(gradient(arch, p, d));
  state.SetItemsProcessed(state.iterations() * d.size());
}
BENCHMARK(BM_Gradient)->Arg(64)->Arg(256);

void BM_SwapPath(benchmark::State& state) {
  const auto arch = bench_arch(256);
  Params p = init_params(arch, 1);
  p.W(1).col(0).setZero();
  p.b(1)(0) = 0.0;
  p.W(2).row(0).setZero();
  for (auto _ : state) benchmark::DoNotOptimize(swap_neurons_path(arch, p, 1, 0, 1));
}
BENCHMARK(BM_SwapPath);

void BM_EvalPath(benchmark::State& state) {
  const auto arch = bench_arch(64);
  PWLPath path = PWLPath::starting_at(arch, init_params(arch, 1));
  for (int s = 0; s < 10; ++s) path.push(init_params(arch, 2 + static_cast<std::uint64_t>(s)), {SegmentKind::OutputInterp});
  const Dataset d = bench_data(500);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_path(path, d, 20, static_cast<int>(state.range(0))).max_loss);
  }
}
BENCHMARK(BM_EvalPath)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
