#include <benchmark/benchmark.h>

#include "twoway/evaluation.hpp"
#include "twoway/network.hpp"
#include "twoway/objective.hpp"
#include "twoway/trainer.hpp"

namespace {

using namespace twoway;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = rng_gaussian(rng, n, n, 0, 1);
  const Matrix b = rng_gaussian(rng, n, 128, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * 128));
}
BENCHMARK(BM_Matmul)->Arg(50)->Arg(392)->Unit(benchmark::kMicrosecond);

void BM_SymEig(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix g = rng_gaussian(rng, n, n, 0, 1);
  const Matrix a = g + transpose(g);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(a));
}
BENCHMARK(BM_SymEig)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

TwoWayModel mnist_model() {
  ModelConfig c;
  c.dims = {392, 392, 50, 392};
  Rng rng(3);
  return TwoWayModel::create(c, rng);
}

// Train-mode forward pass of both channels on one 128-sample batch.
void BM_ForwardPair(benchmark::State& state) {
  TwoWayModel m = mnist_model();
  Rng rng(4);
  const Matrix x = rng_gaussian(rng, 392, 128, 0, 1);
  const Matrix y = rng_gaussian(rng, 392, 128, 0, 1);
  ForwardOptions o;
  o.mode = Mode::kTrain;
  o.rng = &rng;
  for (auto _ : state) benchmark::DoNotOptimize(forward_pair(m, x, y, o));
}
BENCHMARK(BM_ForwardPair)->Unit(benchmark::kMicrosecond);

// Forward, loss, backward and momentum update for one batch.
void BM_TrainStep(benchmark::State& state) {
  TwoWayModel m = mnist_model();
  Rng rng(5);
  const Matrix x = rng_gaussian(rng, 392, 128, 0, 1);
  const Matrix y = rng_gaussian(rng, 392, 128, 0, 1);
  ModelGradients grads = ModelGradients::zeros_like(m);
  ModelGradients velocity = ModelGradients::zeros_like(m);
  ForwardOptions o;
  o.mode = Mode::kTrain;
  o.rng = &rng;
  for (auto _ : state) {
    grads = ModelGradients::zeros_like(m);
    const PairOutput out = forward_pair(m, x, y, o);
    total_loss_and_grads(m, out, {}, grads);
    sgd_momentum_step(m, grads, velocity, 1e-4, 0.9);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMicrosecond);

void BM_CcaFit(benchmark::State& state) {
  Rng rng(6);
  const Matrix x = rng_gaussian(rng, 50, 10000, 0, 1);
  const Matrix y = x + rng_gaussian(rng, 50, 10000, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cca_fit(x, y, 50, 1e-4));
}
BENCHMARK(BM_CcaFit)->Unit(benchmark::kMillisecond);

void BM_RecallAtK(benchmark::State& state) {
  Rng rng(7);
  const Matrix q = rng_gaussian(rng, 50, 1000, 0, 1);
  const Matrix g = rng_gaussian(rng, 50, 1000, 0, 1);
  std::vector<std::vector<std::size_t>> truth(1000);
  for (std::size_t i = 0; i < 1000; ++i) truth[i] = {i};
  for (auto _ : state) benchmark::DoNotOptimize(recall_at_k(q, g, truth, 5));
}
BENCHMARK(BM_RecallAtK)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
