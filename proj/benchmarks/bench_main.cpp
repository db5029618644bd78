#include "itergraph/engine.hpp"
#include "itergraph/graphreg.hpp"
#include "itergraph/metric.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace itergraph;

namespace {

Dataset synthetic(Index n, Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = 3;
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 3);
    ds.labels[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < dim; ++j) ds.features(i, j) = noise(rng) + (j % 3 == y ? 2.0 : 0.0);
  }
  for (Index i = 0; i < n; i += 10) ds.train.push_back(i);
  return ds;
}

RunConfig bench_config() {
  RunConfig c;
  c.heads = 4;
  c.epsilon = 0.6;
  c.knn = 10;
  return c;
}

// One training step's forward and backward pass.
void BM_ForwardBackward(benchmark::State& state) {
  const Index n = state.range(0);
  const Dataset ds = synthetic(n, 32, 1);
  const RunConfig c = bench_config();
  const GraphContext ctx = make_context(ds, c);
  ModelParams params = ModelParams::init(32, 3, c);
  for (auto _ : state) {
    Tape tape(7);
    const ForwardResult r = forward_pass(tape, ctx, params, c, true, ds.train);
    tape.backward(r.loss);
    benchmark::DoNotOptimize(r.loss.scalar());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_ForwardBackward)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond)->Complexity();

void BM_Inference(benchmark::State& state) {
  const Index n = state.range(0);
  const Dataset ds = synthetic(n, 32, 2);
  const RunConfig c = bench_config();
  const GraphContext ctx = make_context(ds, c);
  ModelParams params = ModelParams::init(32, 3, c);
  for (auto _ : state) {
    Tape tape(0);
    tape.set_grad_enabled(false);
    benchmark::DoNotOptimize(forward_pass(tape, ctx, params, c, false, ds.train).loss.scalar());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Inference)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond)->Complexity();

// Fused sparse cosine graph against the dense reference.
void BM_CosineGraph(benchmark::State& state) {
  const Index n = state.range(0);
  const bool sparse = state.range(1) != 0;
  const Dataset ds = synthetic(n, 32, 3);
  std::mt19937_64 rng(4);
  const MetricParams metric = make_metric_params("metric", 4, 32, 0.0, rng);
  for (auto _ : state) {
    Tape tape;
    tape.set_grad_enabled(false);
    const Var x = tape.constant(ds.features);
    const Var w = tape.constant(metric.weights.value);
    const Var a = sparse ? sparse_cosine_graph(x, w, 0.6) : epsilon_sparsify(multi_head_cosine(x, w), 0.6);
    benchmark::DoNotOptimize(a.rows());
  }
}
BENCHMARK(BM_CosineGraph)->ArgsProduct({{256, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_DirichletEnergy(benchmark::State& state) {
  const Index n = state.range(0);
  const Dataset ds = synthetic(n, 32, 5);
  const Matrix a = knn_graph(ds.features, 10);
  for (auto _ : state) {
    Tape tape;
    tape.set_grad_enabled(false);
    benchmark::DoNotOptimize(dirichlet_energy(tape.constant(a), tape.constant(ds.features)).scalar());
  }
}
BENCHMARK(BM_DirichletEnergy)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
