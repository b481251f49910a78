#include <benchmark/benchmark.h>

#include <cmath>
#include <map>
#include <random>

#include "edgelab/edge_metrics.hpp"
#include "edgelab/loss_models.hpp"
#include "edgelab/numerics.hpp"
#include "edgelab/quadrature.hpp"
#include "edgelab/trajectory.hpp"

using namespace edgelab;

namespace {

std::shared_ptr<const MlpModel> bench_mlp(Index width) {
  static std::map<Index, std::shared_ptr<const MlpModel>> cache;
  auto& m = cache[width];
  if (!m) {
    DatasetOptions o;
    o.target_scale = 0.3;
    m = make_mlp({10, width, width, 5}, Activation::Tanh, make_synthetic_dataset(7, 200, 10, 5, o));
  }
  return m;
}

Vector randn(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

void BM_MlpGradient(benchmark::State& state) {
  const auto m = bench_mlp(state.range(0));
  const Vector w = m->init_params(1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(m->gradient(w));
  state.counters["dim"] = static_cast<double>(m->dim());
}
BENCHMARK(BM_MlpGradient)->Arg(12)->Arg(32)->Arg(64);

void BM_MlpHvp(benchmark::State& state) {
  const auto m = bench_mlp(state.range(0));
  const Vector w = m->init_params(1, 1.0);
  const Vector v = randn(m->dim(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(m->hvp(w, v));
  state.counters["dim"] = static_cast<double>(m->dim());
}
BENCHMARK(BM_MlpHvp)->Arg(12)->Arg(32)->Arg(64);

void BM_LinearNetHvp(benchmark::State& state) {
  const Index n = state.range(0);
  Matrix M = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) M(i, i) = 1.0 + static_cast<double>(i);
  const auto m = make_two_layer_linear(M, n);
  const Vector w = randn(m->dim(), 3);
  const Vector v = randn(m->dim(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(m->hvp(w, v));
}
BENCHMARK(BM_LinearNetHvp)->Arg(5)->Arg(20);

void BM_GaussRule(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gauss_triangular(order));
}
BENCHMARK(BM_GaussRule)->Arg(4)->Arg(16)->Arg(64);

void BM_AdaptiveQuadrature(benchmark::State& state) {
  QuadratureOptions o;
  o.adaptive = true;
  o.rel_tol = 1e-12;
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_weighted([](double t) { return std::tanh(8.0 * (t - 0.3)); },
                                                Weight::Triangular, o));
  }
}
BENCHMARK(BM_AdaptiveQuadrature);

void BM_LanczosMlp(benchmark::State& state) {
  const auto m = bench_mlp(state.range(0));
  const Vector w = m->init_params(1, 1.0);
  LanczosOptions o;
  o.seed = 11;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lambda_max_iter([&](const Vector& v) { return m->hvp(w, v); }, m->dim(), o));
  }
}
BENCHMARK(BM_LanczosMlp)->Arg(12)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DenseEigh(benchmark::State& state) {
  const Index n = state.range(0);
  Matrix A = randn(n * n, 5).reshaped(n, n);
  const SymMatrix S((0.5 * (A + A.transpose())).eval());
  for (auto _ : state) benchmark::DoNotOptimize(dense_eigh(S));
}
BENCHMARK(BM_DenseEigh)->Arg(20)->Arg(100)->Arg(300);

void BM_GdSteps(benchmark::State& state) {
  const auto m = bench_mlp(12);
  const Vector w0 = m->init_params(11, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(run_gd(*m, w0, 0.05, state.range(0)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GdSteps)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Localize(benchmark::State& state) {
  const auto m = bench_mlp(12);
  const TrajectoryLog log = run_gd(*m, m->init_params(11, 0.5), 0.5, 10);
  LocalizeOptions o;
  o.compute_lambda = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(localize(*m, log, 5, o));
}
BENCHMARK(BM_Localize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EdgeBalanceReport(benchmark::State& state) {
  const auto m = make_scalar_poly(1.0, 0.0, -1.0);
  const TrajectoryLog log = run_gd(*m, Vector::Constant(1, 0.3), 2.2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(edge_balance_report(*m, log, CurvatureRoute::Quadrature));
}
BENCHMARK(BM_EdgeBalanceReport)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
