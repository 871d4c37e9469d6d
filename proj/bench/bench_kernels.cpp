#include <benchmark/benchmark.h>

#include "natgrad/kernels.hpp"

using namespace natgrad;

namespace {

Policy bench_policy(int features) {
  Rng rng(7);
  auto f = RbfFeaturizer::sample(3, features, 1.0, rng);
  Policy p = Policy::rbf(3, 1, std::move(f));
  for (auto& w : p.weights().data()) w = 0.1 * rng.normal();
  return p;
}

const std::vector<Trajectory>& bench_batch() {
  static const auto batch = [] {
    const Policy p = bench_policy(100);
    return kernels::collect_rollouts_serial(p, make_env_spec(EnvId::pendulum), 40, Rng(1), ActionMode::stochastic);
  }();
  return batch;
}

void BM_FvpSerial(benchmark::State& state) {
  const Policy p = bench_policy(100);
  const auto scores = kernels::compute_scores_serial(p, bench_batch());
  Vec v(scores.params(), 1.0), out(scores.params());
  for (auto _ : state) {
    kernels::fisher_vector_product_serial(scores, v, 1e-4, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_FvpParallel(benchmark::State& state) {
  const Policy p = bench_policy(100);
  const auto scores = kernels::compute_scores(p, bench_batch());
  Vec v(scores.params(), 1.0), out(scores.params());
  for (auto _ : state) {
    kernels::fisher_vector_product(scores, v, 1e-4, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ScoresSerial(benchmark::State& state) {
  const Policy p = bench_policy(100);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::compute_scores_serial(p, bench_batch()));
}

void BM_ScoresParallel(benchmark::State& state) {
  const Policy p = bench_policy(100);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::compute_scores(p, bench_batch()));
}

void BM_RolloutsSerial(benchmark::State& state) {
  const Policy p = bench_policy(100);
  const EnvSpec spec = make_env_spec(EnvId::pendulum);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::collect_rollouts_serial(p, spec, 40, Rng(2), ActionMode::stochastic));
  }
}

void BM_RolloutsParallel(benchmark::State& state) {
  const Policy p = bench_policy(100);
  const EnvSpec spec = make_env_spec(EnvId::pendulum);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::collect_rollouts(p, spec, 40, Rng(2), ActionMode::stochastic));
  }
}

std::vector<Vec> bench_points() {
  Rng rng(3);
  std::vector<Vec> pts(2000, Vec(5));
  for (auto& p : pts)
    for (auto& x : p) x = rng.normal();
  return pts;
}

void BM_PairwiseSerial(benchmark::State& state) {
  const auto pts = bench_points();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::mean_pairwise_distance_serial(pts));
}

void BM_PairwiseParallel(benchmark::State& state) {
  const auto pts = bench_points();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::mean_pairwise_distance(pts));
}

}  // namespace

BENCHMARK(BM_FvpSerial);
BENCHMARK(BM_FvpParallel);
BENCHMARK(BM_ScoresSerial);
BENCHMARK(BM_ScoresParallel);
BENCHMARK(BM_RolloutsSerial);
BENCHMARK(BM_RolloutsParallel);
BENCHMARK(BM_PairwiseSerial);
BENCHMARK(BM_PairwiseParallel);

BENCHMARK_MAIN();
