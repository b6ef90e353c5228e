// Parallel kernels against the serial reference loops, on batches shaped
// like the desk-scale training runs (batch 8, 32x32, 8-16 channels).
#include <omp.h>

#include <benchmark/benchmark.h>

#include <random>

#include "otcg/fft.hpp"
#include "otcg/forward_physics.hpp"
#include "otcg/kernels.hpp"

using namespace otcg;

namespace {

Tensor random(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Tensor t(s);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

struct ConvCase {
  Tensor x, w, gy;
  kernels::ConvGeometry g{1, 1};
};

ConvCase conv_case(const benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  ConvCase k;
  k.x = random({8, c, 32, 32}, 1);
  k.w = random({c, c, 3, 3}, 2);
  k.gy = random({8, c, 32, 32}, 3);
  return k;
}

void set_threads(const benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(1))); }

void BM_conv2d(benchmark::State& state) {
  set_threads(state);
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(k.x, k.w, k.g));
}

void BM_conv2d_ref(benchmark::State& state) {
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ref::conv2d(k.x, k.w, k.g));
}

void BM_conv2d_input_grad(benchmark::State& state) {
  set_threads(state);
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_input_grad(k.gy, k.w, k.g, 32, 32));
}

void BM_conv2d_input_grad_ref(benchmark::State& state) {
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ref::conv2d_input_grad(k.gy, k.w, k.g, 32, 32));
}

void BM_conv2d_weight_grad(benchmark::State& state) {
  set_threads(state);
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_weight_grad(k.x, k.gy, k.g, 3, 3));
}

void BM_conv2d_weight_grad_ref(benchmark::State& state) {
  const auto k = conv_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ref::conv2d_weight_grad(k.x, k.gy, k.g, 3, 3));
}

void BM_avg_pool2(benchmark::State& state) {
  set_threads(state);
  const Tensor x = random({8, static_cast<int>(state.range(0)), 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::avg_pool2(x));
}

void BM_avg_pool2_ref(benchmark::State& state) {
  const Tensor x = random({8, static_cast<int>(state.range(0)), 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ref::avg_pool2(x));
}

void BM_fourier_projector(benchmark::State& state) {
  set_threads(state);
  const auto op = physics::KnownLinearOperator::fourier_subsample(physics::make_mask({2, 0.125, {}}, 32, 32, 0));
  const Tensor x = random({8, 2, 32, 32}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(op.apply(x));
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (int c : {8, 16})
    for (int t : {1, 2, 4}) b->Args({c, t});
}

void ref_args(benchmark::internal::Benchmark* b) {
  for (int c : {8, 16}) b->Args({c, 1});
}

}  // namespace

BENCHMARK(BM_conv2d)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_ref)->Apply(ref_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_input_grad)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_input_grad_ref)->Apply(ref_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_weight_grad)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_weight_grad_ref)->Apply(ref_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_avg_pool2)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_avg_pool2_ref)->Apply(ref_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fourier_projector)->Args({0, 1})->Args({0, 4})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
