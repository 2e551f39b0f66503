// Parallel kernels against the serial reference. Run with
// OMP_NUM_THREADS set to the core count to see the speedup.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "emocolor/kernels.hpp"
#include "emocolor/random.hpp"
#include "emocolor/synthetic.hpp"
#include "emocolor/transform.hpp"

using namespace emocolor;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& x : m.values()) x = rng.normal();
  return m;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_floats(n * n, 1), b = random_floats(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm<float>(a, b, c, n, n, n);
    } else {
      kernels::reference::gemm<float>(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

template <bool Parallel>
void BM_gemm_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_floats(n * n, 3), b = random_floats(n * n, 4);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm_tn<float>(a, b, c, n, n, n);
    } else {
      kernels::reference::gemm_tn<float>(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

template <bool Parallel>
void BM_conv2d(benchmark::State& state) {
  kernels::Conv2dShape s;
  s.in_channels = 64;
  s.out_channels = 64;
  s.in_height = s.in_width = static_cast<std::size_t>(state.range(0));
  s.kernel_h = s.kernel_w = 3;
  s.pad_top = s.pad_left = s.pad_bottom = s.pad_right = 1;
  const auto in = random_floats(s.in_channels * s.in_height * s.in_width, 5);
  const auto w = random_floats(s.out_channels * s.in_channels * 9, 6);
  const auto bias = random_floats(s.out_channels, 7);
  std::vector<float> out(s.out_channels * s.out_height() * s.out_width());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d(in, w, bias, out, s);
    } else {
      kernels::reference::conv2d(in, w, bias, out, s);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_cosine_matrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 4096, 8), b = random_matrix(5, 4096, 9);
  for (auto _ : state) {
    Matrix m = Parallel ? kernels::cosine_matrix(a, b) : kernels::reference::cosine_matrix(a, b);
    benchmark::DoNotOptimize(m.values().data());
  }
}

template <bool Parallel>
void BM_transform_gradient(benchmark::State& state) {
  synthetic::PlantedConfig pc;
  pc.d = static_cast<std::size_t>(state.range(0));
  pc.k_star = 8;
  const auto task = synthetic::make_planted_task(pc);
  const auto w = LinearTransform::initialize(pc.d, 75, 1).weights;
  std::vector<std::size_t> batch(task.data.pairs.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const auto backend = Parallel ? Backend::kParallel : Backend::kReference;
  for (auto _ : state) {
    auto g = gradient(w, task.data, batch, backend);
    benchmark::DoNotOptimize(g.loss);
  }
}

}  // namespace

BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<false>)->Name("gemm/reference")->Arg(128)->Arg(256);
BENCHMARK(BM_gemm_tn<true>)->Name("gemm_tn/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_gemm_tn<false>)->Name("gemm_tn/reference")->Arg(128)->Arg(256);
BENCHMARK(BM_conv2d<true>)->Name("conv2d/parallel")->Arg(28)->Arg(56);
BENCHMARK(BM_conv2d<false>)->Name("conv2d/reference")->Arg(28)->Arg(56);
BENCHMARK(BM_cosine_matrix<true>)->Name("cosine_matrix/parallel")->Arg(250);
BENCHMARK(BM_cosine_matrix<false>)->Name("cosine_matrix/reference")->Arg(250);
BENCHMARK(BM_transform_gradient<true>)->Name("transform_gradient/parallel")->Arg(512)->Arg(4096);
BENCHMARK(BM_transform_gradient<false>)->Name("transform_gradient/reference")->Arg(512)->Arg(4096);

BENCHMARK_MAIN();
