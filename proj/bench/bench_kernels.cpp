// Parallel (im2col + GEMM, separable, OpenMP) kernels against their serial
// reference versions.
//
//   ./build/bench/bench_kernels --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include "mrsr/kernels.hpp"
#include "mrsr/metrics.hpp"
#include "mrsr/resample.hpp"
#include "mrsr/rng.hpp"

using namespace mrsr;

namespace {

Tensor<float> random_tensor(Shape4 s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(s);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

ImageD random_image(int n, std::uint64_t seed) {
  Rng rng(seed);
  ImageD img(n, n);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

// Args: channels, spatial extent.
template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const ConvGeometry g{c, c, 3, 1, 1};
  const auto x = random_tensor({1, c, n, n}, 1);
  const auto w = random_tensor(g.weight_shape(), 2);
  for (auto _ : state) {
    auto y = Parallel ? kernels::parallel::conv2d_forward(x, w, static_cast<const float*>(nullptr), g)
                      : kernels::reference::conv2d_forward(x, w, static_cast<const float*>(nullptr), g);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * 9 * n * n);
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const ConvGeometry g{c, c, 3, 1, 1};
  const auto x = random_tensor({1, c, n, n}, 1);
  const auto gy = random_tensor({1, c, n, n}, 3);
  Tensor<float> gw(g.weight_shape());
  for (auto _ : state) {
    if (Parallel) {
      kernels::parallel::conv2d_backward_weight(x, gy, g, gw, static_cast<float*>(nullptr));
    } else {
      kernels::reference::conv2d_backward_weight(x, gy, g, gw, static_cast<float*>(nullptr));
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Resample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Image src(n, n);
  Rng rng(4);
  for (float& v : src.values()) v = static_cast<float>(rng.uniform());
  const auto rows = upsample_taps(n, 4, UpscaleMethod::kBicubic);
  const auto cols = upsample_taps(n, 4, UpscaleMethod::kBicubic);
  for (auto _ : state) {
    auto out = Parallel ? resample::parallel::apply(src, rows, cols) : resample::reference::apply(src, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ValidFilter(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageD src = random_image(n, 5);
  const auto k = metrics::gaussian_kernel(11, 1.5);
  for (auto _ : state) {
    auto out = Parallel ? metrics::parallel::valid_filter(src, k) : metrics::reference::valid_filter(src, k);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("ConvForward/parallel")->Args({8, 64})->Args({64, 64});
BENCHMARK(BM_ConvForward<false>)->Name("ConvForward/reference")->Args({8, 64})->Args({64, 64});
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("ConvBackwardWeight/parallel")->Args({32, 64});
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("ConvBackwardWeight/reference")->Args({32, 64});
BENCHMARK(BM_Resample<true>)->Name("Upscale4/parallel")->Arg(64);
BENCHMARK(BM_Resample<false>)->Name("Upscale4/reference")->Arg(64);
BENCHMARK(BM_ValidFilter<true>)->Name("GaussianFilter/parallel")->Arg(256);
BENCHMARK(BM_ValidFilter<false>)->Name("GaussianFilter/reference")->Arg(256);

BENCHMARK_MAIN();
