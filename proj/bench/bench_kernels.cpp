// Serial reference kernels against their OpenMP versions at the shapes the
// image encoder uses for a batch of 64.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "smil/kernels.hpp"

namespace k = smil::kernels;

namespace {

std::vector<double> random_vec(std::size_t n) {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// first image conv: 64 x 1 x 32 x 32, 6 filters of 5x5
const k::ConvGeometry kConv1{.batch = 64, .in_channels = 1, .height = 32, .width = 32, .out_channels = 6, .kernel = 5};
// second: 64 x 6 x 14 x 14, 16 filters
const k::ConvGeometry kConv2{.batch = 64, .in_channels = 6, .height = 14, .width = 14, .out_channels = 16, .kernel = 5};

const k::ConvGeometry& geometry(int i) { return i == 0 ? kConv1 : kConv2; }

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const std::size_t m = 64, kk = static_cast<std::size_t>(state.range(0)), n = 120;
  const auto a = random_vec(m * kk), b = random_vec(kk * n);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::matmul(a, b, c, m, kk, n);
    else k::serial::matmul(a, b, c, m, kk, n);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto& g = geometry(static_cast<int>(state.range(0)));
  const auto x = random_vec(g.batch * g.in_channels * g.height * g.width);
  const auto w = random_vec(g.out_channels * g.patch()), bias = random_vec(g.out_channels);
  std::vector<double> cols(g.batch * g.patch() * g.out_pixels()), y(g.batch * g.out_channels * g.out_pixels());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::im2col(x, cols, g);
      k::parallel::conv2d_forward(cols, w, bias, y, g);
    } else {
      k::serial::im2col(x, cols, g);
      k::serial::conv2d_forward(cols, w, bias, y, g);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto& g = geometry(static_cast<int>(state.range(0)));
  const auto x = random_vec(g.batch * g.in_channels * g.height * g.width);
  const auto w = random_vec(g.out_channels * g.patch());
  std::vector<double> cols(g.batch * g.patch() * g.out_pixels());
  k::serial::im2col(x, cols, g);
  const auto dy = random_vec(g.batch * g.out_channels * g.out_pixels());
  std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_backward(cols, w, dy, dx, dw, db, g);
    else k::serial::conv2d_backward(cols, w, dy, dx, dw, db, g);
    benchmark::DoNotOptimize(dw.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(256)->Arg(400);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(256)->Arg(400);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(0)->Arg(1);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(0)->Arg(1);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
