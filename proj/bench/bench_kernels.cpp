// Serial reference kernels against the OpenMP ones, over a few layer shapes.
//   sgmlab_bench --benchmark_filter=nt

#include <benchmark/benchmark.h>

#include <random>

#include "sgmlab/kernels.hpp"
#include "sgmlab/tensor.hpp"

using namespace sgmlab;

namespace {

Tensor2<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Tensor2<float> t(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) t.data()[i] = nd(rng);
  return t;
}

// Batch x in times out x in: the forward product of a linear layer.
template <void (*Kernel)(const Tensor2<float>&, const Tensor2<float>&, Tensor2<float>&)>
void forward_nt(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto in = std::size_t(state.range(1));
  const auto out = std::size_t(state.range(2));
  if (state.range(3) > 0) kernels::set_max_threads(int(state.range(3)));
  const auto x = random_matrix(n, in, 1);
  const auto w = random_matrix(out, in, 2);
  Tensor2<float> y(n, out);
  for (auto _ : state) {
    Kernel(x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(n * in * out));
}

// Weight gradient: grad_out^T times input.
template <void (*Kernel)(const Tensor2<float>&, const Tensor2<float>&, Tensor2<float>&)>
void weight_grad_tn(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto in = std::size_t(state.range(1));
  const auto out = std::size_t(state.range(2));
  if (state.range(3) > 0) kernels::set_max_threads(int(state.range(3)));
  const auto g = random_matrix(n, out, 3);
  const auto x = random_matrix(n, in, 4);
  Tensor2<float> dw(out, in);
  for (auto _ : state) {
    Kernel(g, x, dw);
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(n * in * out));
}

void shapes(benchmark::internal::Benchmark* b, bool threaded) {
  for (auto [n, in, out] : {std::tuple{64, 32, 64}, {64, 64, 64}, {256, 256, 256}, {512, 784, 512}}) {
    if (threaded) {
      for (int t : {1, 2, 4}) b->Args({n, in, out, t});
    } else {
      b->Args({n, in, out, 0});
    }
  }
  b->ArgNames({"batch", "in", "out", "threads"});
}

}  // namespace

BENCHMARK(forward_nt<kernels::serial::matmul_nt<float>>)
    ->Apply([](auto* b) { shapes(b, false); })
    ->Name("nt/serial");
BENCHMARK(forward_nt<kernels::parallel::matmul_nt<float>>)
    ->Apply([](auto* b) { shapes(b, true); })
    ->Name("nt/parallel")
    ->UseRealTime();
BENCHMARK(weight_grad_tn<kernels::serial::matmul_tn<float>>)
    ->Apply([](auto* b) { shapes(b, false); })
    ->Name("tn/serial");
BENCHMARK(weight_grad_tn<kernels::parallel::matmul_tn<float>>)
    ->Apply([](auto* b) { shapes(b, true); })
    ->Name("tn/parallel")
    ->UseRealTime();

BENCHMARK_MAIN();
