// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "leap/kernels.hpp"
#include "leap/matrix.hpp"
#include "leap/rng.hpp"

namespace {

leap::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  leap::Rng rng(seed);
  leap::Matrix m(r, c);
  for (auto& v : m.flat()) v = rng.normal();
  return m;
}

template <void (*Kernel)(const leap::Matrix&, const leap::Matrix&, leap::Matrix&)>
void gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  leap::Matrix c(n, n);
  for (auto _ : state) {
    Kernel(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <void (*Kernel)(const leap::Matrix&, const leap::Matrix&, leap::Matrix&)>
void gemm_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
  leap::Matrix c(n, n);
  for (auto _ : state) {
    Kernel(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <void (*Kernel)(const leap::Matrix&, const leap::Matrix&, leap::Matrix&)>
void distances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = random_matrix(n, 64, 5), r = random_matrix(4 * n, 64, 6);
  leap::Matrix d(n, 4 * n);
  for (auto _ : state) {
    Kernel(q, r, d);
    benchmark::DoNotOptimize(d.data());
  }
}

}  // namespace

BENCHMARK(gemm_nn<leap::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm_nn<leap::kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->Arg(64)->Arg(256);
BENCHMARK(gemm_tn<leap::kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm_tn<leap::kernels::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(64)->Arg(256);
BENCHMARK(distances<leap::kernels::serial::sq_distances>)->Name("sq_distances/serial")->Arg(128);
BENCHMARK(distances<leap::kernels::omp::sq_distances>)->Name("sq_distances/omp")->Arg(128);

BENCHMARK_MAIN();
