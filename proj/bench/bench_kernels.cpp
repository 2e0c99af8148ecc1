// Serial vs OpenMP kernels on square and batch-shaped problems.

#include <vector>

#include <benchmark/benchmark.h>

#include "mdl/kernels.hpp"
#include "mdl/rng.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    mdl::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

template <auto Kernel>
void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Kernel(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void BM_MatmulAtB(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t k = 64, n = 64;
    const auto a = random_vec(m * k, 3), g = random_vec(m * n, 4);
    std::vector<double> c(k * n);
    for (auto _ : state) {
        Kernel(a, g, c, m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
}

template <auto Kernel>
void BM_Softmax(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t n = 16;
    const auto x = random_vec(m * n, 5);
    std::vector<double> y(m * n);
    for (auto _ : state) {
        Kernel(x, y, m, n);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_Matmul<mdl::kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<mdl::kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulAtB<mdl::kernels::serial::matmul_at_b_acc>)->Name("matmul_at_b/serial")->Arg(1024)->Arg(8192);
BENCHMARK(BM_MatmulAtB<mdl::kernels::parallel::matmul_at_b_acc>)->Name("matmul_at_b/parallel")->Arg(1024)->Arg(8192);
BENCHMARK(BM_Softmax<mdl::kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Softmax<mdl::kernels::parallel::softmax_rows>)->Name("softmax/parallel")->Arg(4096)->Arg(65536);

BENCHMARK_MAIN();
