#include <benchmark/benchmark.h>

#include <vector>

#include "hbg/graphkit.hpp"
#include "hbg/kernels.hpp"
#include "hbg/rng.hpp"
#include "hbg/policy_net.hpp"
#include "hbg/sampler.hpp"

using namespace hbg;

namespace {

std::vector<double> random_matrix(int rows, int cols, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> m(static_cast<std::size_t>(rows) * cols);
    for (double& v : m) v = r.uniform() - 0.5;
    return m;
}

void BM_matmul_serial(benchmark::State& s) {
    const int n = static_cast<int>(s.range(0));
    const auto a = random_matrix(n, 64, 1), b = random_matrix(64, 64, 2);
    std::vector<double> c(static_cast<std::size_t>(n) * 64);
    for (auto _ : s) {
        kernels::matmul_serial(a, b, c, n, 64, 64);
        benchmark::DoNotOptimize(c.data());
    }
}

void BM_matmul_parallel(benchmark::State& s) {
    const int n = static_cast<int>(s.range(0));
    const auto a = random_matrix(n, 64, 1), b = random_matrix(64, 64, 2);
    std::vector<double> c(static_cast<std::size_t>(n) * 64);
    for (auto _ : s) {
        kernels::matmul(a, b, c, n, 64, 64);
        benchmark::DoNotOptimize(c.data());
    }
}

void BM_knn_serial(benchmark::State& s) {
    const auto inst = generate_cvrp(static_cast<int>(s.range(0)), 3);
    for (auto _ : s) benchmark::DoNotOptimize(knn_sparsify_serial(inst, default_k(inst.size())));
}

void BM_knn_parallel(benchmark::State& s) {
    const auto inst = generate_cvrp(static_cast<int>(s.range(0)), 3);
    for (auto _ : s) benchmark::DoNotOptimize(knn_sparsify(inst, default_k(inst.size())));
}

void BM_rollouts(benchmark::State& s) {
    const auto inst = generate_cvrp(static_cast<int>(s.range(0)), 4);
    const auto graph = knn_sparsify(inst, default_k(inst.size()));
    const PolicyNet net(NetConfig{}, 1);
    for (auto _ : s) benchmark::DoNotOptimize(sample_trajectories(net, inst, graph, 20, Rng(5)));
}

}  // namespace

BENCHMARK(BM_matmul_serial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_matmul_parallel)->Arg(1000)->Arg(10000);
BENCHMARK(BM_knn_serial)->Arg(200)->Arg(1000);
BENCHMARK(BM_knn_parallel)->Arg(200)->Arg(1000);
BENCHMARK(BM_rollouts)->Arg(50)->Arg(200);

BENCHMARK_MAIN();
