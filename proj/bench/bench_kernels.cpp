// Serial reference kernels against their OpenMP counterparts, plus one
// training epoch at one thread and at all threads.

#include <benchmark/benchmark.h>

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "reviewguard/models.hpp"
#include "reviewguard/nnet/kernels.hpp"
#include "reviewguard/rng.hpp"

using namespace reviewguard;
namespace k = reviewguard::nnet::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

std::vector<SparseVector> random_rows(std::size_t rows, std::size_t dim, std::size_t nnz, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SparseVector> out(rows);
    for (auto& r : out) {
        r.dim = dim;
        std::uint32_t idx = 0;
        for (std::size_t j = 0; j < nnz && idx < dim; ++j) {
            idx += 1 + static_cast<std::uint32_t>(rng.below(dim / nnz));
            if (idx >= dim) break;
            r.entries.push_back({idx, rng.uniform(0.0, 1.0)});
        }
    }
    return out;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::matmul(a.data(), b.data(), c.data(), n, n, n, false);
        else k::serial::matmul(a.data(), b.data(), c.data(), n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_MatmulTN(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 3), b = random_vec(n * n, 4);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::matmul_tn(a.data(), b.data(), c.data(), n, n, n, false);
        else k::serial::matmul_tn(a.data(), b.data(), c.data(), n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
}

template <bool Parallel>
void BM_Conv1d(benchmark::State& state) {
    const std::size_t len = 400, d = 100, width = 5, filters = static_cast<std::size_t>(state.range(0));
    const auto seq = random_vec(len * d, 5), w = random_vec(width * d * filters, 6), bias = random_vec(filters, 7);
    std::vector<double> out((len - width + 1) * filters);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::conv1d_forward(seq.data(), len, d, w.data(), bias.data(), width, filters, out.data());
        else k::serial::conv1d_forward(seq.data(), len, d, w.data(), bias.data(), width, filters, out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_SparseDots(benchmark::State& state) {
    const auto rows = random_rows(static_cast<std::size_t>(state.range(0)), 50000, 200, 8);
    const auto dense = random_vec(50000, 9);
    std::vector<double> out(rows.size());
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::sparse_dots(rows, dense, out);
        else k::serial::sparse_dots(rows, dense, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Adam(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto theta = random_vec(n, 10);
    const auto grad = random_vec(n, 11);
    std::vector<double> m(n), v(n);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::adam_update(theta.data(), grad.data(), m.data(), v.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
        else k::serial::adam_update(theta.data(), grad.data(), m.data(), v.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
        benchmark::DoNotOptimize(theta.data());
    }
}

// One MLP epoch; the argument is the OpenMP thread count (0: all).
void BM_MlpEpoch(benchmark::State& state) {
#ifdef _OPENMP
    const int before = omp_get_max_threads();
    if (state.range(0) > 0) omp_set_num_threads(static_cast<int>(state.range(0)));
#endif
    const std::size_t dim = 20000, n = 256;
    const auto xs = random_rows(n, dim, 150, 12);
    std::vector<Label> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = i % 2 ? Label::Ham : Label::Spam;
    ModelSpec spec;
    spec.kind = ModelKind::Mlp;
    spec.mlp_hidden = {170, 170, 170};
    spec.epochs = 1;
    for (auto _ : state) {
        nets::MlpNet net(dim, spec.mlp_hidden, std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
        Rng rng(1);
        net.init(rng);
        benchmark::DoNotOptimize(train_net(net, spec, std::span<const SparseVector>(xs), ys, {}, {}));
    }
#ifdef _OPENMP
    omp_set_num_threads(before);
#endif
}

} // namespace

BENCHMARK_TEMPLATE(BM_Matmul, false)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_Matmul, true)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_MatmulTN, false)->Arg(256);
BENCHMARK_TEMPLATE(BM_MatmulTN, true)->Arg(256);
BENCHMARK_TEMPLATE(BM_Conv1d, false)->Arg(100);
BENCHMARK_TEMPLATE(BM_Conv1d, true)->Arg(100);
BENCHMARK_TEMPLATE(BM_SparseDots, false)->Arg(2000);
BENCHMARK_TEMPLATE(BM_SparseDots, true)->Arg(2000);
BENCHMARK_TEMPLATE(BM_Adam, false)->Arg(1 << 20);
BENCHMARK_TEMPLATE(BM_Adam, true)->Arg(1 << 20);
BENCHMARK(BM_MlpEpoch)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
