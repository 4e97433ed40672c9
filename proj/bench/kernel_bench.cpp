// Parallel kernels against their serial references on model-sized inputs.
#include <benchmark/benchmark.h>

#include <vector>

#include "ave/core/kernels.hpp"
#include "ave/core/random.hpp"

namespace K = ave::kernels;
namespace R = ave::kernels::reference;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed)
{
    ave::Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = ave::standard_normal(rng);
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) K::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
        else R::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<long>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state)
{
    const K::AttentionShape s{static_cast<std::size_t>(state.range(0)), 65, 65, 4, 16, 0.25};
    const auto q = random_vec(s.batch * s.q_len * s.width(), 3);
    const auto k = random_vec(s.batch * s.k_len * s.width(), 4);
    const auto v = random_vec(s.batch * s.k_len * s.width(), 5);
    std::vector<double> out(q.size()), probs(s.batch * s.heads * s.q_len * s.k_len);
    for (auto _ : state) {
        if constexpr (Parallel) K::attention_forward(s, q.data(), k.data(), v.data(), nullptr, out.data(), probs.data());
        else R::attention_forward(s, q.data(), k.data(), v.data(), nullptr, out.data(), probs.data());
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Resample(benchmark::State& state)
{
    const std::size_t size = 224;
    const auto src = random_vec(size * size * 3, 6);
    std::vector<double> out(32 * 32 * 3);
    const double d = static_cast<double>(state.range(0));
    for (auto _ : state) {
        if constexpr (Parallel) K::resample(src.data(), size, size, 3, {10, 10, d, d}, 32, 32, out.data());
        else R::resample(src.data(), size, size, 3, {10, 10, d, d}, 32, 32, out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state)
{
    const auto rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 192;
    const auto x = random_vec(rows * cols, 7), g = random_vec(cols, 8), b = random_vec(cols, 9);
    std::vector<double> y(x.size()), mean(rows), rstd(rows);
    for (auto _ : state) {
        if constexpr (Parallel) K::layer_norm_forward(rows, cols, x.data(), g.data(), b.data(), 1e-6, y.data(), mean.data(), rstd.data());
        else R::layer_norm_forward(rows, cols, x.data(), g.data(), b.data(), 1e-6, y.data(), mean.data(), rstd.data());
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state)
{
    const K::ConvShape s{static_cast<std::size_t>(state.range(0)), 16, 16, 3, 3, 2, 1};
    const auto x = random_vec(s.batch * s.height * s.width * s.channels, 10);
    std::vector<double> cols(s.batch * s.out_h() * s.out_w() * s.col_width());
    for (auto _ : state) {
        if constexpr (Parallel) K::im2col(s, x.data(), cols.data());
        else R::im2col(s, x.data(), cols.data());
        benchmark::DoNotOptimize(cols.data());
    }
}

} // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(192);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(192);
BENCHMARK(BM_Attention<false>)->Arg(8)->Arg(64);
BENCHMARK(BM_Attention<true>)->Arg(8)->Arg(64);
BENCHMARK(BM_Resample<false>)->Arg(32)->Arg(224);
BENCHMARK(BM_Resample<true>)->Arg(32)->Arg(224);
BENCHMARK(BM_LayerNorm<false>)->Arg(512)->Arg(8192);
BENCHMARK(BM_LayerNorm<true>)->Arg(512)->Arg(8192);
BENCHMARK(BM_Im2col<false>)->Arg(64);
BENCHMARK(BM_Im2col<true>)->Arg(64);

BENCHMARK_MAIN();
