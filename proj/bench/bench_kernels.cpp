// Parallel kernels vs the serial reference on layer shapes taken from the
// width-0.125 network (the desk-scale training configuration).
//
//   ./dfq_bench --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "dfq/kernels.hpp"

namespace {

using dfq::kernels::ConvGeometry;
using dfq::kernels::Padding;
using dfq::kernels::PoolGeometry;

std::vector<float> random_values(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// args: spatial, in channels, out channels, kernel, padding (0 same / 1 valid)
ConvGeometry geometry(const benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    return ConvGeometry::make(hw, hw, static_cast<std::size_t>(state.range(1)),
                              static_cast<std::size_t>(state.range(3)),
                              static_cast<std::size_t>(state.range(2)),
                              state.range(4) == 0 ? Padding::Same : Padding::Valid);
}

void set_flops(benchmark::State& state, const ConvGeometry& g, double passes) {
    const double macs = static_cast<double>(g.out_h * g.out_w * g.out_c * g.patch_size());
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * macs * passes * state.iterations(),
                                                   benchmark::Counter::kIsRate,
                                                   benchmark::Counter::kIs1000);
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto in = random_values(g.in_size(), 1);
    const auto w = random_values(g.weight_size(), 2);
    const auto b = random_values(g.out_c, 3);
    std::vector<float> out(g.out_size());
    for (auto _ : state) {
        if constexpr (Reference) {
            dfq::kernels::reference::conv2d_forward(g, in.data(), w.data(), b.data(), out.data());
        } else {
            dfq::kernels::conv2d_forward(g, in.data(), w.data(), b.data(), out.data());
        }
        benchmark::DoNotOptimize(out.data());
    }
    set_flops(state, g, 1.0);
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto in = random_values(g.in_size(), 1);
    const auto w = random_values(g.weight_size(), 2);
    const auto gout = random_values(g.out_size(), 3);
    std::vector<float> gin(g.in_size()), gw(g.weight_size()), gb(g.out_c);
    for (auto _ : state) {
        if constexpr (Reference) {
            dfq::kernels::reference::conv2d_backward(g, gout.data(), in.data(), w.data(),
                                                     gin.data(), gw.data(), gb.data());
        } else {
            dfq::kernels::conv2d_backward(g, gout.data(), in.data(), w.data(), gin.data(),
                                          gw.data(), gb.data());
        }
        benchmark::DoNotOptimize(gin.data());
    }
    set_flops(state, g, 2.0);
}

template <bool Reference>
void BM_MaxPool(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    const auto g = PoolGeometry::make(hw, hw, static_cast<std::size_t>(state.range(1)));
    const auto in = random_values(g.in_size(), 1);
    std::vector<float> out(g.out_size());
    std::vector<std::uint32_t> idx(g.out_size());
    for (auto _ : state) {
        if constexpr (Reference) {
            dfq::kernels::reference::maxpool_forward(g, in.data(), out.data(), idx.data());
        } else {
            dfq::kernels::maxpool_forward(g, in.data(), out.data(), idx.data());
        }
        benchmark::DoNotOptimize(out.data());
    }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
    b->ArgNames({"hw", "cin", "cout", "k", "valid"});
    b->Args({256, 3, 4, 3, 0});
    b->Args({256, 4, 4, 3, 1});
    b->Args({127, 4, 8, 3, 0});
    b->Args({62, 8, 16, 3, 0});
    b->Args({30, 16, 32, 3, 0});
    b->Args({14, 32, 64, 5, 0});
    b->Args({14, 64, 64, 5, 1});
    b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("ConvForward/reference")->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<false>)->Name("ConvForward/omp")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<true>)->Name("ConvBackward/reference")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<false>)->Name("ConvBackward/omp")->Apply(conv_shapes);
BENCHMARK(BM_MaxPool<true>)->Name("MaxPool/reference")->Args({254, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool<false>)->Name("MaxPool/omp")->Args({254, 32})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
