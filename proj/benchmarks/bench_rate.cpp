#include <benchmark/benchmark.h>

#include <random>

#include "byteflow/rate.hpp"

namespace {

using byteflow::numkernel::Matrix;
using namespace byteflow::rate;

Matrix random_h(std::size_t t, std::size_t d) {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> n(0.0, 0.1);
    Matrix h(t, d);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) h(i, j) = n(rng);
    return h;
}

void BM_MarginalRatesStream(benchmark::State& state) {
    const auto t = static_cast<std::size_t>(state.range(0));
    const auto d = static_cast<std::size_t>(state.range(1));
    const Matrix h = random_h(t, d);
    const RateConfig cfg{1.0, d, false};
    for (auto _ : state) benchmark::DoNotOptimize(marginal_rates_stream(h, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t));
}
BENCHMARK(BM_MarginalRatesStream)->Args({256, 32})->Args({256, 64})->Args({1024, 64});

void BM_MarginalRatesL2(benchmark::State& state) {
    const auto t = static_cast<std::size_t>(state.range(0));
    const auto d = static_cast<std::size_t>(state.range(1));
    const Matrix h = random_h(t, d);
    const RateConfig cfg{1.0, d, true};
    for (auto _ : state) benchmark::DoNotOptimize(marginal_rates_l2(h, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t));
}
BENCHMARK(BM_MarginalRatesL2)->Args({256, 32})->Args({256, 64})->Args({1024, 64});

// One logdet per prefix, the quadratic baseline the streaming form replaces.
void BM_MarginalRatesNaive(benchmark::State& state) {
    const auto t = static_cast<std::size_t>(state.range(0));
    const auto d = static_cast<std::size_t>(state.range(1));
    const Matrix h = random_h(t, d);
    const RateConfig cfg{1.0, d, false};
    for (auto _ : state) {
        double prev = 0.0;
        for (std::size_t i = 1; i <= t; ++i) {
            Matrix prefix(i, d);
            for (std::size_t r = 0; r < i; ++r)
                for (std::size_t c = 0; c < d; ++c) prefix(r, c) = h(r, c);
            const double cur = coding_rate_exact(prefix, cfg);
            benchmark::DoNotOptimize(cur - prev);
            prev = cur;
        }
    }
}
BENCHMARK(BM_MarginalRatesNaive)->Args({64, 32})->Args({256, 32})->Unit(benchmark::kMillisecond);

}  // namespace
