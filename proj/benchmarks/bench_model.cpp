#include <benchmark/benchmark.h>

#include "byteflow/model.hpp"
#include "byteflow/trainer.hpp"

namespace {

using namespace byteflow;

ByteSeq sample_window(std::size_t t) {
    const auto text = trainer::synthetic_corpus(t - 1, 1);
    return ByteSeq::with_bos(text);
}

void BM_ForwardLoss(benchmark::State& state) {
    const auto cfg = model::ModelConfig::desk();
    auto params = model::ModelParams::init(cfg);
    const auto bytes = sample_window(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(model::forward_loss(params, cfg, bytes));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardLoss)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
    const auto cfg = model::ModelConfig::desk();
    auto params = model::ModelParams::init(cfg);
    const auto bytes = sample_window(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        nn::Graph g;
        const auto r = model::forward(g, params, cfg, bytes);
        g.backward(r.loss);
        benchmark::DoNotOptimize(params.tensors().front().grad.data());
    }
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
