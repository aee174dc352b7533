// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "hetseg/fusion.hpp"
#include "hetseg/models.hpp"
#include "hetseg/training.hpp"

namespace {

using namespace hetseg;

ModelSpec spec(ModelFamily family, int channels) {
    ModelSpec s;
    s.family = family;
    for (int i = 0; i < channels; ++i) s.modalities.push_back("M" + std::to_string(i));
    return s;
}

// One optimizer-free training step: forward, loss, backward.
void BM_TrainStep(benchmark::State& state) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
    torch::manual_seed(0);
    const auto family = static_cast<ModelFamily>(state.range(0));
    const auto n = state.range(1);
    auto model = make_model(spec(family, 2));
    const auto x = torch::randn({2, 2, n, n, n});
    const auto y = (torch::rand({2, 1, n, n, n}) > 0.9).to(torch::kFloat32);
    for (auto _ : state) {
        model->zero_grad();
        auto loss = segmentation_loss(model->forward(x), y).total;
        loss.backward();
        benchmark::DoNotOptimize(loss);
    }
    state.SetLabel(to_string(family));
}
BENCHMARK(BM_TrainStep)
    ->ArgsProduct({{0, 1, 2}, {32, 48}})
    ->Unit(benchmark::kMillisecond)
    ->Iterations(3);

void BM_Inference(benchmark::State& state) {
    torch::set_num_threads(1);
    torch::manual_seed(0);
    const auto family = static_cast<ModelFamily>(state.range(0));
    auto model = make_model(spec(family, 2));
    const auto x = torch::randn({1, 2, 48, 48, 48});
    torch::NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(model->forward(x));
    state.SetLabel(to_string(family));
}
BENCHMARK(BM_Inference)->DenseRange(0, 2)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_FusionBackward(benchmark::State& state) {
    torch::set_num_threads(1);
    torch::manual_seed(0);
    const int c = static_cast<int>(state.range(0));
    FusionBlock block(c, 8);
    const auto z = torch::randn({2, c, 8, 32, 32, 32}).requires_grad_(true);
    for (auto _ : state) {
        block.zero_grad();
        auto out = block.forward(z);
        out.fused.sum().backward();
        benchmark::DoNotOptimize(out.fused);
    }
}
BENCHMARK(BM_FusionBackward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
