// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "hetseg/dataset.hpp"
#include "hetseg/sampler.hpp"

namespace {

using namespace hetseg;

FloatVolume noise(std::int64_t n) {
    std::mt19937 rng(1);
    std::normal_distribution<float> g(100.0f, 20.0f);
    FloatVolume v({n, n, n});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0f, g(rng));
    return v;
}

void BM_ZScore(benchmark::State& state) {
    const auto v = noise(state.range(0));
    const auto mask = nonzero_mask(v);
    for (auto _ : state) benchmark::DoNotOptimize(zscore(v, mask));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.size()));
}
BENCHMARK(BM_ZScore)->Arg(64)->Arg(128);

void BM_ResampleLinear(benchmark::State& state) {
    const auto v = noise(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(resample_linear(v, {1.0, 1.0, 3.0}, {1.0, 1.0, 1.0}));
}
BENCHMARK(BM_ResampleLinear)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ApplyDrop(benchmark::State& state) {
    CaseSample s;
    s.shape = {32, 32, 32};
    const auto c = static_cast<std::size_t>(state.range(0));
    s.presence.assign(c, true);
    s.image.assign(c * static_cast<std::size_t>(s.shape.voxels()), 1.0f);
    s.label = MaskVolume(s.shape);
    DropPolicy policy;
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(apply_drop(s, policy, rng));
}
BENCHMARK(BM_ApplyDrop)->Arg(2)->Arg(7);

}  // namespace
