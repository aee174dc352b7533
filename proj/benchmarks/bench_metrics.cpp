// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "hetseg/metrics.hpp"

namespace {

using namespace hetseg;

MaskVolume ball(std::int64_t n, double r, double cx) {
    MaskVolume m({n, n, n});
    for (std::int64_t z = 0; z < n; ++z)
        for (std::int64_t y = 0; y < n; ++y)
            for (std::int64_t x = 0; x < n; ++x) {
                const double dx = x - cx, dy = y - n / 2.0, dz = z - n / 2.0;
                m.at(x, y, z) = dx * dx + dy * dy + dz * dz <= r * r;
            }
    return m;
}

void BM_Dice(benchmark::State& state) {
    const auto n = state.range(0);
    const auto a = ball(n, n / 4.0, n / 2.0);
    const auto b = ball(n, n / 4.0, n / 2.0 + 2);
    for (auto _ : state) benchmark::DoNotOptimize(dice(a, b));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Dice)->Arg(64)->Arg(128);

void BM_Assd(benchmark::State& state) {
    const auto n = state.range(0);
    const auto a = ball(n, n / 4.0, n / 2.0);
    const auto b = ball(n, n / 4.0, n / 2.0 + 2);
    const Spacing3 spacing{1.0, 0.9, 3.0};
    for (auto _ : state) benchmark::DoNotOptimize(assd(a, b, spacing));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Assd)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
    const auto n = state.range(0);
    const auto seeds = surface(ball(n, n / 4.0, n / 2.0));
    for (auto _ : state) benchmark::DoNotOptimize(squared_distance_transform(seeds, {1.0, 1.0, 1.0}));
}
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
