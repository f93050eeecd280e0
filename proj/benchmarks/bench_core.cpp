#include "meatlab/attack.hpp"
#include "meatlab/ensemble.hpp"
#include "meatlab/model.hpp"
#include "meatlab/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace meat;

namespace {

ModelSpec bench_spec(std::size_t width) { return ModelSpec::mlp(2, {width, width}, 3); }

std::vector<int> labels_for(std::size_t n) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 3);
    return y;
}

} // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = gaussian(rng, {n, n});
    const Tensor b = gaussian(rng, {n, n});
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_ForwardBackwardTrain(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const ModelSpec spec = bench_spec(64);
    Rng rng(2);
    auto [params, bn] = init_params(spec, rng);
    const Tensor x = gaussian(rng, {batch, 2});
    const auto y = labels_for(batch);
    for (auto _ : state) {
        const auto fwd = forward(spec, params, bn, x, Mode::train);
        benchmark::DoNotOptimize(backward(spec, params, fwd.cache, y));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackwardTrain)->Arg(64)->Arg(256);

static void BM_Pgd(benchmark::State& state) {
    const ModelSpec spec = bench_spec(64);
    Rng rng(3);
    auto [params, bn] = init_params(spec, rng);
    const ModelState model{spec, params, bn};
    const Tensor x = clamp(gaussian(rng, {64, 2}), -1.0f, 1.0f);
    const auto y = labels_for(64);
    AttackConfig cfg;
    cfg.steps = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Rng attack_rng(4);
        benchmark::DoNotOptimize(pgd(model, x, y, cfg, attack_rng));
    }
}
BENCHMARK(BM_Pgd)->Arg(10)->Arg(20);

static void BM_MedianParams(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const ModelSpec spec = bench_spec(64);
    std::vector<NamedParams> snaps;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(10 + i);
        snaps.push_back(init_params(spec, rng).first);
    }
    for (auto _ : state) benchmark::DoNotOptimize(median_params(snaps));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(snaps[0].coordinate_count()));
}
BENCHMARK(BM_MedianParams)->Arg(5)->Arg(15)->Arg(30);

static void BM_RecalibrateBn(benchmark::State& state) {
    const ModelSpec spec = bench_spec(64);
    Rng rng(5);
    auto [params, bn] = init_params(spec, rng);
    std::vector<Tensor> batches;
    for (int i = 0; i < 10; ++i) batches.push_back(gaussian(rng, {64, 2}));
    for (auto _ : state) benchmark::DoNotOptimize(recalibrate_bn(spec, params, batches));
}
BENCHMARK(BM_RecalibrateBn);
BENCHMARK_MAIN();
