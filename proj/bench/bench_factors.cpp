// Serial reference vs OpenMP kernels on a large synthetic dump.
//   ./attnacc_bench --benchmark_filter=Sigma

#include "attnacc/factors.hpp"
#include "attnacc/synthgen.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace attnacc;

// 32 layers x 16 heads x 64 rows x 2304 columns (four 24x24 images), ~300 MB.
const GeneratedSample& big_sample() {
    static const GeneratedSample sample = [] {
        GenSpec spec;
        spec.seed = 1;
        spec.layers = 32;
        spec.heads = 16;
        spec.image_widths = {576, 576, 576, 576};
        spec.query_rows = 64;
        spec.target = 1;
        spec.gamma = 0.5;
        spec.onset_layer = 20;
        spec.patch_grids = {PatchGrid{24, 24}, PatchGrid{24, 24}, PatchGrid{24, 24}, PatchGrid{24, 24}};
        return generate_sample(spec);
    }();
    return sample;
}

void set_bytes(benchmark::State& state) {
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(big_sample().dump.values().size_bytes()));
}

void BM_SigmaSerial(benchmark::State& state) {
    const auto& s = big_sample();
    const ColumnMap cmap = build_column_map(s.manifest);
    for (auto _ : state) benchmark::DoNotOptimize(image_attention_factors_serial(s.dump, cmap));
    set_bytes(state);
}

void BM_SigmaParallel(benchmark::State& state) {
    const auto& s = big_sample();
    const ColumnMap cmap = build_column_map(s.manifest);
    for (auto _ : state) benchmark::DoNotOptimize(image_attention_factors(s.dump, cmap));
    set_bytes(state);
}

void BM_RhoSerial(benchmark::State& state) {
    const auto& s = big_sample();
    const ColumnMap cmap = build_column_map(s.manifest);
    for (auto _ : state) benchmark::DoNotOptimize(patch_attention_factors_serial(s.dump, cmap, 2));
}

void BM_RhoParallel(benchmark::State& state) {
    const auto& s = big_sample();
    const ColumnMap cmap = build_column_map(s.manifest);
    for (auto _ : state) benchmark::DoNotOptimize(patch_attention_factors(s.dump, cmap, 2));
}

}  // namespace

BENCHMARK(BM_SigmaSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SigmaParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RhoSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RhoParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_MAIN();
