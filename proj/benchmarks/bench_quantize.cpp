// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "bench_util.hpp"
#include "mxfp4/container.hpp"
#include "mxfp4/mx_block.hpp"
#include "mxfp4/q_ema.hpp"
#include "mxfp4/quantized_matrix.hpp"

namespace {

using namespace mxfp4;

void BM_QuantizeBlock(benchmark::State& state) {
    const Matrix m = bench::random_matrix(1, 32, 1);
    const auto rule = static_cast<ScaleRule>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(quantize_block(m.values(), e2m1(), rule, Rounding::Deterministic));
}
BENCHMARK(BM_QuantizeBlock)
    ->Arg(static_cast<int>(ScaleRule::TruncationFree))
    ->Arg(static_cast<int>(ScaleRule::Microscaling));

void BM_QuantizeMatrix(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto axis = static_cast<Axis>(state.range(1));
    const auto rounding = static_cast<Rounding>(state.range(2));
    const Matrix m = bench::random_matrix(n, n, 2);
    const RngContext rng{3, 1, 0};
    const QuantSpec spec{FormatId::E2M1, ScaleRule::TruncationFree, rounding};
    for (auto _ : state) benchmark::DoNotOptimize(quantize_matrix(m, axis, spec, &rng));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_QuantizeMatrix)
    ->ArgsProduct({{64, 256},
                   {static_cast<int>(Axis::RowGroups), static_cast<int>(Axis::ColGroups)},
                   {static_cast<int>(Rounding::Deterministic), static_cast<int>(Rounding::Stochastic)}});

void BM_QuantizeMatrixEma(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix w = bench::random_matrix(n, n, 4), ema = bench::random_matrix(n, n, 5);
    for (auto _ : state) benchmark::DoNotOptimize(quantize_matrix_ema(w, ema, Axis::ColGroups, FormatId::E2M1));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_QuantizeMatrixEma)->Arg(256);

void BM_Mxt1RoundTrip(benchmark::State& state) {
    const QuantizedMatrix q = quantize_matrix(bench::random_matrix(256, 256, 6), Axis::RowGroups, {});
    for (auto _ : state) benchmark::DoNotOptimize(decode_mxt1(encode_mxt1(q)));
}
BENCHMARK(BM_Mxt1RoundTrip);

}  // namespace
