// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "mxfp4/mx_linear.hpp"
#include "mxfp4/quantized_matrix.hpp"

namespace {

using namespace mxfp4;

// Batch of 256 tokens through a width x width layer.
struct Problem {
    Matrix x, w, gy;
    explicit Problem(std::size_t width)
        : x(bench::random_matrix(256, width, 1)),
          w(bench::random_matrix(width, width, 2)),
          gy(bench::random_matrix(256, width, 3)) {}
};

void BM_DenseMatmul(benchmark::State& state) {
    const Problem p(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(matmul(p.x, transpose(p.w)));
}
BENCHMARK(BM_DenseMatmul)->Arg(64)->Arg(256);

void BM_LinearForward(benchmark::State& state) {
    const Problem p(static_cast<std::size_t>(state.range(0)));
    const LinearQuantConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(linear_forward(p.x, p.w, cfg));
}
BENCHMARK(BM_LinearForward)->Arg(64)->Arg(256);

void BM_BackwardTetraJet(benchmark::State& state) {
    const Problem p(static_cast<std::size_t>(state.range(0)));
    const LinearQuantConfig cfg;
    const LinearForward fw = linear_forward(p.x, p.w, cfg);
    std::uint32_t step = 0;
    for (auto _ : state) benchmark::DoNotOptimize(backward_tetrajet(p.gy, fw.tapes, cfg, {1, 1, step++}));
}
BENCHMARK(BM_BackwardTetraJet)->Arg(64)->Arg(256);

void BM_BackwardMicroscaling(benchmark::State& state) {
    const Problem p(static_cast<std::size_t>(state.range(0)));
    const LinearQuantConfig cfg;
    std::uint32_t step = 0;
    for (auto _ : state) benchmark::DoNotOptimize(backward_microscaling(p.gy, p.x, p.w, cfg, {1, 1, step++}));
}
BENCHMARK(BM_BackwardMicroscaling)->Arg(64)->Arg(256);

}  // namespace
