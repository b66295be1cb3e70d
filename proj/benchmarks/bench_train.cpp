// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "mxfp4/train/config.hpp"
#include "mxfp4/train/trainer.hpp"

namespace {

using namespace mxfp4;
using namespace mxfp4::train;

TrainConfig toy(int steps) {
    TrainConfig c;
    c.seed = 1;
    c.schedule.steps = steps;
    c.diagnostics.enabled = false;
    return c;
}

// Whole toy runs of 20 steps; covers data sampling, both passes and the
// optimizer, with and without the oscillation-reduction methods.
void BM_ToyRun(benchmark::State& state) {
    TrainConfig c = toy(20);
    switch (state.range(0)) {
    case 1: c.quant.linear.mask = QuantizerMask::all_off(); break;
    case 2: c.weight_quantizer = WeightQuantizer::QEma; break;
    case 3:
        c.optimizer = OptimizerKind::QRamping;
        c.ramping.t0 = 5;
        c.ramping.t_update = 10;
        break;
    default: break;
    }
    for (auto _ : state) benchmark::DoNotOptimize(Trainer(c).run());
    state.SetItemsProcessed(state.iterations() * c.schedule.steps);
}
BENCHMARK(BM_ToyRun)->DenseRange(0, 3)->ArgNames({"variant"})->Unit(benchmark::kMillisecond);

}  // namespace
