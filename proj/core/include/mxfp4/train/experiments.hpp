// SPDX-License-Identifier: Apache-2.0
//
// Multi-run experiments over a base config: the per-quantizer impact sweep
// and a cartesian ablation grid. Every cell runs on the same seed list.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mxfp4/train/config.hpp"
#include "mxfp4/train/trainer.hpp"

namespace mxfp4::train {

struct ExperimentRow {
    std::string label;
    TrainConfig config;
    std::vector<RunSummary> runs;  // one per seed; empty when skipped
    std::string notice;            // why the cell was skipped

    bool skipped() const noexcept { return runs.empty(); }
    double mean_val_accuracy() const;
    double mean_final_loss() const;
    double mean_r_wq() const;
    double mean_oscillating_fraction() const;
};

struct ExperimentTable {
    std::string title;
    std::vector<std::uint64_t> seeds;
    std::vector<ExperimentRow> rows;

    std::string to_text() const;
    std::string to_json() const;
};

struct ExperimentOptions {
    std::vector<std::uint64_t> seeds{1};
    // When set, each run writes its metric log to <log_dir>/<row>_s<seed>.jsonl.
    std::string log_dir;
    std::function<void(const std::string&)> progress;
};

// Eight runs differing only in the quantizer mask: all off, each Qi alone,
// all on.
ExperimentTable run_quantizer_impact(const TrainConfig& base, const ExperimentOptions& opt);

struct AblationAxes {
    std::vector<Rounding> rounding{Rounding::Stochastic};
    std::vector<GradientPath> path{GradientPath::DoubleQuantization};
    std::vector<ScaleRule> scale{ScaleRule::TruncationFree};
    std::vector<FormatId> format{FormatId::E2M1};
    std::vector<WeightQuantizer> weight{WeightQuantizer::Plain};
    std::vector<OptimizerKind> optimizer{OptimizerKind::AdamW};

    std::size_t cells() const noexcept;
};

// Grid spec: ';'-separated "axis=v1,v2" terms over the axes rounding, path,
// scale, format, weight and optimizer. Unlisted axes keep the base config's
// value. "default" expands to the full rounding x path x scale cube.
AblationAxes parse_grid(const std::string& spec, const TrainConfig& base);

// Invalid cells (for example qema with qramping) are kept as skipped rows.
ExperimentTable run_ablation(const TrainConfig& base, const AblationAxes& axes, const ExperimentOptions& opt);

}  // namespace mxfp4::train
