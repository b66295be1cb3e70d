// SPDX-License-Identifier: Apache-2.0
//
// Training configuration. Configs are JSON objects; every key is optional
// and defaults to the values below, unknown keys are rejected. Example:
//
//   {
//     "seed": 7,
//     "model":     { "depth": 2, "width": 64, "heads": 2 },
//     "train":     { "steps": 800, "batch_size": 32, "lr": 0.002 },
//     "quant":     { "mask": "111111", "scale_rule": "truncation_free" },
//     "quantizer": { "weight": "qema", "qema": { "beta": 0.998 } },
//     "optimizer": { "kind": "adamw" },
//     "baseline":  { "kind": "none" },
//     "output":    { "log": "run.jsonl", "checkpoint": "run.mxck" }
//   }
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mxfp4/adamw.hpp"
#include "mxfp4/mx_linear.hpp"
#include "mxfp4/q_ramping.hpp"

namespace mxfp4::train {

struct ModelConfig {
    int depth = 2;
    int width = 64;
    int heads = 2;
    int mlp_ratio = 4;
    int tokens = 4;      // sequence length
    int patch_dim = 16;  // features per token; input dim = tokens * patch_dim
    int classes = 16;
    // Allows quantized dimensions that are not multiples of 32.
    bool ragged = false;

    int input_dim() const noexcept { return tokens * patch_dim; }
    void validate() const;
};

enum class DataKind : std::uint8_t { Synthetic, File };

struct DataConfig {
    DataKind kind = DataKind::Synthetic;
    int train_size = 4096;
    int val_size = 1024;
    // Gaussian clusters: class means ~ N(0, separation^2 I), samples add
    // N(0, noise^2 I).
    double separation = 1.0;
    double noise = 1.2;
    std::string path;  // File kind: an MXDS dataset
    void validate(const ModelConfig& model) const;
};

struct ScheduleConfig {
    int steps = 800;
    int batch_size = 32;
    double lr = 2e-3;
    int warmup_steps = 0;
    int eval_every = 0;   // 0: evaluate at the end only
    int log_every = 10;
    AdamWParams adamw{};

    // Cosine decay to zero after a linear warmup.
    double lr_at(int step) const noexcept;
    void validate() const;
};

struct QuantConfig {
    LinearQuantConfig linear{};
    GradientPath gradient_path = GradientPath::DoubleQuantization;
};

enum class WeightQuantizer : std::uint8_t { Plain, QEma };
enum class OptimizerKind : std::uint8_t { AdamW, QRamping };
enum class BaselineKind : std::uint8_t { None, Dampen, Freeze };

struct BaselineConfig {
    BaselineKind kind = BaselineKind::None;
    double lambda = 1e-4;          // Dampen
    double f_th = 0.05;            // Freeze threshold on flip frequency
    double momentum = 0.99;        // Freeze flip-frequency EMA
    double warmup_fraction = 0.1;  // no freezing before this share of steps
};

struct DiagnosticsConfig {
    bool enabled = true;
    int window = 30;  // trailing steps over which r(.) and R_w are measured
    int probe_block = -1;  // -1: last block
    int confidence_bins = 50;
    // Every this many steps, the share of R_w > 16 elements over the
    // trailing `window` steps is recorded; 0 disables the timeline.
    int timeline_every = 100;
};

struct OutputConfig {
    std::string log;
    std::string checkpoint;
};

struct TrainConfig {
    // Required whenever a stochastic quantizer is active.
    std::optional<std::uint64_t> seed;
    ModelConfig model{};
    DataConfig data{};
    ScheduleConfig schedule{};
    QuantConfig quant{};
    WeightQuantizer weight_quantizer = WeightQuantizer::Plain;
    double ema_beta = 0.998;
    OptimizerKind optimizer = OptimizerKind::AdamW;
    RampingConfig ramping{};
    BaselineConfig baseline{};
    DiagnosticsConfig diagnostics{};
    OutputConfig output{};

    std::uint64_t seed_or_zero() const noexcept { return seed.value_or(0); }
    bool uses_stochastic_rounding() const noexcept;
    // Throws ConfigError naming the offending or conflicting keys.
    void validate() const;
};

// Throws ConfigError on unknown keys and bad types, and on invalid
// combinations unless `validate` is false (for callers that still apply
// overrides before validating).
TrainConfig parse_config(const std::string& json_text, bool validate = true);
TrainConfig load_config(const std::string& path, bool validate = true);
std::string to_json(const TrainConfig& cfg);

// Name <-> enum helpers shared with the CLI.
ScaleRule parse_scale_rule(const std::string& s);
Rounding parse_rounding(const std::string& s);
GradientPath parse_gradient_path(const std::string& s);
Axis parse_axis(const std::string& s);
const char* to_string(ScaleRule r) noexcept;
const char* to_string(Rounding r) noexcept;
const char* to_string(GradientPath p) noexcept;

}  // namespace mxfp4::train
