// SPDX-License-Identifier: Apache-2.0
//
// Training loop for the toy transformer: quantized linear layers, AdamW or
// the ramping optimizer, the EMA weight quantizer, the Dampen and Freeze
// baselines, and end-of-run instability diagnostics.
//
// Per step t: sample batch t, forward and backward (stochastic quantizers
// draw from substreams keyed by (seed, layer, t)), optional Dampen gradient,
// optimizer step at the cosine learning rate, then EMA update, Freeze
// bookkeeping and diagnostic snapshots. Every random draw is a function of
// (seed, step), so a run is a pure function of its config.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mxfp4/adamw.hpp"
#include "mxfp4/oscillation.hpp"
#include "mxfp4/q_ema.hpp"
#include "mxfp4/q_ramping.hpp"
#include "mxfp4/train/config.hpp"
#include "mxfp4/train/dataset.hpp"
#include "mxfp4/train/metric_log.hpp"
#include "mxfp4/train/model.hpp"

namespace mxfp4::train {

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Instability measured over a trailing window of steps.
struct WindowDiagnostics {
    int steps = 0;
    double r_w = 0.0;      // mean over quantized tensors of r(W)
    double r_wq = 0.0;     // same for the forward-quantized weights
    double r_probe = 0.0;  // r(Y) of the probe block on a fixed batch
    double oscillating_fraction = 0.0;  // share of elements with R_w > 16
    std::vector<std::size_t> confidence_histogram;  // at the window end
    double mean_confidence = 0.0;
};

struct RunSummary {
    int steps = 0;
    double final_loss = 0.0;
    EvalResult val;
    WindowDiagnostics diagnostics;
    // Share of R_w > 16 elements in each timeline window, in step order.
    std::vector<double> oscillation_timeline;
    double mean_timeline_oscillation() const noexcept;
    std::size_t frozen = 0;
    int detections = 0;
};

// Returns lambda * sum (w - wq)^2 and adds its gradient to `grad`, treating
// wq as a constant.
double dampen_penalty(std::span<const double> w, std::span<const double> wq, double lambda,
                      std::span<double> grad);

class Trainer {
public:
    // `log` may be null; when non-null it must outlive the trainer.
    explicit Trainer(TrainConfig cfg, MetricLog* log = nullptr);
    // Builds the dataset from the config.
    Trainer(TrainConfig cfg, std::shared_ptr<const Dataset> data, MetricLog* log = nullptr);
    ~Trainer();
    Trainer(Trainer&&) noexcept;
    Trainer& operator=(Trainer&&) noexcept;

    // Trains until the configured step count. Throws NumericError on a
    // non-finite loss or weight, after logging an "abort" record.
    RunSummary run();

    // Runs `steps` further steps at a fixed learning rate while measuring
    // window diagnostics; used to probe a checkpoint.
    WindowDiagnostics probe_window(int steps, double lr);

    EvalResult evaluate() const;
    int step() const noexcept { return step_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    Model& model() noexcept { return model_; }
    const Model& model() const noexcept { return model_; }
    const Dataset& data() const noexcept { return *data_; }
    std::size_t frozen_count() const noexcept;

    // Flattened masters and forward-quantized values of all MX weights.
    void snapshot(std::vector<double>& masters, std::vector<double>& quantized) const;
    // Latents w/S of all MX weights under their current Q2 blocks.
    std::vector<double> latents() const;

    // Checkpoint: "MXCK", u32 version, u64 header length, JSON header
    // (config, step, tensor directory), then raw little-endian f64 tensors.
    void save_checkpoint(const std::filesystem::path& path) const;
    static Trainer load_checkpoint(const std::filesystem::path& path, MetricLog* log = nullptr);

private:
    struct Diagnostics;

    void init();
    StepContext context(std::uint32_t step) const;
    void train_step(double lr);
    // One scheduled step plus whatever diagnostics windows it belongs to.
    void advance(double lr);
    [[noreturn]] void abort_run(double value, const std::string& what);
    void detection_pass();
    void begin_window();
    void observe_window();
    WindowDiagnostics finish_window();

    TrainConfig cfg_;
    std::shared_ptr<const Dataset> data_;
    MetricLog* log_ = nullptr;
    Model model_;
    int step_ = 0;
    double last_loss_ = 0.0;
    int detections_ = 0;

    std::vector<AdamW> adam_;          // per parameter (unused slots for ramped ones)
    std::vector<RampingAdamW> ramp_;   // per parameter, ramping optimizer only
    std::vector<EmaState> ema_;        // per parameter, EMA quantizer only
    // Freeze baseline, per parameter.
    std::vector<FlipFrequency> flips_;
    std::vector<std::vector<double>> freeze_avg_, freeze_prev_;
    std::vector<std::vector<std::uint8_t>> frozen_;

    Batch probe_batch_;
    std::unique_ptr<Diagnostics> diag_;
    TrajectoryTracker timeline_;
    bool timeline_active_ = false;
    std::vector<double> timeline_values_;
};

}  // namespace mxfp4::train
