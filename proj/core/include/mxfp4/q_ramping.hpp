// SPDX-License-Identifier: Apache-2.0
//
// Adaptive ramping optimizer. Every `t_update` steps a short detection
// window of `t0` ordinary steps measures each quantized weight's oscillation
// ratio R_w. Elements are then assigned an amplification
//
//     N_w = min(k2 * floor(R_w / k1) + 1, n_max)
//
// and from then on accumulate N_w micro-step gradients, applying one AdamW
// update with the mean gradient and learning rate N_w * LR. Oscillating
// weights thus see an N_w-times larger batch and learning rate, at 1/N_w the
// update frequency. Elements with N_w = 1 follow plain AdamW exactly.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mxfp4/adamw.hpp"
#include "mxfp4/oscillation.hpp"

namespace mxfp4 {

struct RampingConfig {
    double k1 = 16.0;
    int k2 = 5;
    int n_max = 10;
    int t0 = 30;
    int t_update = 1000;

    // Throws ConfigError naming the offending key.
    void validate() const;
};

// min(k2 * floor(R / k1) + 1, n_max); infinite ratios map to n_max.
int amplification(double ratio, const RampingConfig& cfg);

// AdamW with per-element gradient accumulation.
class RampingAdamW {
public:
    RampingAdamW() = default;
    RampingAdamW(std::size_t n, AdamWParams params);

    std::size_t size() const noexcept { return m_.size(); }

    // Sets N_w per element. Pending partial accumulations are applied first
    // (see flush) so no gradient is dropped at a cadence change.
    void set_amplification(std::span<const int> n, std::span<double> w, double base_lr,
                           std::span<const std::uint8_t> frozen = {});

    // Applies every pending partial accumulation of k < N_w micro-steps as
    // one update with the mean gradient and learning rate k * base_lr.
    void flush(std::span<double> w, double base_lr, std::span<const std::uint8_t> frozen = {});

    // Accumulates g; elements whose phase reaches N_w apply an update.
    // Returns the number of elements updated this step.
    std::size_t step(std::span<double> w, std::span<const double> g, double base_lr,
                     std::span<const std::uint8_t> frozen = {});

    std::span<const int> amplification() const noexcept { return n_; }
    const AdamWParams& params() const noexcept { return params_; }

    // Raw state for checkpointing.
    std::vector<double>& m() noexcept { return m_; }
    std::vector<double>& v() noexcept { return v_; }
    std::vector<double>& accumulator() noexcept { return acc_; }
    std::vector<std::uint32_t>& phase() noexcept { return phase_; }
    std::vector<std::uint64_t>& updates() noexcept { return t_; }
    std::vector<int>& mutable_amplification() noexcept { return n_; }
    const std::vector<double>& m() const noexcept { return m_; }
    const std::vector<double>& v() const noexcept { return v_; }
    const std::vector<double>& accumulator() const noexcept { return acc_; }
    const std::vector<std::uint32_t>& phase() const noexcept { return phase_; }
    const std::vector<std::uint64_t>& updates() const noexcept { return t_; }

private:
    void apply(std::size_t i, double& w, double base_lr);

    AdamWParams params_{};
    std::vector<double> m_, v_, acc_;
    std::vector<std::uint32_t> phase_;
    std::vector<std::uint64_t> t_;
    std::vector<int> n_;
};

// What the detection pass drives: the flattened quantized-layer weights and
// the ability to take one ordinary (unamplified) training step.
class RampingTarget {
public:
    virtual ~RampingTarget() = default;
    // Flattened masters and their current forward-quantized values.
    virtual void snapshot(std::vector<double>& masters, std::vector<double>& quantized) = 0;
    virtual void plain_step() = 0;
};

struct DetectionResult {
    std::vector<double> ratios;
    std::vector<int> amplification;
    double oscillating_fraction = 0.0;  // R_w > k1
    std::vector<std::size_t> amplification_histogram;  // index = N_w, 1..n_max
};

// Runs cfg.t0 plain steps on `target`, tracking trajectories, then derives
// N_w. The steps are real training steps and stay applied.
DetectionResult detect_oscillation(RampingTarget& target, const RampingConfig& cfg);

// N_w from an already-filled tracker.
DetectionResult amplification_from_tracker(const TrajectoryTracker& tracker, const RampingConfig& cfg);

}  // namespace mxfp4
