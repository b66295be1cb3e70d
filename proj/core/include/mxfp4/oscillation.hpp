// SPDX-License-Identifier: Apache-2.0
//
// Instability metrics for quantized training:
//
//   oscillation ratio   R_w = sum|w_Q^t - w_Q^(t-1)| / sum|w^t - w^(t-1)|
//   quant. confidence   distance of a latent weight w/S to the nearest
//                       rounding threshold, normalized to [0, 1]
//   rate of change      r(X) = mean_t ||X^t - X^(t-1)||_F / ||X^(t-1)||_F
//   flip frequency      f^t = m f^(t-1) + (1 - m) [w_Q flipped at t]
#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "mxfp4/fp4_format.hpp"
#include "mxfp4/matrix.hpp"
#include "mxfp4/quantized_matrix.hpp"

namespace mxfp4 {

inline constexpr double kOscillatingRatio = 16.0;
inline constexpr std::size_t kConfidenceBins = 50;

// Per-element trajectory lengths of masters and their quantized values over
// a window of steps.
class TrajectoryTracker {
public:
    TrajectoryTracker() = default;

    // Starts a new window at (w, wq); clears the accumulators.
    void reset(std::span<const double> w, std::span<const double> wq);
    // Adds |w - w_prev| and |wq - wq_prev| element-wise.
    void update(std::span<const double> w, std::span<const double> wq);

    std::size_t size() const noexcept { return dist_w_.size(); }
    std::size_t steps() const noexcept { return steps_; }
    std::span<const double> dist_w() const noexcept { return dist_w_; }
    std::span<const double> dist_q() const noexcept { return dist_q_; }

private:
    std::vector<double> prev_w_, prev_q_, dist_w_, dist_q_;
    std::size_t steps_ = 0;
};

// Element-wise dist_Q / dist_W. A still element (both zero) gets 0; a flip
// with no master motion gets +infinity.
std::vector<double> oscillation_ratio(const TrajectoryTracker& tracker);

struct OscillationSummary {
    std::vector<bool> mask;
    std::size_t count = 0;
    double fraction = 0.0;
};

OscillationSummary classify_oscillating(std::span<const double> ratios,
                                        double threshold = kOscillatingRatio);

// Latent weights w / S, with S the scale of the block holding each element.
std::vector<double> latent_weights(const Matrix& w, const QuantizedMatrix& q);

// Throws RangeError when the latent lies outside [Qn, Qp].
double quant_confidence(double latent, const Fp4Format& fmt);

struct ConfidenceReport {
    std::vector<double> confidence;
    std::vector<std::size_t> histogram;  // uniform bins on [0, 1], last bin closed
};

ConfidenceReport confidence_report(std::span<const double> latents, const Fp4Format& fmt,
                                   std::size_t bins = kConfidenceBins);

// Windowed mean of relative Frobenius step sizes of one tensor.
class ChangeRateAccumulator {
public:
    // First call sets the reference; later calls record one step each.
    // Steps from a zero-norm predecessor are skipped and counted.
    void observe(std::span<const double> x);
    void reset() noexcept;

    std::size_t steps() const noexcept { return steps_; }
    std::size_t skipped() const noexcept { return skipped_; }
    bool has_reference() const noexcept { return !prev_.empty(); }
    double sum() const noexcept { return sum_; }

private:
    std::vector<double> prev_;
    double sum_ = 0.0;
    std::size_t steps_ = 0;
    std::size_t skipped_ = 0;
};

// Throws ContractError before the first recorded step.
double rate_of_change(const ChangeRateAccumulator& acc);

// Element-wise EMA of quantization flips.
class FlipFrequency {
public:
    FlipFrequency() = default;
    FlipFrequency(std::size_t n, double momentum);

    void update(const std::vector<bool>& flips);
    // Flags elements whose quantized value changed between the snapshots.
    void update(std::span<const double> prev_q, std::span<const double> cur_q);

    std::span<const double> values() const noexcept { return f_; }
    std::vector<double>& mutable_values() noexcept { return f_; }
    double momentum() const noexcept { return momentum_; }

private:
    std::vector<double> f_;
    double momentum_ = 0.9;
};

// Replays a whole flip history (outer index = step) from f = 0.
std::vector<double> flip_frequency(const std::vector<std::vector<bool>>& history, double momentum);

}  // namespace mxfp4
