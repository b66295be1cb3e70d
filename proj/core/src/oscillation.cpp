// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/oscillation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

void TrajectoryTracker::reset(std::span<const double> w, std::span<const double> wq) {
    if (w.size() != wq.size()) throw ContractError("TrajectoryTracker: master/quantized sizes differ");
    prev_w_.assign(w.begin(), w.end());
    prev_q_.assign(wq.begin(), wq.end());
    dist_w_.assign(w.size(), 0.0);
    dist_q_.assign(w.size(), 0.0);
    steps_ = 0;
}

void TrajectoryTracker::update(std::span<const double> w, std::span<const double> wq) {
    if (w.size() != prev_w_.size() || wq.size() != prev_q_.size()) {
        throw ContractError("TrajectoryTracker: shape mismatch (" + std::to_string(w.size()) +
                            " vs " + std::to_string(prev_w_.size()) + ")");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        dist_w_[i] += std::fabs(w[i] - prev_w_[i]);
        dist_q_[i] += std::fabs(wq[i] - prev_q_[i]);
        prev_w_[i] = w[i];
        prev_q_[i] = wq[i];
    }
    ++steps_;
}

std::vector<double> oscillation_ratio(const TrajectoryTracker& tracker) {
    const auto dw = tracker.dist_w();
    const auto dq = tracker.dist_q();
    std::vector<double> r(dw.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (dw[i] > 0.0) {
            r[i] = dq[i] / dw[i];
        } else {
            r[i] = dq[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        }
    }
    return r;
}

OscillationSummary classify_oscillating(std::span<const double> ratios, double threshold) {
    OscillationSummary s;
    s.mask.resize(ratios.size());
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        s.mask[i] = ratios[i] > threshold;
        s.count += s.mask[i] ? 1 : 0;
    }
    s.fraction = ratios.empty() ? 0.0 : static_cast<double>(s.count) / static_cast<double>(ratios.size());
    return s;
}

std::vector<double> latent_weights(const Matrix& w, const QuantizedMatrix& q) {
    if (w.rows() != q.rows || w.cols() != q.cols) throw ContractError("latent_weights: shape mismatch");
    std::vector<double> latent(w.size());
    for (std::size_t b = 0; b < q.blocks.size(); ++b) {
        const BlockLayout lay = block_layout(q.rows, q.cols, q.axis, b);
        const int s = q.blocks[b].scale.exponent;
        for (std::size_t i = 0; i < lay.len; ++i) {
            const std::size_t at = lay.offset + i * lay.stride;
            latent[at] = std::ldexp(w.data()[at], -s);
        }
    }
    return latent;
}

double quant_confidence(double latent, const Fp4Format& fmt) {
    if (!std::isfinite(latent) || latent < fmt.q_neg || latent > fmt.q_pos) {
        throw RangeError("latent " + std::to_string(latent) + " outside the format range");
    }
    const auto& t = fmt.thresholds;
    double nearest = std::numeric_limits<double>::infinity();
    for (double thr : t) nearest = std::min(nearest, std::fabs(latent - thr));

    const double q = round_deterministic(latent, fmt);
    const auto k = static_cast<std::size_t>(
        std::find(fmt.grid.begin(), fmt.grid.end(), q) - fmt.grid.begin());
    // Largest distance-to-threshold attainable inside q's rounding cell:
    // half the cell for interior cells, the whole cell for the two end cells
    // whose far edge is +-Qp.
    double max_dist;
    if (k == 0) {
        max_dist = t.front() - fmt.q_neg;
    } else if (k == kGridSize - 1) {
        max_dist = fmt.q_pos - t.back();
    } else {
        max_dist = 0.5 * (t[k] - t[k - 1]);
    }
    return std::clamp(nearest / max_dist, 0.0, 1.0);
}

ConfidenceReport confidence_report(std::span<const double> latents, const Fp4Format& fmt,
                                   std::size_t bins) {
    if (bins == 0) throw ContractError("confidence_report: zero bins");
    ConfidenceReport rep;
    rep.confidence.reserve(latents.size());
    rep.histogram.assign(bins, 0);
    for (double l : latents) {
        const double c = quant_confidence(l, fmt);
        rep.confidence.push_back(c);
        const auto bin = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
        ++rep.histogram[bin];
    }
    return rep;
}

void ChangeRateAccumulator::observe(std::span<const double> x) {
    if (prev_.empty()) {
        prev_.assign(x.begin(), x.end());
        return;
    }
    if (x.size() != prev_.size()) throw ContractError("ChangeRateAccumulator: shape changed");
    double diff = 0.0;
    double base = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - prev_[i];
        diff += d * d;
        base += prev_[i] * prev_[i];
    }
    if (base > 0.0) {
        sum_ += std::sqrt(diff) / std::sqrt(base);
        ++steps_;
    } else {
        ++skipped_;
    }
    prev_.assign(x.begin(), x.end());
}

void ChangeRateAccumulator::reset() noexcept {
    prev_.clear();
    sum_ = 0.0;
    steps_ = 0;
    skipped_ = 0;
}

double rate_of_change(const ChangeRateAccumulator& acc) {
    if (acc.steps() == 0) throw ContractError("rate_of_change: no steps recorded");
    return acc.sum() / static_cast<double>(acc.steps());
}

FlipFrequency::FlipFrequency(std::size_t n, double momentum) : f_(n, 0.0), momentum_(momentum) {
    if (!(momentum > 0.0 && momentum < 1.0)) {
        throw ConfigError("baseline.momentum", "flip-frequency momentum must be in (0, 1)");
    }
}

void FlipFrequency::update(const std::vector<bool>& flips) {
    if (flips.size() != f_.size()) throw ContractError("FlipFrequency: size mismatch");
    for (std::size_t i = 0; i < f_.size(); ++i) {
        f_[i] = momentum_ * f_[i] + (1.0 - momentum_) * (flips[i] ? 1.0 : 0.0);
    }
}

void FlipFrequency::update(std::span<const double> prev_q, std::span<const double> cur_q) {
    if (prev_q.size() != f_.size() || cur_q.size() != f_.size()) {
        throw ContractError("FlipFrequency: size mismatch");
    }
    for (std::size_t i = 0; i < f_.size(); ++i) {
        const double flip = prev_q[i] != cur_q[i] ? 1.0 : 0.0;
        f_[i] = momentum_ * f_[i] + (1.0 - momentum_) * flip;
    }
}

std::vector<double> flip_frequency(const std::vector<std::vector<bool>>& history, double momentum) {
    if (history.empty()) return {};
    FlipFrequency ff(history.front().size(), momentum);
    for (const auto& step : history) ff.update(step);
    return {ff.values().begin(), ff.values().end()};
}

}  // namespace mxfp4
