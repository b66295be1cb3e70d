// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/q_ramping.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

namespace {

bool is_frozen(std::span<const std::uint8_t> frozen, std::size_t i) {
    return !frozen.empty() && frozen[i] != 0;
}

}  // namespace

void RampingConfig::validate() const {
    if (!(k1 > 0.0)) throw ConfigError("optimizer.qramping.k1", "must be > 0");
    if (k2 < 1) throw ConfigError("optimizer.qramping.k2", "must be an integer >= 1");
    if (n_max < 1) throw ConfigError("optimizer.qramping.n_max", "must be >= 1");
    if (t0 < 1) throw ConfigError("optimizer.qramping.t0", "detection window must be >= 1 step");
    if (t0 >= t_update) {
        throw ConfigError("optimizer.qramping.t0,optimizer.qramping.t_update", "t0 must be < t_update");
    }
}

int amplification(double ratio, const RampingConfig& cfg) {
    if (std::isnan(ratio) || ratio < 0.0) throw InvalidInputError("oscillation ratio must be >= 0");
    if (std::isinf(ratio)) return cfg.n_max;
    const double level = std::floor(ratio / cfg.k1);
    // Compare in floating point first; level can exceed int range.
    const double n = static_cast<double>(cfg.k2) * level + 1.0;
    return n >= static_cast<double>(cfg.n_max) ? cfg.n_max : static_cast<int>(n);
}

RampingAdamW::RampingAdamW(std::size_t n, AdamWParams params)
    : params_(params), m_(n, 0.0), v_(n, 0.0), acc_(n, 0.0), phase_(n, 0), t_(n, 0), n_(n, 1) {}

void RampingAdamW::apply(std::size_t i, double& w, double base_lr) {
    const double k = static_cast<double>(phase_[i]);
    const double g = acc_[i] / k;
    ++t_[i];
    adamw_update(w, g, m_[i], v_[i], t_[i], k * base_lr, params_);
    acc_[i] = 0.0;
    phase_[i] = 0;
}

void RampingAdamW::flush(std::span<double> w, double base_lr, std::span<const std::uint8_t> frozen) {
    if (w.size() != size()) throw ContractError("RampingAdamW::flush: size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (phase_[i] == 0) continue;
        if (is_frozen(frozen, i)) {
            acc_[i] = 0.0;
            phase_[i] = 0;
            continue;
        }
        apply(i, w[i], base_lr);
    }
}

void RampingAdamW::set_amplification(std::span<const int> n, std::span<double> w, double base_lr,
                                     std::span<const std::uint8_t> frozen) {
    if (n.size() != size()) throw ContractError("RampingAdamW: amplification size mismatch");
    for (int a : n) {
        if (a < 1) throw InvalidInputError("amplification must be >= 1");
    }
    flush(w, base_lr, frozen);
    n_.assign(n.begin(), n.end());
}

std::size_t RampingAdamW::step(std::span<double> w, std::span<const double> g, double base_lr,
                               std::span<const std::uint8_t> frozen) {
    if (w.size() != size() || g.size() != size() || (!frozen.empty() && frozen.size() != size())) {
        throw ContractError("RampingAdamW::step: size mismatch");
    }
    std::size_t applied = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (is_frozen(frozen, i)) continue;
        acc_[i] += g[i];
        ++phase_[i];
        if (phase_[i] >= static_cast<std::uint32_t>(n_[i])) {
            apply(i, w[i], base_lr);
            ++applied;
        }
    }
    return applied;
}

DetectionResult amplification_from_tracker(const TrajectoryTracker& tracker, const RampingConfig& cfg) {
    DetectionResult res;
    res.ratios = oscillation_ratio(tracker);
    res.amplification.reserve(res.ratios.size());
    res.amplification_histogram.assign(static_cast<std::size_t>(cfg.n_max) + 1, 0);
    for (double r : res.ratios) {
        const int n = amplification(r, cfg);
        res.amplification.push_back(n);
        ++res.amplification_histogram[static_cast<std::size_t>(n)];
    }
    res.oscillating_fraction = classify_oscillating(res.ratios, cfg.k1).fraction;
    return res;
}

DetectionResult detect_oscillation(RampingTarget& target, const RampingConfig& cfg) {
    cfg.validate();
    std::vector<double> w, wq;
    target.snapshot(w, wq);
    TrajectoryTracker tracker;
    tracker.reset(w, wq);
    for (int t = 0; t < cfg.t0; ++t) {
        target.plain_step();
        target.snapshot(w, wq);
        tracker.update(w, wq);
    }
    return amplification_from_tracker(tracker, cfg);
}

}  // namespace mxfp4
