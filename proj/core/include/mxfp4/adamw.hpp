// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mxfp4 {

struct AdamWParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

// One decoupled-weight-decay Adam update of a single element with
// bias-correction timestep `t` (1-based). Shared by every optimizer here so
// that equal inputs give bit-identical results.
inline void adamw_update(double& w, double g, double& m, double& v, std::uint64_t t, double lr,
                         const AdamWParams& p) noexcept {
    w -= lr * p.weight_decay * w;
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(p.beta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(p.beta2, static_cast<double>(t)));
    w -= lr * m_hat / (std::sqrt(v_hat) + p.eps);
}

// Plain AdamW over one flat parameter tensor. Elements flagged in `frozen`
// are skipped entirely (value and moments untouched).
class AdamW {
public:
    AdamW() = default;
    AdamW(std::size_t n, AdamWParams params) : params_(params), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> w, std::span<const double> g, double lr,
              std::span<const std::uint8_t> frozen = {});

    const AdamWParams& params() const noexcept { return params_; }
    std::uint64_t steps() const noexcept { return t_; }

    // Raw state for checkpointing.
    std::vector<double>& m() noexcept { return m_; }
    std::vector<double>& v() noexcept { return v_; }
    std::uint64_t& t() noexcept { return t_; }
    const std::vector<double>& m() const noexcept { return m_; }
    const std::vector<double>& v() const noexcept { return v_; }
    std::uint64_t t() const noexcept { return t_; }

private:
    AdamWParams params_{};
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace mxfp4
