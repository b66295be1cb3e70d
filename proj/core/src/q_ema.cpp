// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/q_ema.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mxfp4/error.hpp"

namespace mxfp4 {

EmaState::EmaState(const Matrix& w0, double b) : w_ema(w0), beta(b) {
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("quantizer.beta", "EMA momentum must be in [0, 1)");
}

void update_ema(EmaState& state, const Matrix& w_t) {
    if (state.w_ema.rows() != w_t.rows() || state.w_ema.cols() != w_t.cols()) {
        throw ContractError("update_ema: shape mismatch");
    }
    const double keep = state.beta;
    const double take = 1.0 - state.beta;
    auto ema = state.w_ema.values();
    auto w = w_t.values();
    for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = keep * ema[i] + take * w[i];
}

MxBlock quantize_block_ema(std::span<const double> w, std::span<const double> ema,
                           const Fp4Format& fmt) {
    if (w.size() != ema.size()) throw ContractError("quantize_block_ema: block sizes differ");
    const MxScale scale = compute_scale_truncation_free(w, fmt);
    MxBlock block;
    block.format = fmt.id;
    block.scale = scale;
    block.len = static_cast<std::uint8_t>(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(ema[i])) throw InvalidInputError("non-finite EMA value");
        const double latent = std::clamp(std::ldexp(w[i], -scale.exponent), fmt.q_neg, fmt.q_pos);
        const auto [q1, q2] = bracket(latent, fmt);
        const double ema_latent = std::ldexp(ema[i], -scale.exponent);
        const double q = std::fabs(ema_latent - q1) < std::fabs(ema_latent - q2) ? q1 : q2;
        block.codes[i] = encode(q, fmt);
    }
    return block;
}

QuantizedMatrix quantize_matrix_ema(const Matrix& w, const Matrix& ema, Axis axis, FormatId format,
                                    QuantizerId provenance) {
    if (w.rows() != ema.rows() || w.cols() != ema.cols()) {
        throw ContractError("quantize_matrix_ema: shape mismatch");
    }
    const Fp4Format& fmt = format_of(format);
    QuantizedMatrix qm{w.rows(), w.cols(), axis, format, provenance, {}};
    const std::size_t n = block_count(w.rows(), w.cols(), axis);
    qm.blocks.reserve(n);
    std::array<double, kBlockSize> wb{}, eb{};
    for (std::size_t b = 0; b < n; ++b) {
        const BlockLayout lay = block_layout(w.rows(), w.cols(), axis, b);
        for (std::size_t i = 0; i < lay.len; ++i) {
            wb[i] = w.data()[lay.offset + i * lay.stride];
            eb[i] = ema.data()[lay.offset + i * lay.stride];
        }
        qm.blocks.push_back(quantize_block_ema({wb.data(), lay.len}, {eb.data(), lay.len}, fmt));
    }
    return qm;
}

}  // namespace mxfp4
