// SPDX-License-Identifier: Apache-2.0
//
// EMA weight quantizer. The block scale and the two rounding candidates come
// from the current master weights; the choice between the candidates is made
// by whichever is closer to the exponential moving average of the masters.
// A weight hovering around a rounding threshold therefore keeps the value
// its history points to instead of flipping on every small update.
#pragma once

#include <span>

#include "mxfp4/matrix.hpp"
#include "mxfp4/mx_block.hpp"
#include "mxfp4/quantized_matrix.hpp"

namespace mxfp4 {

inline constexpr double kDefaultEmaBeta = 0.998;

struct EmaState {
    Matrix w_ema;
    double beta = kDefaultEmaBeta;

    EmaState() = default;
    // The average starts at the initial masters.
    EmaState(const Matrix& w0, double beta);
};

// w_ema <- beta * w_ema + (1 - beta) * w_t. Throws ContractError on shape
// mismatch.
void update_ema(EmaState& state, const Matrix& w_t);

// Truncation-free scale from `w`; each element picks between the bracket of
// w_i/S the candidate nearer ema_i/S, ties to the upper candidate.
MxBlock quantize_block_ema(std::span<const double> w, std::span<const double> ema,
                           const Fp4Format& fmt);

QuantizedMatrix quantize_matrix_ema(const Matrix& w, const Matrix& ema, Axis axis, FormatId format,
                                    QuantizerId provenance = QuantizerId::Q2);

}  // namespace mxfp4
