// SPDX-License-Identifier: Apache-2.0
//
// Quantized linear layer Y = X W^T with six MX quantizers:
//
//   forward   Y   = Q1(X) * Q2(W^T)                       deterministic
//   backward  dX  = Q3(dY) * Q4(Q2(W^T)^T)                stochastic
//             dW  = Q5(dY^T) * Q6(Q1(X))                  stochastic
//
// Q1, Q3, Q5 use 1x32 groups (first matmul operand) and Q2, Q4, Q6 use 32x1
// groups (second operand). Q4 and Q6 re-quantize the forward tapes rather
// than the masters, so the backward pass estimates the straight-through
// gradient of the forward that was actually computed, without bias.
//
// backward_microscaling() is the baseline scheme that re-quantizes the
// full-precision X and W along the backward axes instead; it differs from
// the straight-through gradient whenever Q(W) along one axis is not the
// transpose of Q(W^T) along the other.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "mxfp4/matrix.hpp"
#include "mxfp4/quantized_matrix.hpp"
#include "mxfp4/rng.hpp"

namespace mxfp4 {

// Enables each quantizer independently; a disabled quantizer is identity.
struct QuantizerMask {
    std::array<bool, 6> enabled{true, true, true, true, true, true};

    static QuantizerMask all_on() noexcept { return {}; }
    static QuantizerMask all_off() noexcept { return {{false, false, false, false, false, false}}; }
    // Only Q`index` (1-based) active.
    static QuantizerMask only(int index);
    // Parses a six-character string of '0'/'1', Q1 first.
    static QuantizerMask parse(const std::string& bits);

    bool on(int index) const { return enabled.at(static_cast<std::size_t>(index - 1)); }
    bool any() const noexcept;
    std::string to_string() const;

    friend bool operator==(const QuantizerMask&, const QuantizerMask&) = default;
};

enum class GradientPath : std::uint8_t { DoubleQuantization, Microscaling };

struct LinearQuantConfig {
    QuantizerMask mask;
    FormatId forward_format = FormatId::E2M1;  // Q1, Q2, Q4, Q6
    FormatId grad_format = FormatId::E2M1;     // Q3, Q5
    ScaleRule scale_rule = ScaleRule::TruncationFree;
    Rounding backward_rounding = Rounding::Stochastic;
};

// A matmul operand: the exact values fed to the product, plus the MX
// representation when its quantizer was enabled.
struct Operand {
    Matrix values;
    std::optional<QuantizedMatrix> quantized;
};

// Forward-quantized operands retained for the backward pass.
struct LinearLayerTapes {
    Operand x;        // Q1(X), N x D, row groups
    Operand w_t;      // Q2(W^T), D x C, column groups
};

struct LinearForward {
    Matrix y;
    LinearLayerTapes tapes;
};

struct LinearGrads {
    Matrix grad_x;
    Matrix grad_w;
};

// x is N x D, w is C x D. When `w_ema` is given (C x D), Q2 is the EMA
// quantizer instead of round-to-nearest.
LinearForward linear_forward(const Matrix& x, const Matrix& w, const LinearQuantConfig& cfg,
                             const Matrix* w_ema = nullptr);

// Random streams for quantizer i are drawn from tensor id rng.tensor * 8 + i.
LinearGrads backward_tetrajet(const Matrix& grad_y, const LinearLayerTapes& tapes,
                              const LinearQuantConfig& cfg, const RngContext& rng);

LinearGrads backward_microscaling(const Matrix& grad_y, const Matrix& x, const Matrix& w,
                                  const LinearQuantConfig& cfg, const RngContext& rng);

// dX = dY * Q2(W^T)^T and dW = dY^T * Q1(X), densely.
LinearGrads ste_reference_grad(const Matrix& grad_y, const LinearLayerTapes& tapes);

// Random substream tensor id of quantizer `index` within layer `layer_tensor`.
inline std::uint32_t quantizer_tensor_id(std::uint32_t layer_tensor, int index) noexcept {
    return layer_tensor * 8u + static_cast<std::uint32_t>(index);
}

}  // namespace mxfp4
