// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/mx_linear.hpp"

#include <string>

#include "mxfp4/error.hpp"
#include "mxfp4/q_ema.hpp"

namespace mxfp4 {

QuantizerMask QuantizerMask::only(int index) {
    if (index < 1 || index > 6) throw ConfigError("quant.mask", "quantizer index must be 1..6");
    QuantizerMask m = all_off();
    m.enabled[static_cast<std::size_t>(index - 1)] = true;
    return m;
}

QuantizerMask QuantizerMask::parse(const std::string& bits) {
    if (bits.size() != 6) throw ConfigError("quant.mask", "expected six 0/1 characters");
    QuantizerMask m;
    for (std::size_t i = 0; i < 6; ++i) {
        if (bits[i] != '0' && bits[i] != '1') throw ConfigError("quant.mask", "expected 0 or 1");
        m.enabled[i] = bits[i] == '1';
    }
    return m;
}

bool QuantizerMask::any() const noexcept {
    for (bool e : enabled) {
        if (e) return true;
    }
    return false;
}

std::string QuantizerMask::to_string() const {
    std::string s;
    for (bool e : enabled) s.push_back(e ? '1' : '0');
    return s;
}

namespace {

Operand quantized_operand(const Matrix& m, Axis axis, const QuantSpec& spec, const RngContext* rng,
                          QuantizerId id) {
    QuantizedMatrix qm = quantize_matrix(m, axis, spec, rng, id);
    Matrix values = dequantize_matrix(qm);
    return {std::move(values), std::move(qm)};
}

// Applies quantizer `index` if enabled, identity otherwise.
Operand apply(int index, const Matrix& m, Axis axis, FormatId format, Rounding rounding,
              const LinearQuantConfig& cfg, const RngContext& rng) {
    if (!cfg.mask.on(index)) return {m, std::nullopt};
    const RngContext ctx = rng.with_tensor(quantizer_tensor_id(rng.tensor, index));
    return quantized_operand(m, axis, {format, cfg.scale_rule, rounding}, &ctx,
                             static_cast<QuantizerId>(index));
}

// The MX product of a first and second operand; enforces the group
// orientation of whichever operands are quantized.
Matrix operand_product(const Operand& a, const Operand& b) {
    if (a.quantized && a.quantized->axis != Axis::RowGroups) {
        throw ContractError("first matmul operand must use 1x32 row groups");
    }
    if (b.quantized && b.quantized->axis != Axis::ColGroups) {
        throw ContractError("second matmul operand must use 32x1 column groups");
    }
    return matmul(a.values, b.values);
}

void check_tapes(const Matrix& grad_y, const LinearLayerTapes& tapes) {
    if (tapes.x.values.empty() || tapes.w_t.values.empty()) {
        throw ContractError("backward called without forward tapes");
    }
    if (tapes.x.values.cols() != tapes.w_t.values.rows()) {
        throw ContractError("tapes are inconsistent with each other");
    }
    if (grad_y.rows() != tapes.x.values.rows() || grad_y.cols() != tapes.w_t.values.cols()) {
        throw ContractError("grad_y " + std::to_string(grad_y.rows()) + "x" +
                            std::to_string(grad_y.cols()) + " does not match the forward tapes");
    }
}

}  // namespace

LinearForward linear_forward(const Matrix& x, const Matrix& w, const LinearQuantConfig& cfg,
                             const Matrix* w_ema) {
    if (x.cols() != w.cols()) {
        throw ContractError("linear_forward: x has " + std::to_string(x.cols()) +
                            " features, w expects " + std::to_string(w.cols()));
    }
    const RngContext none{};
    LinearLayerTapes tapes;
    tapes.x = apply(1, x, Axis::RowGroups, cfg.forward_format, Rounding::Deterministic, cfg, none);
    const Matrix w_t = transpose(w);
    if (cfg.mask.on(2) && w_ema != nullptr) {
        QuantizedMatrix qm =
            quantize_matrix_ema(w_t, transpose(*w_ema), Axis::ColGroups, cfg.forward_format);
        Matrix values = dequantize_matrix(qm);
        tapes.w_t = {std::move(values), std::move(qm)};
    } else {
        tapes.w_t = apply(2, w_t, Axis::ColGroups, cfg.forward_format, Rounding::Deterministic, cfg, none);
    }
    Matrix y = operand_product(tapes.x, tapes.w_t);
    return {std::move(y), std::move(tapes)};
}

LinearGrads backward_tetrajet(const Matrix& grad_y, const LinearLayerTapes& tapes,
                              const LinearQuantConfig& cfg, const RngContext& rng) {
    check_tapes(grad_y, tapes);
    const Rounding r = cfg.backward_rounding;
    const Operand g3 = apply(3, grad_y, Axis::RowGroups, cfg.grad_format, r, cfg, rng);
    const Operand w4 = apply(4, transpose(tapes.w_t.values), Axis::ColGroups, cfg.forward_format, r, cfg, rng);
    const Operand g5 = apply(5, transpose(grad_y), Axis::RowGroups, cfg.grad_format, r, cfg, rng);
    const Operand x6 = apply(6, tapes.x.values, Axis::ColGroups, cfg.forward_format, r, cfg, rng);
    return {operand_product(g3, w4), operand_product(g5, x6)};
}

LinearGrads backward_microscaling(const Matrix& grad_y, const Matrix& x, const Matrix& w,
                                  const LinearQuantConfig& cfg, const RngContext& rng) {
    if (x.cols() != w.cols() || grad_y.rows() != x.rows() || grad_y.cols() != w.rows()) {
        throw ContractError("backward_microscaling: shape mismatch");
    }
    const Rounding r = cfg.backward_rounding;
    const Operand g3 = apply(3, grad_y, Axis::RowGroups, cfg.grad_format, r, cfg, rng);
    const Operand w4 = apply(4, w, Axis::ColGroups, cfg.forward_format, r, cfg, rng);
    const Operand g5 = apply(5, transpose(grad_y), Axis::RowGroups, cfg.grad_format, r, cfg, rng);
    const Operand x6 = apply(6, x, Axis::ColGroups, cfg.forward_format, r, cfg, rng);
    return {operand_product(g3, w4), operand_product(g5, x6)};
}

LinearGrads ste_reference_grad(const Matrix& grad_y, const LinearLayerTapes& tapes) {
    check_tapes(grad_y, tapes);
    return {matmul(grad_y, transpose(tapes.w_t.values)), matmul(transpose(grad_y), tapes.x.values)};
}

}  // namespace mxfp4
