// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/quantized_matrix.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

namespace {

std::size_t groups(std::size_t n) noexcept { return (n + kBlockSize - 1) / kBlockSize; }

}  // namespace

std::size_t block_count(std::size_t rows, std::size_t cols, Axis axis) noexcept {
    return axis == Axis::RowGroups ? rows * groups(cols) : cols * groups(rows);
}

BlockLayout block_layout(std::size_t rows, std::size_t cols, Axis axis, std::size_t b) noexcept {
    if (axis == Axis::RowGroups) {
        const std::size_t per_row = groups(cols);
        const std::size_t r = b / per_row;
        const std::size_t c0 = (b % per_row) * kBlockSize;
        return {r * cols + c0, 1, std::min(kBlockSize, cols - c0)};
    }
    const std::size_t group_row = b / cols;
    const std::size_t c = b % cols;
    const std::size_t r0 = group_row * kBlockSize;
    return {r0 * cols + c, cols, std::min(kBlockSize, rows - r0)};
}

QuantizedMatrix quantize_matrix(const Matrix& m, Axis axis, const QuantSpec& spec,
                                const RngContext* rng, QuantizerId provenance) {
    if (spec.rounding == Rounding::Stochastic && rng == nullptr) {
        throw ContractError("quantize_matrix: stochastic rounding requires an RNG context");
    }
    const Fp4Format& fmt = format_of(spec.format);
    QuantizedMatrix qm{m.rows(), m.cols(), axis, spec.format, provenance, {}};
    const std::size_t n = block_count(m.rows(), m.cols(), axis);
    qm.blocks.reserve(n);
    std::array<double, kBlockSize> buf{};
    for (std::size_t b = 0; b < n; ++b) {
        const BlockLayout lay = block_layout(m.rows(), m.cols(), axis, b);
        for (std::size_t i = 0; i < lay.len; ++i) buf[i] = m.data()[lay.offset + i * lay.stride];
        const std::span<const double> vals(buf.data(), lay.len);
        if (spec.rounding == Rounding::Stochastic) {
            RandomStream stream = rng->block_stream(static_cast<std::uint32_t>(b));
            qm.blocks.push_back(quantize_block(vals, fmt, spec.scale_rule, spec.rounding, &stream));
        } else {
            qm.blocks.push_back(quantize_block(vals, fmt, spec.scale_rule, spec.rounding));
        }
    }
    return qm;
}

Matrix dequantize_matrix(const QuantizedMatrix& qm) {
    if (qm.blocks.size() != block_count(qm.rows, qm.cols, qm.axis)) {
        throw ContractError("dequantize_matrix: block count does not match shape");
    }
    Matrix out(qm.rows, qm.cols);
    std::array<double, kBlockSize> buf{};
    for (std::size_t b = 0; b < qm.blocks.size(); ++b) {
        const BlockLayout lay = block_layout(qm.rows, qm.cols, qm.axis, b);
        if (qm.blocks[b].len != lay.len) {
            throw ContractError("dequantize_matrix: block " + std::to_string(b) + " has length " +
                                std::to_string(qm.blocks[b].len) + ", layout expects " +
                                std::to_string(lay.len));
        }
        dequantize_block(qm.blocks[b], buf);
        for (std::size_t i = 0; i < lay.len; ++i) out.data()[lay.offset + i * lay.stride] = buf[i];
    }
    return out;
}

Matrix mx_matmul(const QuantizedMatrix& a, const QuantizedMatrix& b) {
    if (a.axis != Axis::RowGroups || b.axis != Axis::ColGroups) {
        throw ContractError("mx_matmul: operands must be (RowGroups, ColGroups)");
    }
    if (a.cols != b.rows) {
        throw ContractError("mx_matmul: inner dimensions " + std::to_string(a.cols) + " vs " +
                            std::to_string(b.rows));
    }
    return matmul(dequantize_matrix(a), dequantize_matrix(b));
}

}  // namespace mxfp4
