// SPDX-License-Identifier: Apache-2.0
//
// Matrix-level MX quantization along a declared grouping axis.
//
//   RowGroups: 1x32 groups along each row (first operand of an MX matmul).
//   ColGroups: 32x1 groups down each column (second operand).
//
// Blocks are stored in row-major group order. For RowGroups that is
// (row, group) with ceil(cols/32) groups per row; for ColGroups it is
// (group-row, column) with ceil(rows/32) group-rows. A trailing group
// shorter than 32 is quantized over its actual elements only.
#pragma once

#include <cstdint>
#include <vector>

#include "mxfp4/matrix.hpp"
#include "mxfp4/mx_block.hpp"
#include "mxfp4/rng.hpp"

namespace mxfp4 {

enum class Axis : std::uint8_t { RowGroups = 0, ColGroups = 1 };

// Which of the six linear-layer quantizers produced a matrix.
enum class QuantizerId : std::uint8_t { None = 0, Q1, Q2, Q3, Q4, Q5, Q6 };

struct QuantSpec {
    FormatId format = FormatId::E2M1;
    ScaleRule scale_rule = ScaleRule::TruncationFree;
    Rounding rounding = Rounding::Deterministic;
};

struct QuantizedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Axis axis = Axis::RowGroups;
    FormatId format = FormatId::E2M1;
    QuantizerId provenance = QuantizerId::None;
    std::vector<MxBlock> blocks;

    friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;
};

std::size_t block_count(std::size_t rows, std::size_t cols, Axis axis) noexcept;

// Element positions of block `b`: first element (row, col), element stride,
// and length. Positions are row * cols + col offsets into a row-major buffer.
struct BlockLayout {
    std::size_t offset;
    std::size_t stride;
    std::size_t len;
};
BlockLayout block_layout(std::size_t rows, std::size_t cols, Axis axis, std::size_t b) noexcept;

// Stochastic specs need `rng`; block b draws from rng->block_stream(b).
QuantizedMatrix quantize_matrix(const Matrix& m, Axis axis, const QuantSpec& spec,
                                const RngContext* rng = nullptr,
                                QuantizerId provenance = QuantizerId::None);

Matrix dequantize_matrix(const QuantizedMatrix& qm);

// Simulated MX GEMM: dequantize(a) * dequantize(b) in master precision.
// Requires a in RowGroups and b in ColGroups; throws ContractError otherwise.
Matrix mx_matmul(const QuantizedMatrix& a, const QuantizedMatrix& b);

}  // namespace mxfp4
