// SPDX-License-Identifier: Apache-2.0
//
// On-disk tensor formats, little-endian throughout.
//
// MXT1 (quantized):
//   "MXT1" | u32 rows | u32 cols | u8 axis (0 row-groups, 1 column-groups)
//   | u8 format id (0 E2M1, 1 E3M0) | blocks in row-major group order,
//   17 bytes each (see serialize_block). Ragged block lengths follow from
//   rows/cols.
//
// MXD1 (dense master-precision input for the quantize tool):
//   "MXD1" | u32 rows | u32 cols | rows*cols IEEE-754 binary64, row-major.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mxfp4/matrix.hpp"
#include "mxfp4/quantized_matrix.hpp"

namespace mxfp4 {

std::vector<std::uint8_t> encode_mxt1(const QuantizedMatrix& qm);
QuantizedMatrix decode_mxt1(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_mxd1(const Matrix& m);
Matrix decode_mxd1(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mxfp4
