// SPDX-License-Identifier: Apache-2.0
//
// MX block quantization: up to 32 FP4 codes sharing one power-of-two scale.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mxfp4/fp4_format.hpp"
#include "mxfp4/rng.hpp"

namespace mxfp4 {

inline constexpr std::size_t kBlockSize = 32;
inline constexpr std::size_t kBlockBytes = 17;
inline constexpr int kMaxScaleExponent = 127;
// Substitute for an all-zero block maximum.
inline constexpr double kZeroBlockEpsilon = 1e-8;

enum class ScaleRule : std::uint8_t {
    TruncationFree,  // s = ceil(log2(2M / (Qp - Qn)))
    Microscaling,    // s = floor(log2 M) - e_max
};

enum class Rounding : std::uint8_t { Deterministic, Stochastic };

// E8M0 shared scale S = 2^exponent.
struct MxScale {
    std::int8_t exponent = 0;

    double value() const noexcept { return std::ldexp(1.0, exponent); }
    friend bool operator==(MxScale, MxScale) = default;
};

struct MxBlock {
    FormatId format = FormatId::E2M1;
    std::array<Fp4Code, kBlockSize> codes{};
    MxScale scale{};
    std::uint8_t len = 0;

    friend bool operator==(const MxBlock&, const MxBlock&) = default;
};

MxScale compute_scale_truncation_free(std::span<const double> values, const Fp4Format& fmt);
MxScale compute_scale_microscaling(std::span<const double> values, const Fp4Format& fmt);
MxScale compute_scale(std::span<const double> values, const Fp4Format& fmt, ScaleRule rule);

// Quantizes 1..32 values. Stochastic rounding needs `rng`; it draws exactly
// one uniform per element. Scaled values beyond +-Qp (baseline scaling) are
// clamped before rounding.
MxBlock quantize_block(std::span<const double> values, const Fp4Format& fmt, ScaleRule rule,
                       Rounding rounding, RandomStream* rng = nullptr);

// Same, with a caller-supplied scale.
MxBlock quantize_block_with_scale(std::span<const double> values, const Fp4Format& fmt,
                                  MxScale scale, Rounding rounding, RandomStream* rng = nullptr);

void dequantize_block(const MxBlock& block, std::span<double> out);
std::vector<double> dequantize_block(const MxBlock& block);

// 16 bytes of packed codes (low nibble = even index, unused nibbles zero)
// followed by the scale exponent as a two's-complement byte.
std::array<std::uint8_t, kBlockBytes> serialize_block(const MxBlock& block);

// `len` comes from the enclosing container. Throws FormatError when fewer
// than 17 bytes are supplied or the length is out of range.
MxBlock deserialize_block(std::span<const std::uint8_t> bytes, FormatId format, std::size_t len);

}  // namespace mxfp4
