// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/mx_block.hpp"

#include <algorithm>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

namespace {

double block_max(std::span<const double> values) {
    if (values.empty()) throw InvalidInputError("empty block");
    if (values.size() > kBlockSize) {
        throw InvalidInputError("block of " + std::to_string(values.size()) + " elements");
    }
    double m = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidInputError("non-finite value in block");
        m = std::max(m, std::fabs(v));
    }
    return m == 0.0 ? kZeroBlockEpsilon : m;
}

MxScale saturate(int s) {
    return MxScale{static_cast<std::int8_t>(std::clamp(s, -kMaxScaleExponent, kMaxScaleExponent))};
}

}  // namespace

MxScale compute_scale_truncation_free(std::span<const double> values, const Fp4Format& fmt) {
    const double m = block_max(values);
    // Smallest s with m / 2^s <= (Qp - Qn) / 2, decided by exact comparisons
    // against power-of-two multiples rather than a rounded log2.
    const double half_range = 0.5 * (fmt.q_pos - fmt.q_neg);
    int s = std::ilogb(m / half_range) + 1;
    while (std::ldexp(half_range, s - 1) >= m) --s;
    while (std::ldexp(half_range, s) < m) ++s;
    return saturate(s);
}

MxScale compute_scale_microscaling(std::span<const double> values, const Fp4Format& fmt) {
    // ilogb is floor(log2 m) for every finite non-zero double.
    return saturate(std::ilogb(block_max(values)) - fmt.e_max);
}

MxScale compute_scale(std::span<const double> values, const Fp4Format& fmt, ScaleRule rule) {
    return rule == ScaleRule::TruncationFree ? compute_scale_truncation_free(values, fmt)
                                             : compute_scale_microscaling(values, fmt);
}

namespace {

const std::array<Fp4Code, kGridSize>& grid_codes(const Fp4Format& fmt) {
    static const auto table = [] {
        std::array<std::array<Fp4Code, kGridSize>, 2> t{};
        for (const Fp4Format* f : {&e2m1(), &e3m0()}) {
            for (std::size_t i = 0; i < kGridSize; ++i) t[f == &e2m1() ? 0 : 1][i] = encode(f->grid[i], *f);
        }
        return t;
    }();
    return table[fmt.id == FormatId::E2M1 ? 0 : 1];
}

}  // namespace

MxBlock quantize_block_with_scale(std::span<const double> values, const Fp4Format& fmt,
                                  MxScale scale, Rounding rounding, RandomStream* rng) {
    if (values.empty() || values.size() > kBlockSize) {
        throw InvalidInputError("block of " + std::to_string(values.size()) + " elements");
    }
    if (rounding == Rounding::Stochastic && rng == nullptr) {
        throw ContractError("stochastic rounding requires a random stream");
    }
    const auto& g = fmt.grid;
    const auto& codes = grid_codes(fmt);
    MxBlock block;
    block.format = fmt.id;
    block.scale = scale;
    block.len = static_cast<std::uint8_t>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw InvalidInputError("non-finite value in block");
        // Division by a power of two is exact barring underflow.
        const double latent = std::clamp(std::ldexp(values[i], -scale.exponent), fmt.q_neg, fmt.q_pos);
        // Bracket latent between grid[lo] <= latent <= grid[hi].
        std::size_t lo = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), latent) - g.begin()) - 1;
        std::size_t pick = lo;
        if (g[lo] != latent) {
            const std::size_t hi = lo + 1;
            if (rounding == Rounding::Deterministic) {
                pick = std::fabs(latent - g[lo]) < std::fabs(latent - g[hi]) ? lo : hi;
            } else {
                const double xi = (rng->uniform() - 0.5) * (g[hi] - g[lo]);
                pick = latent + xi < 0.5 * (g[lo] + g[hi]) ? lo : hi;
            }
        } else if (rounding == Rounding::Stochastic) {
            rng->uniform();  // one draw per element keeps streams aligned
        }
        block.codes[i] = codes[pick];
    }
    return block;
}

MxBlock quantize_block(std::span<const double> values, const Fp4Format& fmt, ScaleRule rule,
                       Rounding rounding, RandomStream* rng) {
    return quantize_block_with_scale(values, fmt, compute_scale(values, fmt, rule), rounding, rng);
}

void dequantize_block(const MxBlock& block, std::span<double> out) {
    const Fp4Format& fmt = format_of(block.format);
    if (out.size() < block.len) throw ContractError("dequantize_block: output too small");
    for (std::size_t i = 0; i < block.len; ++i) {
        out[i] = std::ldexp(decode(block.codes[i], fmt), block.scale.exponent);
    }
}

std::vector<double> dequantize_block(const MxBlock& block) {
    std::vector<double> out(block.len);
    dequantize_block(block, out);
    return out;
}

std::array<std::uint8_t, kBlockBytes> serialize_block(const MxBlock& block) {
    std::array<std::uint8_t, kBlockBytes> bytes{};
    for (std::size_t i = 0; i < block.len; ++i) {
        const std::uint8_t nib = block.codes[i].bits & 0x0Fu;
        bytes[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? nib : nib << 4);
    }
    bytes[16] = static_cast<std::uint8_t>(block.scale.exponent);
    return bytes;
}

MxBlock deserialize_block(std::span<const std::uint8_t> bytes, FormatId format, std::size_t len) {
    if (bytes.size() < kBlockBytes) {
        throw FormatError("truncated block: " + std::to_string(bytes.size()) + " of 17 bytes");
    }
    if (len == 0 || len > kBlockSize) {
        throw FormatError("invalid block length " + std::to_string(len));
    }
    const auto exponent = static_cast<std::int8_t>(bytes[16]);
    if (exponent < -kMaxScaleExponent) throw FormatError("scale exponent -128 is reserved");
    MxBlock block;
    block.format = format;
    block.len = static_cast<std::uint8_t>(len);
    block.scale = MxScale{exponent};
    for (std::size_t i = 0; i < len; ++i) {
        const std::uint8_t byte = bytes[i / 2];
        block.codes[i] = Fp4Code{static_cast<std::uint8_t>(i % 2 == 0 ? byte & 0x0Fu : byte >> 4)};
    }
    return block;
}

}  // namespace mxfp4
